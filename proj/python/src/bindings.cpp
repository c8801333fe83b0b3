#include "phasemap/cli.hpp"
#include "phasemap/pipeline.hpp"
#include "phasemap/relax.hpp"
#include "phasemap/solution_io.hpp"
#include "phasemap/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace phasemap;

namespace {

py::array_t<double> as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  py::array_t<double> out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> as_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  return std::vector<double>(a.data(), a.data() + a.size());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Unsupervised phase mapping of X-ray diffraction composition maps";

  py::class_<QGrid>(m, "QGrid")
      .def(py::init<double, double, std::size_t>(), py::arg("q_min"), py::arg("q_max"), py::arg("d"))
      .def_property_readonly("q_min", &QGrid::q_min)
      .def_property_readonly("q_max", &QGrid::q_max)
      .def_property_readonly("size", &QGrid::size)
      .def("values", &QGrid::values);

  py::class_<StickPattern>(m, "StickPattern")
      .def_readonly("phase_id", &StickPattern::phase_id)
      .def_property_readonly("peaks", [](const StickPattern& s) {
        std::vector<std::pair<double, double>> out;
        for (const auto& p : s.peaks) out.emplace_back(p.q, p.intensity);
        return out;
      });

  py::class_<PrototypeLibrary>(m, "PrototypeLibrary")
      .def("__len__", &PrototypeLibrary::size)
      .def("__getitem__", [](const PrototypeLibrary& l, std::size_t j) { return l[j]; })
      .def_property_readonly("phase_ids", [](const PrototypeLibrary& l) {
        std::vector<std::string> ids;
        for (const auto& p : l.prototypes()) ids.push_back(p.phase_id);
        return ids;
      });

  py::class_<XrdDataset>(m, "Dataset")
      .def_readonly("n", &XrdDataset::n)
      .def_readonly("grid", &XrdDataset::grid)
      .def_property_readonly("intensities",
                             [](const XrdDataset& d) { return as_matrix(d.intensities, d.n, d.grid.size()); })
      .def_property_readonly("compositions", [](const XrdDataset& d) { return d.graph.points(); })
      .def_property_readonly("edges", [](const XrdDataset& d) {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const auto& e : d.graph.edges()) out.emplace_back(e.u, e.v);
        return out;
      })
      .def("subset", [](const XrdDataset& d, std::vector<std::size_t> idx) { return d.subset(idx); });

  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def(
      "load_prototypes",
      [](const std::filesystem::path& p, const QGrid& g) { return load_prototypes(p, g); }, py::arg("path"),
      py::arg("grid"));

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("phases", &SynthSpec::phases)
      .def_readwrite("peaks_min", &SynthSpec::peaks_min)
      .def_readwrite("peaks_max", &SynthSpec::peaks_max)
      .def_readwrite("q_min", &SynthSpec::q_min)
      .def_readwrite("q_max", &SynthSpec::q_max)
      .def_readwrite("d", &SynthSpec::d)
      .def_readwrite("side", &SynthSpec::side)
      .def_readwrite("fields", &SynthSpec::fields)
      .def_readwrite("alloy_gradient", &SynthSpec::alloy_gradient)
      .def_readwrite("alloy_fraction", &SynthSpec::alloy_fraction)
      .def_readwrite("noise", &SynthSpec::noise)
      .def_readwrite("overlap", &SynthSpec::overlap)
      .def_readwrite("max_phases", &SynthSpec::max_phases);

  py::class_<GroundTruth>(m, "GroundTruth")
      .def_property_readonly("activations", [](const GroundTruth& t) { return as_matrix(t.activations, t.n, t.m); })
      .def_property_readonly("alpha", [](const GroundTruth& t) { return as_matrix(t.alpha, t.n, t.m); })
      .def("active_sets", &GroundTruth::active_sets);

  py::class_<Benchmark>(m, "Benchmark")
      .def_readonly("dataset", &Benchmark::dataset)
      .def_readonly("library", &Benchmark::library)
      .def_readonly("truth", &Benchmark::truth);

  m.def("generate", &generate, py::arg("spec"), py::arg("seed") = 0);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("paths_per_step", &TrainConfig::paths_per_step)
      .def_readwrite("path_len", &TrainConfig::path_len)
      .def_readwrite("pool_size", &TrainConfig::pool_size)
      .def_readwrite("lambda_ks", &TrainConfig::lambda_ks)
      .def_readwrite("lambda_conn", &TrainConfig::lambda_conn)
      .def_readwrite("lambda_card", &TrainConfig::lambda_card)
      .def_readwrite("warmup_steps", &TrainConfig::warmup_steps)
      .def_readwrite("adjust_every", &TrainConfig::adjust_every)
      .def_readwrite("alloy_rule", &TrainConfig::alloy_rule)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<SolveOptions>(m, "SolveOptions")
      .def(py::init<>())
      .def_readwrite("train", &SolveOptions::train)
      .def_readwrite("hidden", &SolveOptions::hidden)
      .def_readwrite("amp_hidden", &SolveOptions::amp_hidden)
      .def_readwrite("cutoff", &SolveOptions::cutoff);

  py::class_<RuleReport>(m, "RuleReport")
      .def_readonly("gibbs_rate", &RuleReport::gibbs_rate)
      .def_readonly("gibbs_alloy_rate", &RuleReport::gibbs_alloy_rate)
      .def_readonly("connectivity_rate", &RuleReport::connectivity_rate)
      .def_readonly("alloyed", &RuleReport::alloyed);

  py::class_<Solution>(m, "Solution")
      .def_readonly("phase_ids", &Solution::phase_ids)
      .def_readonly("n", &Solution::n)
      .def_property_readonly("activations", [](const Solution& s) { return as_matrix(s.activations, s.n, s.phases()); })
      .def_property_readonly("alpha", [](const Solution& s) { return as_matrix(s.alpha, s.n, s.phases()); })
      .def_property_readonly("sigma", [](const Solution& s) { return as_matrix(s.sigma, s.n, s.phases()); })
      .def_readonly("demixed", &Solution::demixed)
      .def_readonly("recon_loss", &Solution::recon_loss)
      .def("active_sets", &Solution::active_sets)
      .def("to_text", [](const Solution& s) { return format_solution(s); })
      .def_static("from_text", [](const std::string& text) {
        std::istringstream in(text);
        return parse_solution(in);
      });

  m.def(
      "solve",
      [](const XrdDataset& ds, const PrototypeLibrary& lib, const SolveOptions& opt) {
        py::gil_scoped_release release;
        SolveOutput out = solve(ds, lib, opt);
        return std::make_pair(std::move(out.solution), out.rules);
      },
      py::arg("dataset"), py::arg("library"), py::arg("options") = SolveOptions{},
      "Train on a dataset; returns (solution, rule report).");
  m.def("rule_report", [](const Solution& s, const XrdDataset& ds) { return rule_report(s, ds.graph); }, py::arg("solution"),
        py::arg("dataset"));
  m.def(
      "activation_accuracy",
      [](const std::vector<ActiveSet>& predicted, const std::vector<ActiveSet>& truth) {
        return activation_accuracy(predicted, truth);
      },
      py::arg("predicted"), py::arg("truth"));
  m.def(
      "fidelity",
      [](const Solution& s, const PrototypeLibrary& lib) { return fidelity_loss(s.demixed, lib, s.grid).per_phase; },
      py::arg("solution"), py::arg("library"), "Per-phase JS distance of demixed patterns to their best prototype.");

  m.def(
      "entropy", [](const py::array_t<double>& p) { return relax::entropy(as_vector(p)); }, py::arg("p"));
  m.def(
      "ksparsity_penalty", [](const py::array_t<double>& p, double c) { return relax::ksparsity_penalty(as_vector(p), c); },
      py::arg("p"), py::arg("threshold"));
  m.def(
      "alldiff_penalty", [](const std::vector<std::vector<double>>& ps) { return relax::alldiff_penalty(ps); }, py::arg("ps"));
  m.def(
      "demix",
      [](const py::array_t<double>& x, const PrototypeLibrary& lib, const QGrid& grid) {
        return brute_force_demix(as_vector(x), lib, grid).phases;
      },
      py::arg("pattern"), py::arg("library"), py::arg("grid"), "Exhaustive demixing of one pattern (small libraries only).");

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "phasemap");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command-line interface; returns (exit_code, stdout, stderr).");
}
