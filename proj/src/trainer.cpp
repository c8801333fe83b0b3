#include "phasemap/trainer.hpp"

#include "phasemap/decoder.hpp"
#include "phasemap/relax.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace phasemap {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
  if (!(lambda_ks >= 0.0) || !(lambda_conn >= 0.0) || !(lambda_card >= 0.0)) throw std::invalid_argument("train config: penalty weights must be >= 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("train config: need 0 < gamma < 1");
  if (!(rho > 1.0)) throw std::invalid_argument("train config: need rho > 1");
  if (!(weight_cap >= 1.0)) throw std::invalid_argument("train config: weight cap must be >= 1");
  if (paths_per_step < 1 || pool_size < 1) throw std::invalid_argument("train config: need at least one path per step");
  if (path_len < 2) throw std::invalid_argument("train config: path_len must be >= 2");
  if (alloy_confirmations < 1) throw std::invalid_argument("train config: alloy_confirmations must be >= 1");
  if (adjust_every < 1) throw std::invalid_argument("train config: adjust_every must be >= 1");
  if (!(eps_active > 0.0)) throw std::invalid_argument("train config: eps_active must be positive");
}

ThresholdState ThresholdState::initial(std::size_t n) {
  ThresholdState s;
  s.c.assign(n, std::log(3.0));
  s.k.assign(n, 3);
  return s;
}

ViolationReport& ViolationReport::operator+=(const ViolationReport& o) {
  ksparsity_checks += o.ksparsity_checks;
  ksparsity_violations += o.ksparsity_violations;
  connectivity_checks += o.connectivity_checks;
  connectivity_violations += o.connectivity_violations;
  return *this;
}

namespace {

std::vector<std::size_t> active_set(const std::vector<double>& p, double eps) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] > eps) out.push_back(j);
  }
  return out;
}

}  // namespace

ThresholdState adjust_thresholds(ThresholdState state, std::span<const std::size_t> points,
                                 std::span<const LatentState> latents, std::span<const BatchEdge> edges,
                                 const TrainConfig& cfg, bool check_alloy) {
  if (points.size() != latents.size()) throw std::invalid_argument("adjust_thresholds: points/latents size mismatch");
  const double ln2 = std::log(2.0);
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t p = points[i];
    if (!seen.insert(p).second) continue;
    const auto& P = latents[i].P;
    const double h = relax::entropy(P);
    if (h <= state.c.at(p) && relax::active_count(P, cfg.eps_active) > static_cast<std::size_t>(state.k.at(p))) {
      state.c[p] *= cfg.gamma;
    }
  }
  if (check_alloy && cfg.alloy_rule) {
    for (const BatchEdge& e : edges) {
      const std::size_t u = points[e.a];
      const std::size_t v = points[e.b];
      if (u == v) continue;
      const Edge key{std::min(u, v), std::max(u, v)};
      if (state.alloyed_edges.contains(key)) continue;
      const auto su = active_set(latents[e.a].P, cfg.eps_active);
      if (su.empty() || su != active_set(latents[e.b].P, cfg.eps_active)) continue;
      const auto flags = relax::detect_alloying(latents[e.a].alpha, latents[e.b].alpha, su, cfg.alloy_threshold);
      if (std::find(flags.begin(), flags.end(), true) == flags.end()) continue;
      if (++state.alloy_hits[key] >= cfg.alloy_confirmations) {
        state.alloy_hits.erase(key);
        state.alloyed_edges.insert(key);
      }
    }
  }
  for (const Edge& e : state.alloyed_edges) {
    for (std::size_t p : {e.u, e.v}) {
      state.k[p] = 2;
      state.c[p] = std::min(state.c[p], ln2);
    }
  }
  return state;
}

ViolationReport check_violations(const ThresholdState& state, std::span<const LatentState> latents,
                                 const CompositionGraph& graph, const TrainConfig& cfg) {
  if (latents.size() != graph.size() || state.k.size() != graph.size()) {
    throw std::invalid_argument("check_violations: latents, thresholds and graph disagree in size");
  }
  ViolationReport r;
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    auto set = active_set(latents[i].P, cfg.eps_active);
    ++r.ksparsity_checks;
    if (set.size() > static_cast<std::size_t>(state.k[i])) ++r.ksparsity_violations;
    members[std::move(set)].push_back(i);
  }
  for (const auto& [set, points] : members) {
    ++r.connectivity_checks;
    if (!graph.is_connected_subset(points)) ++r.connectivity_violations;
  }
  return r;
}

PenaltyWeights adjust_weights(PenaltyWeights current, const PenaltyWeights& initial, const ViolationReport& report,
                              const TrainConfig& cfg) {
  auto violated = [&](std::size_t bad, std::size_t checks) {
    return checks > 0 && static_cast<double>(bad) > cfg.violation_tolerance * static_cast<double>(checks);
  };
  if (violated(report.ksparsity_violations, report.ksparsity_checks)) {
    current.ksparsity = std::min(current.ksparsity * cfg.rho, initial.ksparsity * cfg.weight_cap);
  }
  if (violated(report.connectivity_violations, report.connectivity_checks)) {
    current.connectivity = std::min(current.connectivity * cfg.rho, initial.connectivity * cfg.weight_cap);
  }
  return current;
}

std::string format_log(std::span<const StepLog> log) {
  std::string out;
  for (const StepLog& s : log) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["total"] = s.total;
    j["reconstruction"] = s.reconstruction;
    j["js"] = s.js;
    j["ksparsity"] = s.ksparsity;
    j["connectivity"] = s.connectivity;
    j["cardinality"] = s.cardinality;
    j["lambda_ks"] = s.lambda_ks;
    j["lambda_conn"] = s.lambda_conn;
    j["batch_points"] = s.batch_points;
    j["ks_violations"] = s.ks_violations;
    j["conn_violations"] = s.conn_violations;
    j["mean_threshold"] = s.mean_threshold;
    j["min_threshold"] = s.min_threshold;
    j["alloyed_points"] = s.alloyed_points;
    out += j.dump();
    out += '\n';
  }
  return out;
}

EncoderConfig encoder_config_for(const XrdDataset& ds, const PrototypeLibrary& lib, std::vector<std::size_t> hidden,
                                 std::vector<std::size_t> amp_hidden, LatentBounds bounds) {
  EncoderConfig cfg;
  cfg.d = ds.grid.size();
  cfg.m = lib.size();
  cfg.k = lib.max_peaks();
  cfg.hidden = std::move(hidden);
  cfg.amp_hidden = std::move(amp_hidden);
  cfg.bounds = bounds;
  cfg.validate();
  return cfg;
}

namespace {

std::vector<LatentState> latents_of(const LatentVars& lv, std::size_t batch, const EncoderConfig& enc) {
  std::vector<LatentState> out(batch);
  const std::size_t m = enc.m;
  for (std::size_t i = 0; i < batch; ++i) {
    auto row = [&](const nd::Var& v, std::size_t width) {
      auto vals = v.value().values().subspan(i * width, width);
      return std::vector<double>(vals.begin(), vals.end());
    };
    out[i].k = enc.k;
    out[i].P = row(lv.P, m);
    out[i].alpha = row(lv.alpha, m);
    out[i].sigma = row(lv.sigma, m);
    out[i].amp = row(lv.amp, m * enc.k);
  }
  return out;
}

}  // namespace

TrainResult train(const XrdDataset& ds, const PrototypeLibrary& lib, const EncoderConfig& enc, const TrainConfig& cfg,
                  const std::optional<EncoderParams>& warm_start) {
  cfg.validate();
  enc.validate();
  if (enc.d != ds.grid.size() || enc.m != lib.size() || enc.k < lib.max_peaks()) {
    throw std::invalid_argument("train: encoder configuration does not match dataset/library");
  }
  if (ds.n == 0) throw std::invalid_argument("train: empty dataset");
  for (const auto& proto : lib.prototypes()) {
    for (const Peak& pk : proto.peaks) {
      if (!ds.grid.contains(pk.q)) throw std::invalid_argument("train: prototype '" + proto.phase_id + "' has peaks off the dataset grid");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  const std::uint64_t init_seed = rng();
  const std::uint64_t pool_seed = rng();
  TrainResult result;
  result.params = warm_start ? *warm_start : init_params(enc, init_seed);
  result.thresholds = ThresholdState::initial(ds.n);
  const PenaltyWeights initial{cfg.lambda_ks, cfg.lambda_conn};
  result.weights = initial;

  const std::vector<Path> pool = build_path_pool(ds.graph, cfg.pool_size, cfg.path_len, pool_seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const std::size_t d = ds.grid.size();
  const nd::ParamStore::AdamOptions adam{cfg.lr};
  ViolationReport last_report;

  std::vector<std::size_t> points;
  std::vector<std::vector<std::size_t>> local_paths;  // batch positions per path
  std::vector<BatchEdge> edges;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    points.clear();
    local_paths.clear();
    edges.clear();
    for (std::size_t p = 0; p < cfg.paths_per_step; ++p) {
      const Path& path = pool[pick(rng)];
      std::vector<std::size_t> local;
      for (std::size_t t = 0; t < path.size(); ++t) {
        local.push_back(points.size());
        if (t > 0) edges.push_back({points.size() - 1, points.size()});
        points.push_back(path[t]);
      }
      local_paths.push_back(std::move(local));
    }
    const std::size_t batch = points.size();
    std::vector<double> xs(batch * d);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto pat = ds.pattern(points[b]);
      std::copy(pat.begin(), pat.end(), xs.begin() + static_cast<std::ptrdiff_t>(b * d));
    }
    nd::Tensor target({batch, d}, xs);

    nd::Tape tape;
    const BoundParams bound = bind_params(tape, result.params);
    nd::Var x = tape.constant(target);
    const LatentVars lv = encode(x, bound, enc);

    // Bookkeeping on the current latents, before the update.
    const bool bookkeeping = step >= cfg.warmup_steps;
    if (bookkeeping) {
      const auto current = latents_of(lv, batch, enc);
      result.thresholds = adjust_thresholds(std::move(result.thresholds), points, current, edges, cfg);
      if ((step - cfg.warmup_steps + 1) % cfg.adjust_every == 0) {
        const auto everywhere = encode(ds.intensities, ds.n, result.params, enc);
        last_report = check_violations(result.thresholds, everywhere, ds.graph, cfg);
        result.weights = adjust_weights(result.weights, initial, last_report, cfg);
      }
    }

    nd::Var renders = render_phases(lv.alpha, lv.sigma, lv.amp, lib, ds.grid, enc.k, cfg.workers);
    nd::Var xhat = mix(lv.P, renders);
    nd::Var recon_rows = reconstruction_loss(xhat, target);
    nd::Var recon = nd::mean(recon_rows);

    nd::Tensor thresholds = nd::Tensor::zeros({batch});
    for (std::size_t b = 0; b < batch; ++b) thresholds[b] = result.thresholds.c[points[b]];
    nd::Var ks = nd::mean(relax::ksparsity_penalty(lv.P, thresholds));

    std::vector<nd::Var> conn_terms;
    for (const auto& local : local_paths) {
      if (local.size() < 2) continue;
      const std::size_t first = local.front();
      const std::size_t last = local.back();
      conn_terms.push_back(nd::sum(relax::connectivity_penalty(nd::slice(lv.P, 0, first, last),
                                                               nd::slice(lv.P, 0, first + 1, last + 1))));
    }
    nd::Var total = nd::add(recon, nd::scale(ks, result.weights.ksparsity));
    double card_value = 0.0;
    if (cfg.lambda_card > 0.0) {
      nd::Var card = nd::mean(relax::entropy(lv.P));
      card_value = card.value().item();
      total = nd::add(total, nd::scale(card, cfg.lambda_card));
    }
    double conn_value = 0.0;
    if (!conn_terms.empty()) {
      nd::Var conn_sum = conn_terms.front();
      for (std::size_t t = 1; t < conn_terms.size(); ++t) conn_sum = nd::add(conn_sum, conn_terms[t]);
      nd::Var conn = nd::scale(conn_sum, 1.0 / static_cast<double>(cfg.paths_per_step));
      conn_value = conn.value().item();
      total = nd::add(total, nd::scale(conn, result.weights.connectivity));
    }

    StepLog entry;
    entry.step = step;
    entry.total = total.value().item();
    entry.reconstruction = recon.value().item();
    double js = 0.0;
    {
      for (std::size_t b = 0; b < batch; ++b) {
        js += js_distance(xhat.value().values().subspan(b * d, d), target.values().subspan(b * d, d));
      }
      js /= static_cast<double>(batch);
    }
    entry.js = js;
    entry.ksparsity = ks.value().item();
    entry.connectivity = conn_value;
    entry.cardinality = card_value;
    entry.lambda_ks = result.weights.ksparsity;
    entry.lambda_conn = result.weights.connectivity;
    entry.batch_points = batch;
    entry.ks_violations = last_report.ksparsity_violations;
    entry.conn_violations = last_report.connectivity_violations;
    const auto& c = result.thresholds.c;
    entry.mean_threshold = std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
    entry.min_threshold = *std::min_element(c.begin(), c.end());
    entry.alloyed_points = static_cast<std::size_t>(std::count(result.thresholds.k.begin(), result.thresholds.k.end(), 2));

    if (!std::isfinite(entry.total)) {
      throw TrainingDiverged("training diverged at step " + std::to_string(step) + ": loss is not finite (reconstruction " +
                                 std::to_string(entry.reconstruction) + ")",
                             result.params, step);
    }
    const nd::GradMap grads = tape.backward(total);
    result.params.adam_step(grads, adam);
    result.log.push_back(entry);
  }

  result.latents = encode(ds.intensities, ds.n, result.params, enc);
  return result;
}

}  // namespace phasemap
