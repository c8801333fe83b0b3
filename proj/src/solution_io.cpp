#include "phasemap/solution_io.hpp"

#include "phasemap/textio.hpp"

#include <map>
#include <sstream>
#include <stdexcept>

namespace phasemap {

namespace {

constexpr std::string_view kHeader = "# phasemap solution v1";

void append_row(std::string& out, std::span<const double> row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j > 0) out += ',';
    out += io::format_double(row[j]);
  }
  out += '\n';
}

void append_table(std::string& out, std::string_view name, const std::vector<double>& table, std::size_t n,
                  std::size_t m) {
  out += '[';
  out += name;
  out += "]\n";
  for (std::size_t i = 0; i < n; ++i) append_row(out, std::span<const double>(table).subspan(i * m, m));
}

}  // namespace

std::string format_solution(const Solution& sol, double cutoff, const std::optional<RuleReport>& rules) {
  const std::size_t m = sol.phases();
  const std::size_t n = sol.n;
  if (sol.activations.size() != n * m || sol.alpha.size() != n * m || sol.sigma.size() != n * m) {
    throw std::invalid_argument("format_solution: inconsistent table sizes");
  }
  std::string out(kHeader);
  out += "\n[meta]\n";
  out += "phases=" + std::to_string(m) + '\n';
  out += "points=" + std::to_string(n) + '\n';
  out += "q_min=" + io::format_double(sol.grid.q_min()) + '\n';
  out += "q_max=" + io::format_double(sol.grid.q_max()) + '\n';
  out += "d=" + std::to_string(sol.grid.size()) + '\n';
  out += "cutoff=" + io::format_double(cutoff) + '\n';
  out += "[phases]\n";
  for (const auto& id : sol.phase_ids) out += id + '\n';
  append_table(out, "activations", sol.activations, n, m);
  append_table(out, "alpha", sol.alpha, n, m);
  append_table(out, "sigma", sol.sigma, n, m);
  out += "[demixed]\n";
  for (std::size_t j = 0; j < m; ++j) {
    out += sol.phase_ids[j];
    const auto& pattern = j < sol.demixed.size() ? sol.demixed[j] : std::vector<double>{};
    for (double v : pattern) out += ',' + io::format_double(v);
    out += '\n';
  }
  out += "[fields]\n";
  for (const auto& f : sol.fields) {
    for (std::size_t r = 0; r < f.phases.size(); ++r) {
      if (r > 0) out += '+';
      out += sol.phase_ids.at(f.phases[r]);
    }
    out += ';';
    for (std::size_t r = 0; r < f.points.size(); ++r) {
      if (r > 0) out += ' ';
      out += std::to_string(f.points[r]);
    }
    out += '\n';
  }
  out += "[points]\n";
  for (std::size_t i = 0; i < n; ++i) {
    out += std::to_string(i) + ',';
    if (!sol.recon_loss.empty()) out += io::format_double(sol.recon_loss.at(i));
    out += ',';
    if (!sol.phase_cap.empty()) out += std::to_string(sol.phase_cap.at(i));
    out += '\n';
  }
  if (rules) {
    out += "[rules]\n";
    out += "gibbs_rate=" + io::format_double(rules->gibbs_rate) + '\n';
    out += "gibbs_alloy_rate=" + io::format_double(rules->gibbs_alloy_rate) + '\n';
    out += "connectivity_rate=" + io::format_double(rules->connectivity_rate) + '\n';
  }
  return out;
}

Solution parse_solution(std::istream& in) {
  std::map<std::string, std::vector<std::string>, std::less<>> sections;
  std::string line;
  if (!std::getline(in, line) || io::trim(line) != kHeader) {
    throw std::invalid_argument("solution: missing header '" + std::string(kHeader) + "'");
  }
  std::vector<std::string>* current = nullptr;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = io::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']') {
      const std::string name(t.substr(1, t.size() - 2));
      if (sections.contains(name)) throw std::invalid_argument("solution: duplicate section [" + name + "]");
      current = &sections[name];
      continue;
    }
    if (current == nullptr) throw std::invalid_argument("solution line " + std::to_string(lineno) + ": content before first section");
    current->emplace_back(t);
  }
  auto section = [&](std::string_view name) -> const std::vector<std::string>& {
    auto it = sections.find(name);
    if (it == sections.end()) throw std::invalid_argument("solution: missing section [" + std::string(name) + "]");
    return it->second;
  };

  std::map<std::string, std::string, std::less<>> meta;
  for (const auto& row : section("meta")) {
    const auto eq = row.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("solution [meta]: expected key=value, got '" + row + "'");
    meta[std::string(io::trim(std::string_view(row).substr(0, eq)))] = std::string(io::trim(std::string_view(row).substr(eq + 1)));
  }
  auto meta_value = [&](std::string_view key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw std::invalid_argument("solution [meta]: missing key '" + std::string(key) + "'");
    return it->second;
  };
  const auto m = static_cast<std::size_t>(io::parse_int(meta_value("phases"), "solution phases"));
  const auto n = static_cast<std::size_t>(io::parse_int(meta_value("points"), "solution points"));
  const auto d = io::parse_int(meta_value("d"), "solution d");
  if (d < 2) throw std::invalid_argument("solution [meta]: d must be >= 2");

  Solution sol;
  sol.n = n;
  sol.grid = QGrid(io::parse_double(meta_value("q_min"), "solution q_min"), io::parse_double(meta_value("q_max"), "solution q_max"),
                   static_cast<std::size_t>(d));
  sol.phase_ids = section("phases");
  if (sol.phase_ids.size() != m) throw std::invalid_argument("solution [phases]: expected " + std::to_string(m) + " ids");
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t j = 0; j < m; ++j) index[sol.phase_ids[j]] = j;

  auto read_table = [&](std::string_view name) {
    const auto& rows = section(name);
    if (rows.size() != n) {
      throw std::invalid_argument("solution [" + std::string(name) + "]: expected " + std::to_string(n) + " rows");
    }
    std::vector<double> table;
    table.reserve(n * m);
    for (std::size_t i = 0; i < n; ++i) {
      const auto cells = io::split(rows[i], ',');
      const std::string ctx = "solution [" + std::string(name) + "] row " + std::to_string(i);
      if (cells.size() != m) throw std::invalid_argument(ctx + ": expected " + std::to_string(m) + " values");
      for (auto c : cells) table.push_back(io::parse_double(c, ctx));
    }
    return table;
  };
  sol.activations = read_table("activations");
  sol.alpha = read_table("alpha");
  sol.sigma = read_table("sigma");

  sol.demixed.assign(m, {});
  for (const auto& row : section("demixed")) {
    const auto cells = io::split(row, ',');
    auto it = index.find(cells.front());
    if (it == index.end()) throw std::invalid_argument("solution [demixed]: unknown phase '" + std::string(cells.front()) + "'");
    if (cells.size() == 1) continue;
    if (cells.size() != sol.grid.size() + 1) throw std::invalid_argument("solution [demixed]: pattern length does not match grid");
    auto& pattern = sol.demixed[it->second];
    for (std::size_t c = 1; c < cells.size(); ++c) pattern.push_back(io::parse_double(cells[c], "solution [demixed]"));
  }

  for (const auto& row : section("fields")) {
    const auto semi = row.find(';');
    if (semi == std::string::npos) throw std::invalid_argument("solution [fields]: expected 'phases;points'");
    PhaseField f;
    const std::string_view ids = io::trim(std::string_view(row).substr(0, semi));
    if (!ids.empty()) {
      for (auto id : io::split(ids, '+')) {
        auto it = index.find(io::trim(id));
        if (it == index.end()) throw std::invalid_argument("solution [fields]: unknown phase '" + std::string(id) + "'");
        f.phases.push_back(it->second);
      }
    }
    for (auto p : io::split(io::trim(std::string_view(row).substr(semi + 1)), ' ')) {
      if (p.empty()) continue;
      f.points.push_back(static_cast<std::size_t>(io::parse_int(p, "solution [fields]")));
    }
    sol.fields.push_back(std::move(f));
  }

  const auto& points = section("points");
  if (points.size() != n) throw std::invalid_argument("solution [points]: expected " + std::to_string(n) + " rows");
  bool any_loss = false, any_cap = false;
  std::vector<double> losses(n, 0.0);
  std::vector<int> caps(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cells = io::split(points[i], ',');
    if (cells.size() != 3) throw std::invalid_argument("solution [points] row " + std::to_string(i) + ": expected 3 cells");
    if (!cells[1].empty()) {
      losses[i] = io::parse_double(cells[1], "solution [points]");
      any_loss = true;
    }
    if (!cells[2].empty()) {
      caps[i] = static_cast<int>(io::parse_int(cells[2], "solution [points]"));
      any_cap = true;
    }
  }
  if (any_loss) sol.recon_loss = std::move(losses);
  if (any_cap) sol.phase_cap = std::move(caps);
  return sol;
}

Solution load_solution(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  try {
    return parse_solution(in);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

}  // namespace phasemap
