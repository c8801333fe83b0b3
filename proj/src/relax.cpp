#include "phasemap/relax.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace phasemap::relax {

void ConstraintTerm::validate(std::size_t phases) const {
  if (!(weight >= 0.0)) throw std::invalid_argument("constraint: weight must be non-negative");
  if (scope.empty()) throw std::invalid_argument("constraint: empty scope");
  if (kind == ConstraintKind::ksparsity && !(threshold > 0.0 && threshold <= std::log(static_cast<double>(phases)) + 1e-12)) {
    throw std::invalid_argument("constraint: k-sparsity threshold must lie in (0, ln M]");
  }
}

namespace {

void check_distribution(std::span<const double> p) {
  double total = 0.0;
  for (double v : p) {
    if (v < -1e-9) throw std::invalid_argument("entropy: negative probability " + std::to_string(v));
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("entropy: probabilities sum to " + std::to_string(total));
}

}  // namespace

double entropy(std::span<const double> p) {
  check_distribution(p);
  double h = 0.0;
  for (double v : p) {
    const double x = std::max(v, 0.0);
    h -= x * std::log(x + kLogGuard);
  }
  return h;
}

double cardinality_penalty(std::span<const double> p) { return entropy(p); }

double ksparsity_penalty(std::span<const double> p, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("ksparsity_penalty: threshold must be positive");
  return std::max(0.0, entropy(p) - c);
}

double alldiff_penalty(std::span<const std::vector<double>> ps) {
  if (ps.empty()) throw std::invalid_argument("alldiff_penalty: empty scope");
  const std::size_t m = ps.front().size();
  if (ps.size() > m) throw std::invalid_argument("alldiff_penalty: scope larger than the number of symbols");
  std::vector<double> avg(m, 0.0);
  double element = 0.0;
  for (const auto& p : ps) {
    if (p.size() != m) throw std::invalid_argument("alldiff_penalty: distribution length mismatch");
    element += entropy(p);
    for (std::size_t j = 0; j < m; ++j) avg[j] += p[j];
  }
  const double s = static_cast<double>(ps.size());
  for (double& v : avg) v /= s;
  return std::log(s) - entropy(avg) + element / s;
}

double connectivity_penalty(std::span<const double> pu, std::span<const double> pv) {
  if (pu.size() != pv.size()) throw std::invalid_argument("connectivity_penalty: length mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < pu.size(); ++j) s += (pu[j] - pv[j]) * (pu[j] - pv[j]);
  return std::sqrt(s);
}

std::size_t active_count(std::span<const double> p, double eps) {
  std::size_t n = 0;
  for (double v : p) n += v > eps ? 1 : 0;
  return n;
}

std::vector<bool> detect_alloying(std::span<const double> alpha_u, std::span<const double> alpha_v,
                                  std::span<const std::size_t> shared, double threshold) {
  if (alpha_u.size() != alpha_v.size()) throw std::invalid_argument("detect_alloying: length mismatch");
  std::vector<bool> out;
  out.reserve(shared.size());
  for (std::size_t j : shared) out.push_back(std::abs(alpha_u[j] - alpha_v[j]) > threshold);
  return out;
}

nd::Var entropy(nd::Var P) {
  if (P.value().rank() != 2) throw nd::ShapeError("entropy: expected [B, M], got " + nd::to_string(P.shape()));
  for (double v : P.value().values()) {
    if (v < -1e-9) throw std::invalid_argument("entropy: negative probability");
  }
  return nd::scale(nd::sum(nd::mul(P, nd::log(P, kLogGuard)), 1), -1.0);
}

nd::Var ksparsity_penalty(nd::Var P, const nd::Tensor& thresholds) {
  nd::Var h = entropy(P);
  if (thresholds.shape() != h.shape()) {
    throw nd::ShapeError("ksparsity_penalty: thresholds " + nd::to_string(thresholds.shape()) + " vs batch " +
                         nd::to_string(h.shape()));
  }
  return nd::relu(nd::sub(h, P.tape().constant(thresholds)));
}

nd::Var connectivity_penalty(nd::Var Pu, nd::Var Pv) {
  nd::Var diff = nd::sub(Pu, Pv);
  return nd::sqrt(nd::sum(nd::mul(diff, diff), 1));
}

nd::Var alldiff_penalty(nd::Var ps) {
  const nd::Tensor& v = ps.value();
  if (v.rank() != 2) throw nd::ShapeError("alldiff_penalty: expected [S, M], got " + nd::to_string(v.shape()));
  if (v.dim(0) > v.dim(1)) throw std::invalid_argument("alldiff_penalty: scope larger than the number of symbols");
  const double s = static_cast<double>(v.dim(0));
  nd::Var avg = nd::mean(ps, 0);  // [M]
  nd::Var group = nd::scale(nd::sum(nd::mul(avg, nd::log(avg, kLogGuard))), -1.0);
  nd::Var element = nd::mean(entropy(ps));
  return nd::add(nd::shift(nd::scale(group, -1.0), std::log(s)), element);
}

}  // namespace phasemap::relax
