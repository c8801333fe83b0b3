#include "phasemap/decoder.hpp"

#include "phasemap/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace phasemap {

void LatentBounds::validate() const {
  if (!(s_max > 0.0 && s_max < 1.0)) throw std::invalid_argument("latent bounds: need 0 < s_max < 1");
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) throw std::invalid_argument("latent bounds: need 0 < sigma_min < sigma_max");
  if (!(b_min < b_max)) throw std::invalid_argument("latent bounds: need b_min < b_max");
}

void LatentState::validate(const LatentBounds& bounds) const {
  const std::size_t m = P.size();
  if (alpha.size() != m || sigma.size() != m || amp.size() != m * k) {
    throw std::invalid_argument("latent state: inconsistent sizes");
  }
  double total = 0.0;
  for (double p : P) {
    if (p < 0.0) throw std::invalid_argument("latent state: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("latent state: probabilities do not sum to 1");
  for (std::size_t j = 0; j < m; ++j) {
    if (alpha[j] < 1.0 - bounds.s_max - 1e-12 || alpha[j] > 1.0 + bounds.s_max + 1e-12) {
      throw std::invalid_argument("latent state: shift ratio out of bounds");
    }
    if (sigma[j] < bounds.sigma_min - 1e-12 || sigma[j] > bounds.sigma_max + 1e-12) {
      throw std::invalid_argument("latent state: width out of bounds");
    }
  }
  for (double b : amp) {
    if (b < bounds.b_min - 1e-12 || b > bounds.b_max + 1e-12) throw std::invalid_argument("latent state: amplitude out of bounds");
  }
}

namespace {

// Grid index range [lo, hi] covered by a truncated Gaussian at center c.
std::pair<std::ptrdiff_t, std::ptrdiff_t> window(const QGrid& grid, double center, double sigma) {
  const double half = kRenderWindowSigmas * sigma;
  const double step = grid.step();
  const auto d = static_cast<std::ptrdiff_t>(grid.size());
  auto lo = static_cast<std::ptrdiff_t>(std::ceil((center - half - grid.q_min()) / step));
  auto hi = static_cast<std::ptrdiff_t>(std::floor((center + half - grid.q_min()) / step));
  lo = std::max<std::ptrdiff_t>(lo, 0);
  hi = std::min<std::ptrdiff_t>(hi, d - 1);
  return {lo, hi};
}

double amp_at(std::span<const double> amp, std::size_t k) { return k < amp.size() ? amp[k] : 1.0; }

void render_into(const StickPattern& proto, double alpha, double sigma, std::span<const double> amp, const QGrid& grid,
                 std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const double q0 = grid.q_min();
  const double step = grid.step();
  for (std::size_t k = 0; k < proto.peaks.size(); ++k) {
    const double center = alpha * proto.peaks[k].q;
    const double w = amp_at(amp, k) * proto.peaks[k].intensity;
    const auto [lo, hi] = window(grid, center, sigma);
    for (std::ptrdiff_t i = lo; i <= hi; ++i) {
      const double dq = q0 + step * static_cast<double>(i) - center;
      out[static_cast<std::size_t>(i)] += w * std::exp(-dq * dq * inv2s2);
    }
  }
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

std::vector<double> render_phase_raw(const StickPattern& proto, double alpha, double sigma, std::span<const double> amp,
                                     const QGrid& grid) {
  std::vector<double> out(grid.size());
  render_into(proto, alpha, sigma, amp, grid, out);
  return out;
}

PhaseRender render_phase(const StickPattern& proto, double alpha, double sigma, std::span<const double> amp,
                         const QGrid& grid) {
  if (!(sigma > 0.0)) throw std::invalid_argument("render_phase: sigma must be positive");
  PhaseRender r;
  r.values = render_phase_raw(proto, alpha, sigma, amp, grid);
  const double top = *std::max_element(r.values.begin(), r.values.end());
  r.in_range = top > 0.0;
  if (r.in_range) {
    for (double& v : r.values) v /= top;
  }
  return r;
}

PhaseRender render_phase_jacobian(const StickPattern& proto, double alpha, double sigma, std::span<const double> amp,
                                  const QGrid& grid, std::vector<double>& jacobian) {
  const std::size_t d = grid.size();
  const std::size_t np = proto.peaks.size();
  const std::size_t cols = 2 + np;
  std::vector<double> u(d, 0.0);
  std::vector<double> du(d * cols, 0.0);
  const double inv_s2 = 1.0 / (sigma * sigma);
  for (std::size_t k = 0; k < np; ++k) {
    const double qk = proto.peaks[k].q;
    const double ak = proto.peaks[k].intensity;
    const double bk = amp_at(amp, k);
    const double center = alpha * qk;
    const auto [lo, hi] = window(grid, center, sigma);
    for (std::ptrdiff_t ii = lo; ii <= hi; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double dq = grid[i] - center;
      const double g = std::exp(-0.5 * dq * dq * inv_s2);
      u[i] += bk * ak * g;
      du[i * cols + 0] += bk * ak * g * dq * qk * inv_s2;
      du[i * cols + 1] += bk * ak * g * dq * dq * inv_s2 / sigma;
      du[i * cols + 2 + k] += ak * g;
    }
  }
  PhaseRender r;
  const std::size_t m = argmax(u);
  const double top = u[m];
  r.in_range = top > 0.0;
  jacobian.assign(d * cols, 0.0);
  r.values = u;
  if (!r.in_range) return r;
  for (std::size_t i = 0; i < d; ++i) {
    r.values[i] = u[i] / top;
    for (std::size_t c = 0; c < cols; ++c) {
      jacobian[i * cols + c] = (du[i * cols + c] - r.values[i] * du[m * cols + c]) / top;
    }
  }
  return r;
}

std::vector<double> mix(std::span<const std::vector<double>> renders, std::span<const double> P) {
  if (renders.size() != P.size()) throw std::invalid_argument("mix: render count does not match probability count");
  if (renders.empty()) return {};
  std::vector<double> out(renders.front().size(), 0.0);
  for (std::size_t j = 0; j < renders.size(); ++j) {
    if (renders[j].size() != out.size()) throw std::invalid_argument("mix: renders differ in length");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += P[j] * renders[j][i];
  }
  max_normalize(out);
  return out;
}

namespace {

// Area-normalized copies with eps added; returns false if the raw area is zero.
bool area_normalize(std::span<const double> x, double eps, std::vector<double>& out, double& total) {
  double raw = 0.0;
  for (double v : x) raw += v;
  out.resize(x.size());
  total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] + eps;
    total += out[i];
  }
  for (double& v : out) v /= total;
  return raw > 0.0;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  double jsd = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) jsd += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) jsd += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(jsd, 0.0);
}

}  // namespace

double js_distance(std::span<const double> a, std::span<const double> b, double eps) {
  if (a.size() != b.size()) throw std::invalid_argument("js_distance: length mismatch");
  std::vector<double> p, q;
  double sa = 0.0, sb = 0.0;
  const bool ok_a = area_normalize(a, eps, p, sa);
  const bool ok_b = area_normalize(b, eps, q, sb);
  if (!ok_a || !ok_b) throw std::domain_error("js_distance: zero-area pattern");
  // Symmetric evaluation order keeps js(a, b) bit-identical to js(b, a).
  double jsd = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lo = std::min(p[i], q[i]);
    const double hi = std::max(p[i], q[i]);
    const double m = 0.5 * (lo + hi);
    jsd += 0.5 * lo * std::log(lo / m) + 0.5 * hi * std::log(hi / m);
  }
  return std::sqrt(std::max(jsd, 0.0));
}

ReconstructionTerms reconstruction_loss(std::span<const double> xhat, std::span<const double> x) {
  if (xhat.size() != x.size()) throw std::invalid_argument("reconstruction_loss: length mismatch");
  ReconstructionTerms t;
  t.js = js_distance(xhat, x);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (xhat[i] - x[i]) * (xhat[i] - x[i]);
  t.l2 = std::sqrt(s);
  t.total = kJsWeight * t.js + kL2Weight * t.l2;
  return t;
}

// ---------------------------------------------------------------- tape ops

nd::Var render_phases(nd::Var alpha, nd::Var sigma, nd::Var amp, const PrototypeLibrary& lib, const QGrid& grid,
                      std::size_t k, unsigned workers) {
  const std::size_t m = lib.size();
  const std::size_t d = grid.size();
  const nd::Tensor& av = alpha.value();
  const nd::Tensor& sv = sigma.value();
  const nd::Tensor& bv = amp.value();
  if (av.rank() != 2 || av.dim(1) != m || sv.shape() != av.shape()) {
    throw nd::ShapeError("render_phases: alpha/sigma must be [B," + std::to_string(m) + "], got " + nd::to_string(av.shape()) +
                         " and " + nd::to_string(sv.shape()));
  }
  const std::size_t batch = av.dim(0);
  if (bv.rank() != 2 || bv.dim(0) != batch || bv.dim(1) != m * k) {
    throw nd::ShapeError("render_phases: amp must be [B," + std::to_string(m * k) + "], got " + nd::to_string(bv.shape()));
  }
  if (lib.max_peaks() > k) throw nd::ShapeError("render_phases: library has more peaks than amplitude slots");
  for (double s : sv.values()) {
    if (!(s > 0.0)) throw nd::DomainError("render_phases: non-positive sigma");
  }

  nd::Tensor out = nd::Tensor::zeros({batch, m * d});
  auto tops = std::make_shared<std::vector<double>>(batch * m, 0.0);
  auto argmaxes = std::make_shared<std::vector<std::size_t>>(batch * m, 0);
  parallel_for(batch, workers, [&](std::size_t b) {
    for (std::size_t j = 0; j < m; ++j) {
      std::span<double> row = out.values().subspan(b * m * d + j * d, d);
      render_into(lib[j], av.at(b, j), sv.at(b, j), bv.values().subspan(b * m * k + j * k, k), grid, row);
      const std::size_t am = argmax(row);
      const double top = row[am];
      (*tops)[b * m + j] = top;
      (*argmaxes)[b * m + j] = am;
      if (top > 0.0) {
        for (double& v : row) v /= top;
      }
    }
  });

  nd::Tape& tape = alpha.tape();
  const std::size_t ia = alpha.id(), is = sigma.id(), ib = amp.id();
  const std::size_t io = tape.size();
  nd::Tape* tp = &tape;
  const PrototypeLibrary* libp = &lib;
  const QGrid g = grid;
  return tape.custom(
      "render_phases", {alpha, sigma, amp}, std::move(out),
      [=](const nd::Tensor& grad, std::span<nd::Tensor> grads) {
        const nd::Tensor& av = tp->value_of(ia);
        const nd::Tensor& sv = tp->value_of(is);
        const nd::Tensor& bv = tp->value_of(ib);
        const nd::Tensor& rv = tp->value_of(io);
        parallel_for(batch, workers, [&](std::size_t b) {
          std::vector<double> gu(d);
          for (std::size_t j = 0; j < m; ++j) {
            const double top = (*tops)[b * m + j];
            if (!(top > 0.0)) continue;
            const std::size_t off = b * m * d + j * d;
            double dot = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
              gu[i] = grad[off + i] / top;
              dot += grad[off + i] * rv[off + i];
            }
            gu[(*argmaxes)[b * m + j]] -= dot / top;

            const StickPattern& proto = (*libp)[j];
            const double a = av.at(b, j);
            const double s = sv.at(b, j);
            const double inv_s2 = 1.0 / (s * s);
            double g_alpha = 0.0;
            double g_sigma = 0.0;
            for (std::size_t kk = 0; kk < proto.peaks.size(); ++kk) {
              const double qk = proto.peaks[kk].q;
              const double ak = proto.peaks[kk].intensity;
              const double bk = bv[b * m * k + j * k + kk];
              const double center = a * qk;
              const auto [lo, hi] = window(g, center, s);
              double g_amp = 0.0;
              for (std::ptrdiff_t ii = lo; ii <= hi; ++ii) {
                const auto i = static_cast<std::size_t>(ii);
                const double dq = g[i] - center;
                const double w = gu[i] * ak * std::exp(-0.5 * dq * dq * inv_s2);
                g_amp += w;
                g_alpha += bk * w * dq * qk * inv_s2;
                g_sigma += bk * w * dq * dq * inv_s2 / s;
              }
              grads[2][b * m * k + j * k + kk] += g_amp;
            }
            grads[0][b * m + j] += g_alpha;
            grads[1][b * m + j] += g_sigma;
          }
        });
      });
}

nd::Var mix(nd::Var P, nd::Var renders) {
  const nd::Tensor& pv = P.value();
  const nd::Tensor& rv = renders.value();
  if (pv.rank() != 2 || rv.rank() != 2 || pv.dim(0) != rv.dim(0) || rv.dim(1) % pv.dim(1) != 0) {
    throw nd::ShapeError("mix: expected P [B,M] and renders [B,M*D], got " + nd::to_string(pv.shape()) + " and " +
                         nd::to_string(rv.shape()));
  }
  const std::size_t batch = pv.dim(0);
  const std::size_t m = pv.dim(1);
  const std::size_t d = rv.dim(1) / m;
  nd::Tensor out = nd::Tensor::zeros({batch, d});
  auto tops = std::make_shared<std::vector<double>>(batch, 0.0);
  auto argmaxes = std::make_shared<std::vector<std::size_t>>(batch, 0);
  auto raw = std::make_shared<std::vector<double>>(batch * d, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double* y = raw->data() + b * d;
    for (std::size_t j = 0; j < m; ++j) {
      const double pj = pv.at(b, j);
      const double* r = rv.values().data() + b * m * d + j * d;
      for (std::size_t i = 0; i < d; ++i) y[i] += pj * r[i];
    }
    const std::size_t am = static_cast<std::size_t>(std::max_element(y, y + d) - y);
    (*tops)[b] = y[am];
    (*argmaxes)[b] = am;
    for (std::size_t i = 0; i < d; ++i) out[b * d + i] = y[am] > 0.0 ? y[i] / y[am] : 0.0;
  }
  nd::Tape& tape = P.tape();
  const std::size_t ip = P.id(), ir = renders.id();
  nd::Tape* tp = &tape;
  return tape.custom("mix", {P, renders}, std::move(out), [=](const nd::Tensor& grad, std::span<nd::Tensor> grads) {
    const nd::Tensor& pv = tp->value_of(ip);
    const nd::Tensor& rv = tp->value_of(ir);
    std::vector<double> gy(d);
    for (std::size_t b = 0; b < batch; ++b) {
      const double top = (*tops)[b];
      if (!(top > 0.0)) continue;
      const double* y = raw->data() + b * d;
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        gy[i] = grad[b * d + i] / top;
        dot += grad[b * d + i] * y[i];
      }
      gy[(*argmaxes)[b]] -= dot / (top * top);
      for (std::size_t j = 0; j < m; ++j) {
        const double pj = pv.at(b, j);
        const std::size_t off = b * m * d + j * d;
        double gp = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          gp += gy[i] * rv[off + i];
          grads[1][off + i] += gy[i] * pj;
        }
        grads[0][b * m + j] += gp;
      }
    }
  });
}

nd::Var reconstruction_loss(nd::Var xhat, const nd::Tensor& x) {
  const nd::Tensor& xv = xhat.value();
  if (xv.rank() != 2 || xv.shape() != x.shape()) {
    throw nd::ShapeError("reconstruction_loss: shapes " + nd::to_string(xv.shape()) + " and " + nd::to_string(x.shape()) +
                         " differ");
  }
  const std::size_t batch = xv.dim(0);
  const std::size_t d = xv.dim(1);
  nd::Tensor out = nd::Tensor::zeros({batch});
  // Cached per point: area-normalized prediction p, its normalizer, js, l2.
  struct Cache {
    std::vector<double> p, q;
    double total_p = 0.0, js = 0.0, l2 = 0.0;
  };
  auto cache = std::make_shared<std::vector<Cache>>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Cache& c = (*cache)[b];
    double total_q = 0.0;
    const bool ok_p = area_normalize(xv.values().subspan(b * d, d), kJsEpsilon, c.p, c.total_p);
    const bool ok_q = area_normalize(x.values().subspan(b * d, d), kJsEpsilon, c.q, total_q);
    if (!ok_p || !ok_q) throw std::domain_error("reconstruction_loss: zero-area pattern at batch row " + std::to_string(b));
    c.js = std::sqrt(js_divergence(c.p, c.q));
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double diff = xv[b * d + i] - x[b * d + i];
      s += diff * diff;
    }
    c.l2 = std::sqrt(s);
    out[b] = kJsWeight * c.js + kL2Weight * c.l2;
  }
  nd::Tape& tape = xhat.tape();
  const std::size_t ix = xhat.id();
  nd::Tape* tp = &tape;
  nd::Tensor target = x;
  return tape.custom("reconstruction_loss", {xhat}, std::move(out),
                     [=](const nd::Tensor& grad, std::span<nd::Tensor> grads) {
                       const nd::Tensor& xv = tp->value_of(ix);
                       std::vector<double> gp(d);
                       for (std::size_t b = 0; b < batch; ++b) {
                         const Cache& c = (*cache)[b];
                         const double gb = grad[b];
                         if (gb == 0.0) continue;
                         if (c.js > 0.0) {
                           // d js / d p_i = ln(p_i / m_i) / (4 js)
                           double dot = 0.0;
                           for (std::size_t i = 0; i < d; ++i) {
                             const double m = 0.5 * (c.p[i] + c.q[i]);
                             gp[i] = std::log(c.p[i] / m) / (4.0 * c.js);
                             dot += gp[i] * c.p[i];
                           }
                           for (std::size_t i = 0; i < d; ++i) {
                             grads[0][b * d + i] += gb * kJsWeight * (gp[i] - dot) / c.total_p;
                           }
                         }
                         if (c.l2 > 0.0) {
                           for (std::size_t i = 0; i < d; ++i) {
                             grads[0][b * d + i] += gb * kL2Weight * (xv[b * d + i] - target[b * d + i]) / c.l2;
                           }
                         }
                       }
                     });
}

}  // namespace phasemap
