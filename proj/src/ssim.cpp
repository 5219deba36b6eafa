#include "kgad/ssim.hpp"

#include <cmath>

#include "kgad/errors.hpp"

namespace kgad {
namespace {

// A single-channel plane used by the separable window filters.
struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  Plane(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_) {}
  double& operator()(int r, int c) { return v[static_cast<std::size_t>(r) * w + c]; }
  double operator()(int r, int c) const { return v[static_cast<std::size_t>(r) * w + c]; }
};

Plane channel_plane(const Image& img, int ch) {
  Plane p(img.height(), img.width());
  for (int r = 0; r < p.h; ++r)
    for (int c = 0; c < p.w; ++c) p(r, c) = img.at(r, c, ch);
  return p;
}

// Valid-mode separable correlation with window g.
Plane filter_valid(const Plane& x, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  Plane tmp(x.h, x.w - n + 1);
  for (int r = 0; r < tmp.h; ++r)
    for (int c = 0; c < tmp.w; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += g[k] * x(r, c + k);
      tmp(r, c) = acc;
    }
  Plane out(x.h - n + 1, tmp.w);
  for (int r = 0; r < out.h; ++r)
    for (int c = 0; c < out.w; ++c) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += g[k] * tmp(r + k, c);
      out(r, c) = acc;
    }
  return out;
}

// Adjoint of filter_valid: scatters each valid-position value back over its
// window.
Plane filter_valid_adjoint(const Plane& y, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  Plane tmp(y.h + n - 1, y.w);
  for (int r = 0; r < y.h; ++r)
    for (int c = 0; c < y.w; ++c)
      for (int k = 0; k < n; ++k) tmp(r + k, c) += g[k] * y(r, c);
  Plane out(tmp.h, y.w + n - 1);
  for (int r = 0; r < tmp.h; ++r)
    for (int c = 0; c < tmp.w; ++c)
      for (int k = 0; k < n; ++k) out(r, c + k) += g[k] * tmp(r, c);
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out(a.h, a.w);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

void validate(const Image& a, const Image& b, const SsimConfig& cfg) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  if (cfg.window_size < 1 || cfg.window_size % 2 == 0) {
    throw ConfigError("ssim window size must be a positive odd integer");
  }
  if (a.height() < cfg.window_size || a.width() < cfg.window_size) {
    throw SizeError("image " + a.shape().to_string() +
                    " is smaller than the ssim window");
  }
}

// Per-channel moment maps over valid window positions.
struct Moments {
  Plane mu_a, mu_b, var_a, var_b, cov;
};

Moments moments(const Plane& a, const Plane& b, const std::vector<double>& g) {
  Plane mu_a = filter_valid(a, g);
  Plane mu_b = filter_valid(b, g);
  Plane saa = filter_valid(product(a, a), g);
  Plane sbb = filter_valid(product(b, b), g);
  Plane sab = filter_valid(product(a, b), g);
  for (std::size_t i = 0; i < saa.v.size(); ++i) {
    saa.v[i] -= mu_a.v[i] * mu_a.v[i];
    sbb.v[i] -= mu_b.v[i] * mu_b.v[i];
    sab.v[i] -= mu_a.v[i] * mu_b.v[i];
  }
  return {std::move(mu_a), std::move(mu_b), std::move(saa), std::move(sbb),
          std::move(sab)};
}

}  // namespace

std::vector<double> SsimConfig::window() const {
  std::vector<double> g(window_size);
  const int half = window_size / 2;
  double sum = 0.0;
  for (int i = 0; i < window_size; ++i) {
    const double d = i - half;
    g[i] = std::exp(-(d * d) / (2.0 * window_sigma * window_sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

MetricValue ssim(const Image& a, const Image& b, const SsimConfig& cfg) {
  validate(a, b, cfg);
  const std::vector<double> g = cfg.window();
  const double c1 = cfg.c1(), c2 = cfg.c2();
  double total = 0.0;
  std::size_t count = 0;
  for (int ch = 0; ch < a.channels(); ++ch) {
    const Moments m = moments(channel_plane(a, ch), channel_plane(b, ch), g);
    for (std::size_t i = 0; i < m.mu_a.v.size(); ++i) {
      const double ma = m.mu_a.v[i], mb = m.mu_b.v[i];
      const double num = (2.0 * ma * mb + c1) * (2.0 * m.cov.v[i] + c2);
      const double den =
          (ma * ma + mb * mb + c1) * (m.var_a.v[i] + m.var_b.v[i] + c2);
      total += num / den;
    }
    count += m.mu_a.v.size();
  }
  return {"ssim", total / static_cast<double>(count), false};
}

MetricValue ssimd(const Image& a, const Image& b, const SsimConfig& cfg) {
  return {"ssimd", 1.0 - ssim(a, b, cfg).value, true};
}

Tensor ssimd_gradient(const Image& a, const Image& b, const SsimConfig& cfg) {
  validate(a, b, cfg);
  const std::vector<double> g = cfg.window();
  const double c1 = cfg.c1(), c2 = cfg.c2();
  const int positions = (a.height() - cfg.window_size + 1) *
                        (a.width() - cfg.window_size + 1);
  const double scale = 1.0 / (static_cast<double>(positions) * a.channels());

  Tensor grad(b.shape());
  for (int ch = 0; ch < a.channels(); ++ch) {
    const Plane pa = channel_plane(a, ch), pb = channel_plane(b, ch);
    const Moments m = moments(pa, pb, g);
    // Per-position partials of the local index with respect to the window
    // moments of b: mean (d_mu), raw second moment (d_sbb), raw cross moment
    // (d_sab). The form keeps all three exactly cancelling when a == b.
    Plane d_mu(m.mu_a.h, m.mu_a.w), d_sbb(d_mu.h, d_mu.w), d_sab(d_mu.h, d_mu.w);
    for (std::size_t i = 0; i < d_mu.v.size(); ++i) {
      const double ma = m.mu_a.v[i], mb = m.mu_b.v[i];
      const double a1 = 2.0 * ma * mb + c1;
      const double a2 = 2.0 * m.cov.v[i] + c2;
      const double b1 = ma * ma + mb * mb + c1;
      const double b2 = m.var_a.v[i] + m.var_b.v[i] + c2;
      const double den = b1 * b2;
      const double s = (a1 * a2) / den;
      const double dnum = 2.0 * ma * a2 + a1 * (-2.0 * ma);
      const double dden = 2.0 * mb * b2 + b1 * (-2.0 * mb);
      const double q = a1 / den;
      d_mu.v[i] = scale * (dnum / den - s * (dden / den));
      d_sbb.v[i] = scale * (-q * (a2 / b2));
      d_sab.v[i] = scale * (2.0 * q);
    }
    const Plane g_mu = filter_valid_adjoint(d_mu, g);
    const Plane g_sbb = filter_valid_adjoint(d_sbb, g);
    const Plane g_sab = filter_valid_adjoint(d_sab, g);
    for (int r = 0; r < b.height(); ++r) {
      for (int c = 0; c < b.width(); ++c) {
        const double ds = g_mu(r, c) + 2.0 * pb(r, c) * g_sbb(r, c) +
                          pa(r, c) * g_sab(r, c);
        grad.at(r, c, ch) = -ds;
      }
    }
  }
  return grad;
}

}  // namespace kgad
