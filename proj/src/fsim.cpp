#include "kgad/fsim.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <vector>

#include "kgad/errors.hpp"

namespace kgad {
namespace {

using cplx = std::complex<double>;

// FFTW planning is not thread-safe; execution on a finished plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class Fft2d {
 public:
  Fft2d(int rows, int cols) : rows_(rows), cols_(cols), buf_(rows * cols) {
    std::lock_guard lock(planner_mutex());
    auto* p = reinterpret_cast<fftw_complex*>(buf_.data());
    forward_ = fftw_plan_dft_2d(rows, cols, p, p, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_2d(rows, cols, p, p, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Fft2d() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  Fft2d(const Fft2d&) = delete;
  Fft2d& operator=(const Fft2d&) = delete;

  std::vector<cplx> forward(std::vector<cplx> data) {
    run(forward_, data);
    return data;
  }
  // Normalized inverse (divides by rows * cols).
  std::vector<cplx> inverse(std::vector<cplx> data) {
    run(backward_, data);
    const double n = static_cast<double>(rows_) * cols_;
    for (cplx& v : data) v /= n;
    return data;
  }

 private:
  void run(fftw_plan plan, std::vector<cplx>& data) {
    auto* p = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(plan, p, p);
  }
  int rows_, cols_;
  std::vector<cplx> buf_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

// Normalized frequency coordinates in fftshift-ed order for one axis.
std::vector<double> freq_range(int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    out[i] = (n % 2) ? (i - (n - 1) / 2.0) / (n - 1) : (i - n / 2.0) / n;
  }
  return out;
}

// Index of the fftshift-ed position that lands at i after ifftshift.
int unshift(int i, int n) { return ((i - n / 2) % n + n) % n; }

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Tensor phase_congruency(const Tensor& plane, const PhaseCongruencyConfig& cfg) {
  const int rows = plane.height(), cols = plane.width();
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  Fft2d fft(rows, cols);

  std::vector<cplx> spectrum(n);
  for (std::size_t i = 0; i < n; ++i) spectrum[i] = plane[i];
  spectrum = fft.forward(std::move(spectrum));

  // Radius and angle grids in unshifted (DC at [0,0]) order.
  const std::vector<double> xr = freq_range(cols), yr = freq_range(rows);
  std::vector<double> radius(n), sin_t(n), cos_t(n), lowpass(n);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double x = xr[c], y = yr[r];
      const std::size_t i =
          static_cast<std::size_t>(unshift(r, rows)) * cols + unshift(c, cols);
      const double rad = std::sqrt(x * x + y * y);
      const double theta = std::atan2(-y, x);
      radius[i] = rad;
      sin_t[i] = std::sin(theta);
      cos_t[i] = std::cos(theta);
      lowpass[i] = 1.0 / (1.0 + std::pow(rad / 0.45, 2 * 15));
    }
  }
  radius[0] = 1.0;

  const double log_sigma = std::log(cfg.sigma_on_f);
  std::vector<std::vector<double>> log_gabor(cfg.scales, std::vector<double>(n));
  for (int s = 0; s < cfg.scales; ++s) {
    const double fo = 1.0 / (cfg.min_wavelength * std::pow(cfg.mult, s));
    for (std::size_t i = 0; i < n; ++i) {
      const double l = std::log(radius[i] / fo);
      log_gabor[s][i] =
          std::exp(-(l * l) / (2.0 * log_sigma * log_sigma)) * lowpass[i];
    }
    log_gabor[s][0] = 0.0;
  }

  const double theta_sigma =
      std::numbers::pi / cfg.orientations / cfg.d_theta_on_sigma;
  std::vector<double> energy_all(n, 0.0), amplitude_all(n, 0.0);

  for (int o = 0; o < cfg.orientations; ++o) {
    const double angle = o * std::numbers::pi / cfg.orientations;
    const double ca = std::cos(angle), sa = std::sin(angle);
    std::vector<double> spread(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ds = sin_t[i] * ca - cos_t[i] * sa;
      const double dc = cos_t[i] * ca + sin_t[i] * sa;
      const double dtheta = std::abs(std::atan2(ds, dc));
      spread[i] = std::exp(-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma));
    }

    std::vector<std::vector<cplx>> eo(cfg.scales);
    std::vector<std::vector<double>> spatial_filter(cfg.scales);
    std::vector<double> sum_e(n, 0.0), sum_o(n, 0.0), sum_an(n, 0.0);
    double em_n = 0.0;
    for (int s = 0; s < cfg.scales; ++s) {
      std::vector<cplx> filter(n);
      for (std::size_t i = 0; i < n; ++i) filter[i] = log_gabor[s][i] * spread[i];
      if (s == 0) {
        for (std::size_t i = 0; i < n; ++i) em_n += std::norm(filter[i]);
      }
      std::vector<cplx> f_spatial = fft.inverse(filter);
      spatial_filter[s].resize(n);
      const double root_n = std::sqrt(static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i)
        spatial_filter[s][i] = f_spatial[i].real() * root_n;

      std::vector<cplx> product(n);
      for (std::size_t i = 0; i < n; ++i) product[i] = spectrum[i] * filter[i];
      eo[s] = fft.inverse(std::move(product));
      for (std::size_t i = 0; i < n; ++i) {
        sum_an[i] += std::abs(eo[s][i]);
        sum_e[i] += eo[s][i].real();
        sum_o[i] += eo[s][i].imag();
      }
    }

    std::vector<double> energy(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double x_energy =
          std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + cfg.epsilon;
      const double mean_e = sum_e[i] / x_energy;
      const double mean_o = sum_o[i] / x_energy;
      for (int s = 0; s < cfg.scales; ++s) {
        const double e = eo[s][i].real(), od = eo[s][i].imag();
        energy[i] += e * mean_e + od * mean_o - std::abs(e * mean_o - od * mean_e);
      }
    }

    // Noise threshold from the smallest-scale response statistics.
    std::vector<double> e2(n);
    for (std::size_t i = 0; i < n; ++i) e2[i] = std::norm(eo[0][i]);
    const double mean_e2n = -median(std::move(e2)) / std::log(0.5);
    const double noise_power = mean_e2n / em_n;
    double sum_an2 = 0.0, sum_aiaj = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int s = 0; s < cfg.scales; ++s)
        sum_an2 += spatial_filter[s][i] * spatial_filter[s][i];
      for (int si = 0; si < cfg.scales - 1; ++si)
        for (int sj = si + 1; sj < cfg.scales; ++sj)
          sum_aiaj += spatial_filter[si][i] * spatial_filter[sj][i];
    }
    const double noise_energy2 =
        2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
    const double tau = std::sqrt(noise_energy2 / 2.0);
    const double noise_mean = tau * std::sqrt(std::numbers::pi / 2.0);
    const double noise_sigma =
        std::sqrt((2.0 - std::numbers::pi / 2.0) * tau * tau);
    const double threshold = (noise_mean + cfg.noise_k * noise_sigma) / 1.7;

    for (std::size_t i = 0; i < n; ++i) {
      energy_all[i] += std::max(energy[i] - threshold, 0.0);
      amplitude_all[i] += sum_an[i];
    }
  }

  Tensor pc(rows, cols, 1);
  for (std::size_t i = 0; i < n; ++i) {
    pc[i] = amplitude_all[i] > 0.0 ? energy_all[i] / amplitude_all[i] : 0.0;
  }
  return pc;
}

Tensor gradient_magnitude(const Tensor& plane) {
  // Scharr kernels /16; conv2 flips the kernel, which only changes the sign.
  static constexpr double kDx[3][3] = {
      {3, 0, -3}, {10, 0, -10}, {3, 0, -3}};
  const int rows = plane.height(), cols = plane.width();
  Tensor out(rows, cols, 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double gx = 0.0, gy = 0.0;
      for (int i = -1; i <= 1; ++i) {
        for (int j = -1; j <= 1; ++j) {
          const int rr = r - i, cc = c - j;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          const double v = plane.at(rr, cc, 0);
          gx += kDx[i + 1][j + 1] / 16.0 * v;
          gy += kDx[j + 1][i + 1] / 16.0 * v;
        }
      }
      out.at(r, c, 0) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

namespace {

// Luminance on a 0..255 scale, box-averaged and decimated for large inputs.
Tensor fsim_plane(const Image& img) {
  Tensor y = luminance(img);
  for (double& v : y.values()) v *= 255.0;
  const int rows = y.height(), cols = y.width();
  const int f = std::max(
      1, static_cast<int>(std::lround(std::min(rows, cols) / 256.0)));
  if (f == 1) return y;
  // "same" box filter of size f (centre at (f-1)/2 like conv2), then decimate.
  const int off = (f - 1) / 2;
  Tensor out((rows + f - 1) / f, (cols + f - 1) / f, 1);
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) {
      double acc = 0.0;
      for (int i = 0; i < f; ++i) {
        for (int j = 0; j < f; ++j) {
          const int rr = r * f + i - off, cc = c * f + j - off;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          acc += y.at(rr, cc, 0);
        }
      }
      out.at(r, c, 0) = acc / (f * f);
    }
  }
  return out;
}

}  // namespace

MetricValue fsim(const Image& a, const Image& b,
                 const PhaseCongruencyConfig& cfg) {
  require_same_shape(a.shape(), b.shape(), "fsim");
  if (a == b) return {"fsim", 1.0, false};
  const Tensor ya = fsim_plane(a), yb = fsim_plane(b);
  const Tensor pc_a = phase_congruency(ya, cfg), pc_b = phase_congruency(yb, cfg);
  const Tensor gm_a = gradient_magnitude(ya), gm_b = gradient_magnitude(yb);

  constexpr double kT1 = 0.85, kT2 = 160.0;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double pc_sim = (2.0 * pc_a[i] * pc_b[i] + kT1) /
                          (pc_a[i] * pc_a[i] + pc_b[i] * pc_b[i] + kT1);
    const double gm_sim = (2.0 * gm_a[i] * gm_b[i] + kT2) /
                          (gm_a[i] * gm_a[i] + gm_b[i] * gm_b[i] + kT2);
    const double pc_m = std::max(pc_a[i], pc_b[i]);
    num += pc_sim * gm_sim * pc_m;
    den += pc_m;
  }
  if (den <= 0.0) return {"fsim", 1.0, false};
  return {"fsim", num / den, false};
}

MetricValue fsimd(const Image& a, const Image& b,
                  const PhaseCongruencyConfig& cfg) {
  return {"fsimd", 1.0 - fsim(a, b, cfg).value, true};
}

}  // namespace kgad
