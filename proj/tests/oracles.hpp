#pragma once

// Independent reference computations used only by tests. Nothing here calls
// into the library; each routine follows the textbook definition directly.

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

namespace oracle {

// Closed-form magnitude of an order-N digital Butterworth band-pass obtained
// through the pre-warped bilinear transform:
//   |H|^2 = 1 / (1 + ((W^2 - W0^2) / (B W))^(2N)),  W = tan(pi f / fs).
inline double butterworth_bandpass_magnitude(double f, double fs, double lo, double hi, int order) {
  const double pi = std::numbers::pi;
  const double w = std::tan(pi * f / fs);
  const double wl = std::tan(pi * lo / fs);
  const double wh = std::tan(pi * hi / fs);
  const double ratio = (w * w - wl * wh) / ((wh - wl) * w);
  return 1.0 / std::sqrt(1.0 + std::pow(ratio * ratio, order));
}

// Full complex DFT by definition.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n));
    }
    out[k] = acc;
  }
  return out;
}

// Power ratio [1, 2.25] Hz over [0, 8] Hz of the one-sided periodogram of the
// mean-removed signal (bins 0..n/2, edges inclusive).
inline std::optional<double> psqi(std::vector<double> x, double fs) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double energy = 0.0;
  for (double& v : x) {
    v -= mean;
    energy += v * v;
  }
  if (energy == 0.0) return std::nullopt;
  const auto spectrum = dft(x);
  const std::size_t n = x.size();
  double band = 0.0, total = 0.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    const double p = std::norm(spectrum[k]);
    if (f >= -1e-9 && f <= 8.0 + 1e-9) total += p;
    if (f >= 1.0 - 1e-9 && f <= 2.25 + 1e-9) band += p;
  }
  return 100.0 * band / total;
}

inline std::optional<double> heart_rate(const std::vector<double>& ibis) {
  if (ibis.size() < 4) return std::nullopt;
  double s = 0.0;
  for (double v : ibis) s += v;
  return 60000.0 * static_cast<double>(ibis.size()) / s;
}

inline std::optional<double> pnn50(const std::vector<double>& ibis) {
  if (ibis.size() < 2) return std::nullopt;
  int count = 0;
  for (std::size_t i = 1; i < ibis.size(); ++i) count += std::fabs(ibis[i] - ibis[i - 1]) > 50.0 ? 1 : 0;
  return 100.0 * count / static_cast<double>(ibis.size() - 1);
}

struct Agreement {
  double rmse, mae, sd, mean_diff, loa_low, loa_high;
  std::optional<double> r;
};

// Two-pass textbook formulas.
inline Agreement agreement(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  Agreement out{};
  double sq = 0, ab = 0, d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sq += (a[i] - b[i]) * (a[i] - b[i]);
    ab += std::fabs(a[i] - b[i]);
    d += a[i] - b[i];
  }
  out.rmse = std::sqrt(sq / n);
  out.mae = ab / n;
  out.mean_diff = d / n;
  double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = (a[i] - b[i]) - out.mean_diff;
    ss += e * e;
  }
  out.sd = std::sqrt(ss / (n - 1.0));
  out.loa_low = out.mean_diff - 1.96 * out.sd;
  out.loa_high = out.mean_diff + 1.96 * out.sd;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va > 0 && vb > 0) out.r = cov / std::sqrt(va * vb);
  return out;
}

}  // namespace oracle
