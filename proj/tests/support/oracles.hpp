// Independent reference implementations used as test oracles. These stay
// deliberately naive and share no code with the library paths they check.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace oracles {

struct TimeDomainHrv {
  double mean = 0.0;
  double sdnn = 0.0;
  double rmssd = 0.0;
  double pnn50 = 0.0;
};

inline TimeDomainHrv brute_force_hrv(std::span<const double> intervals) {
  TimeDomainHrv out;
  const std::size_t n = intervals.size();
  for (double v : intervals) out.mean += v;
  out.mean /= double(n);
  for (double v : intervals) out.sdnn += (v - out.mean) * (v - out.mean);
  out.sdnn = std::sqrt(out.sdnn / double(n));
  std::size_t over = 0;
  double acc = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    double d = intervals[i] - intervals[i - 1];
    acc += d * d;
    if (std::fabs(d) > 50.0) ++over;
  }
  out.rmssd = n > 1 ? std::sqrt(acc / double(n - 1)) : 0.0;
  out.pnn50 = n > 1 ? 100.0 * double(over) / double(n - 1) : 0.0;
  return out;
}

// O(n^2) discrete Fourier transform for validating the FFT.
inline std::vector<std::complex<double>> naive_dft(std::span<const std::complex<double>> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      double ang = -2.0 * std::numbers::pi * double(k) * double(j) / double(n);
      acc += x[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Central finite difference of a scalar function of one parameter.
inline double central_difference(const std::function<double()>& eval, double& param,
                                 double h = 1e-5) {
  double saved = param;
  param = saved + h;
  double up = eval();
  param = saved - h;
  double down = eval();
  param = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

// Peak-list recovery rate within a tolerance, for the R-peak criterion.
inline double recovery_rate(std::span<const long> truth, std::span<const long> detected,
                            long tolerance_samples) {
  if (truth.empty()) return 1.0;
  std::size_t hits = 0;
  for (long t : truth) {
    for (long d : detected) {
      if (std::labs(d - t) <= tolerance_samples) {
        ++hits;
        break;
      }
    }
  }
  return double(hits) / double(truth.size());
}

}  // namespace oracles
