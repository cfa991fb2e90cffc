// Independent reference computations used only by tests.
#pragma once

#include <tiltop/forceplate.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace tiltop::oracle {

/// Classic RK4 on xdd = w^2 (x - p) with constant p, fixed sub-step h.
inline std::pair<double, double> lip_rk4(double x, double v, double p, double w, double duration, double h)
{
  const long n = std::lround(duration / h);
  const double hh = duration / static_cast<double>(n);
  const double w2 = w * w;
  for(long i = 0; i < n; ++i)
  {
    const double k1x = v, k1v = w2 * (x - p);
    const double k2x = v + 0.5 * hh * k1v, k2v = w2 * (x + 0.5 * hh * k1x - p);
    const double k3x = v + 0.5 * hh * k2v, k3v = w2 * (x + 0.5 * hh * k2x - p);
    const double k4x = v + hh * k3v, k4v = w2 * (x + hh * k3x - p);
    x += hh / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += hh / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  }
  return {x, v};
}

inline double rel_err(double a, double b, double floor = 1e-12)
{
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

/// Random map I + U(-0.3, 0.3): diagonally dominant, so well conditioned.
inline WrenchMap random_wrench_map(std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  WrenchMap map;
  for(int i = 0; i < 6; ++i)
    for(int k = 0; k < 6; ++k) map.m(i, k) = (i == k ? 1.0 : 0.0) + u(rng);
  return map;
}

/// Samples whose noise-free readings are uniform within +-full_scale; the
/// wrench is computed by the plain product M f.
inline std::vector<CalibrationSample> synthetic_samples(const WrenchMap & map, std::size_t n, double full_scale,
                                                        double sigma, std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> u(-full_scale, full_scale);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<CalibrationSample> out;
  for(std::size_t i = 0; i < n; ++i)
  {
    Vector6 f;
    for(int k = 0; k < 6; ++k) f(k) = u(rng);
    const Vector6 w = map.m * f;
    if(sigma > 0.0)
      for(int k = 0; k < 6; ++k) f(k) += noise(rng);
    out.push_back({Wrench::from_vector(w), LoadCellVector::from_vector(f)});
  }
  return out;
}

struct ErrorEnergy
{
  double err = 0.0;
  double ref = 0.0;
  double relative_rms() const { return std::sqrt(err / ref); }
};

/// Squared wrench error of a calibrated map on held-out noisy samples.
inline ErrorEnergy held_out_error(const WrenchMap & fitted, const std::vector<CalibrationSample> & held_out)
{
  ErrorEnergy e;
  for(const auto & s : held_out)
  {
    const Vector6 w = s.wrench.vector();
    e.err += (fitted.m * s.readings.vector() - w).squaredNorm();
    e.ref += w.squaredNorm();
  }
  return e;
}

struct NoisyCalibrationStudy
{
  double pooled = 0.0; ///< relative RMS over every held-out sample of every seed
  double median = 0.0;
  double worst = 0.0;
};

/// 12 training and 50 held-out samples per seed, reading noise 0.5% of full scale.
inline NoisyCalibrationStudy noisy_calibration_study(std::uint64_t seeds)
{
  ErrorEnergy total;
  std::vector<double> per_seed;
  for(std::uint64_t seed = 0; seed < seeds; ++seed)
  {
    std::mt19937_64 rng(seed);
    const auto map = random_wrench_map(rng);
    const double fs = 1000.0;
    const auto train = synthetic_samples(map, 12, fs, 0.005 * fs, rng);
    const auto test = synthetic_samples(map, 50, fs, 0.005 * fs, rng);
    const auto e = held_out_error(calibrate(train).map, test);
    total.err += e.err;
    total.ref += e.ref;
    per_seed.push_back(e.relative_rms());
  }
  std::sort(per_seed.begin(), per_seed.end());
  return {total.relative_rms(), per_seed[per_seed.size() / 2], per_seed.back()};
}

} // namespace tiltop::oracle
