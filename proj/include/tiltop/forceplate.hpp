/**
 * @file forceplate.hpp
 * @brief Six-leg platform wrench sensing: linear load-cell map, least-squares
 *        calibration, CoP extraction and a synthetic reading generator.
 *
 * Frame: origin at the center of the platform top surface, z up, right handed.
 * Load cells read tension as positive. The wrench is (fx, fy, fz, tx, ty, tz).
 */
#pragma once

#include <tiltop/error.hpp>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace tiltop {

using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

struct Wrench
{
  std::array<double, 3> force{};  ///< [N]
  std::array<double, 3> torque{}; ///< [N m] about the plate origin

  static Wrench from_vector(const Vector6 & v)
  {
    return Wrench{{v(0), v(1), v(2)}, {v(3), v(4), v(5)}};
  }

  Vector6 vector() const
  {
    Vector6 v;
    v << force[0], force[1], force[2], torque[0], torque[1], torque[2];
    return v;
  }

  double fz() const { return force[2]; }
};

struct LoadCellVector
{
  std::array<double, 6> readings{}; ///< [N], tension positive

  static LoadCellVector from_vector(const Vector6 & v)
  {
    LoadCellVector out;
    for(int i = 0; i < 6; ++i) out.readings[i] = v(i);
    return out;
  }

  Vector6 vector() const { return Eigen::Map<const Vector6>(readings.data()); }
};

/// Readings-to-wrench map (the inverse transpose of the platform Jacobian).
struct WrenchMap
{
  Matrix6 m = Matrix6::Identity();
};

inline Wrench estimate_wrench(const WrenchMap & map, const LoadCellVector & f)
{
  return Wrench::from_vector(map.m * f.vector());
}

struct CalibrationSample
{
  Wrench wrench;
  LoadCellVector readings;
};

struct CalibrationResult
{
  WrenchMap map;
  double residual_rms = 0.0;     ///< [N or N m], over all samples and components
  double condition_number = 0.0; ///< of the recovered map
  std::size_t samples = 0;
};

namespace detail {

inline const std::array<const char *, 6> & wrench_axis_names()
{
  static const std::array<const char *, 6> names{"fx", "fy", "fz", "tx", "ty", "tz"};
  return names;
}

inline std::string describe_vector(const Vector6 & v)
{
  std::ostringstream os;
  os.precision(4);
  os << "[";
  for(int i = 0; i < 6; ++i) os << (i ? ", " : "") << v(i);
  os << "]";
  return os.str();
}

inline double condition(const Matrix6 & m)
{
  Eigen::JacobiSVD<Matrix6> svd(m);
  const auto & s = svd.singularValues();
  return s(5) > 0.0 ? s(0) / s(5) : std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Least-squares fit of M minimizing sum_i |M f_i - W_i|^2.
/// Throws CalibrationError when fewer than six samples are given or the
/// readings do not span all six directions.
inline CalibrationResult calibrate(const std::vector<CalibrationSample> & samples, double rank_tolerance = 1e-10)
{
  const auto n = static_cast<Eigen::Index>(samples.size());
  if(n < 6) throw CalibrationError("calibration needs at least 6 samples, got " + std::to_string(n));

  // Rows are samples: F * M^T = W.
  Eigen::MatrixXd readings(n, 6);
  Eigen::MatrixXd wrenches(n, 6);
  for(Eigen::Index i = 0; i < n; ++i)
  {
    readings.row(i) = samples[i].readings.vector().transpose();
    wrenches.row(i) = samples[i].wrench.vector().transpose();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(readings, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto & sv = svd.singularValues();
  const double cutoff = rank_tolerance * sv(0);
  if(!(sv(0) > 0.0) || sv(5) <= cutoff)
  {
    std::ostringstream os;
    os << "rank-deficient calibration excitation (";
    int rank = 0;
    for(int i = 0; i < 6; ++i) rank += sv(i) > cutoff ? 1 : 0;
    os << "rank " << rank << " of 6)";
    os << "; unexcited reading directions:";
    for(int i = 0; i < 6; ++i)
      if(!(sv(i) > cutoff)) os << " " << detail::describe_vector(svd.matrixV().col(i));

    // Name wrench axes that no sample loads at all.
    std::string idle;
    for(int j = 0; j < 6; ++j)
      if(wrenches.col(j).cwiseAbs().maxCoeff() == 0.0)
        idle += std::string(idle.empty() ? "" : ", ") + detail::wrench_axis_names()[j];
    if(!idle.empty()) os << "; unexcited wrench axes: " << idle;
    throw CalibrationError(os.str());
  }

  const Eigen::MatrixXd mt = svd.solve(wrenches);
  CalibrationResult out;
  out.map.m = mt.transpose();
  const Eigen::MatrixXd residual = readings * mt - wrenches;
  out.residual_rms = std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()));
  out.condition_number = detail::condition(out.map.m);
  out.samples = samples.size();
  return out;
}

struct PlaneCop
{
  double x = 0.0;
  double y = 0.0;
};

inline constexpr double kDefaultMinFz = 10.0;

/// CoP of a vertical contact load from moment balance about the plate origin:
/// px = -ty / fz, py = tx / fz. Throws UnreliableCopError when |fz| < min_fz.
inline PlaneCop cop_from_wrench(const Wrench & w, double min_fz = kDefaultMinFz)
{
  const double fz = w.fz();
  if(!(std::abs(fz) >= min_fz))
    throw UnreliableCopError("vertical load " + std::to_string(fz) + " N below " + std::to_string(min_fz) + " N");
  return PlaneCop{-w.torque[1] / fz, w.torque[0] / fz};
}

/// Readings that would produce wrench w through map, plus i.i.d. Gaussian
/// noise of standard deviation noise_sigma per channel.
template<class URBG>
LoadCellVector simulate_readings(const WrenchMap & map, const Wrench & w, double noise_sigma, URBG & rng)
{
  Eigen::FullPivLU<Matrix6> lu(map.m);
  if(!lu.isInvertible()) throw CalibrationError("simulate_readings: wrench map is singular");
  Vector6 f = lu.solve(w.vector());
  if(noise_sigma > 0.0)
  {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for(int i = 0; i < 6; ++i) f(i) += noise(rng);
  }
  return LoadCellVector::from_vector(f);
}

inline LoadCellVector simulate_readings(const WrenchMap & map, const Wrench & w)
{
  std::mt19937_64 unused(0);
  return simulate_readings(map, w, 0.0, unused);
}

/// Parse a calibration CSV: 12 numeric columns (fx fy fz tx ty tz f1..f6),
/// one sample per row. A non-numeric first row is treated as a header.
inline std::vector<CalibrationSample> read_calibration_csv(std::istream & in)
{
  std::vector<CalibrationSample> out;
  std::string line;
  std::size_t lineno = 0;
  while(std::getline(in, line))
  {
    ++lineno;
    if(line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::array<double, 12> v{};
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    bool numeric = true;
    while(std::getline(ss, cell, ','))
    {
      if(col >= 12) throw IoError("calibration csv line " + std::to_string(lineno) + ": more than 12 columns");
      try
      {
        std::size_t used = 0;
        v[col] = std::stod(cell, &used);
      }
      catch(const std::exception &)
      {
        numeric = false;
      }
      ++col;
    }
    if(!numeric && out.empty() && lineno == 1) continue;
    if(!numeric) throw IoError("calibration csv line " + std::to_string(lineno) + ": non-numeric cell");
    if(col != 12) throw IoError("calibration csv line " + std::to_string(lineno) + ": expected 12 columns");
    CalibrationSample s;
    s.wrench = Wrench{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
    for(int i = 0; i < 6; ++i) s.readings.readings[i] = v[6 + i];
    out.push_back(s);
  }
  return out;
}

inline std::vector<CalibrationSample> read_calibration_csv(const std::string & path)
{
  std::ifstream in(path);
  if(!in) throw IoError("cannot open calibration file " + path);
  return read_calibration_csv(in);
}

inline nlohmann::ordered_json calibration_report(const CalibrationResult & r)
{
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  auto rows = nlohmann::ordered_json::array();
  for(int i = 0; i < 6; ++i)
  {
    auto row = nlohmann::ordered_json::array();
    for(int k = 0; k < 6; ++k) row.push_back(r.map.m(i, k));
    rows.push_back(row);
  }
  j["matrix"] = rows;
  j["residual_rms"] = r.residual_rms;
  j["condition_number"] = r.condition_number;
  j["samples"] = r.samples;
  return j;
}

} // namespace tiltop
