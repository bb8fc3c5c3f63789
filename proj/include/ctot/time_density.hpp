#pragma once

#include "ctot/core.hpp"
#include "ctot/random.hpp"

#include <string>
#include <vector>

namespace ctot {

/// Observation-time density p(t), known up to normalisation.
///
/// Used both to place labels through inverse CDFs restricted to a coarse
/// interval and to draw synthetic observation times.
class TimeDensity {
 public:
  enum class Kind { Uniform, Triangular, GaussianMixture };

  struct Component {
    double weight = 1.0;
    double mean = 0.0;
    double sd = 1.0;
  };

  TimeDensity() = default;  // uniform

  static TimeDensity uniform() { return {}; }
  /// p(t) = b + a|t - 1| on [0, 2]; zero elsewhere.
  static TimeDensity triangular(double a, double b);
  static TimeDensity gaussian_mixture(std::vector<Component> components);

  Kind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }
  const std::vector<Component>& components() const { return components_; }

  double density(double t) const;
  /// Antiderivative of density with an arbitrary but fixed offset.
  double cumulative(double t) const;
  /// Mass of the interval, Z = integral of p over it.
  double mass(const Interval& iv) const { return cumulative(iv.end) - cumulative(iv.start); }

  /// t in iv with integral_{iv.start}^{t} p = q * Z (forward inverse CDF).
  double quantile(const Interval& iv, double q) const;
  /// t in iv with integral_{t}^{iv.end} p = q * Z (backward inverse CDF).
  double quantile_from_end(const Interval& iv, double q) const { return quantile(iv, 1.0 - q); }

  /// Draw from p restricted to iv.
  double sample(const Interval& iv, Rng& rng) const { return quantile(iv, rng.uniform()); }

  std::string describe() const;

 private:
  Kind kind_ = Kind::Uniform;
  double a_ = 0.0;
  double b_ = 1.0;
  std::vector<Component> components_;
};

}  // namespace ctot
