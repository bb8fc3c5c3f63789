#include "ctot/time_density.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctot {

TimeDensity TimeDensity::triangular(double a, double b) {
  require(std::isfinite(a) && std::isfinite(b), "triangular density: non-finite parameters");
  // Minimum of b + a|t-1| on [0,2] is b (a >= 0) or b + a (a < 0).
  require(b >= 0.0 && b + a >= 0.0, "triangular density: negative on [0, 2]");
  require(b > 0.0 || a > 0.0, "triangular density: identically zero");
  TimeDensity d;
  d.kind_ = Kind::Triangular;
  d.a_ = a;
  d.b_ = b;
  return d;
}

TimeDensity TimeDensity::gaussian_mixture(std::vector<Component> components) {
  require(!components.empty(), "gaussian mixture density: no components");
  for (const auto& c : components) {
    require(std::isfinite(c.mean) && c.sd > 0.0 && std::isfinite(c.sd),
            "gaussian mixture density: invalid component");
    require(c.weight > 0.0 && std::isfinite(c.weight), "gaussian mixture density: weight must be > 0");
  }
  TimeDensity d;
  d.kind_ = Kind::GaussianMixture;
  d.components_ = std::move(components);
  return d;
}

double TimeDensity::density(double t) const {
  switch (kind_) {
    case Kind::Uniform:
      return 1.0;
    case Kind::Triangular:
      return t < 0.0 || t > 2.0 ? 0.0 : b_ + a_ * std::abs(t - 1.0);
    case Kind::GaussianMixture: {
      double p = 0.0;
      for (const auto& c : components_) {
        const double z = (t - c.mean) / c.sd;
        p += c.weight * std::exp(-0.5 * z * z) / (c.sd * std::sqrt(2.0 * M_PI));
      }
      return p;
    }
  }
  return 0.0;
}

double TimeDensity::cumulative(double t) const {
  switch (kind_) {
    case Kind::Uniform:
      return t;
    case Kind::Triangular: {
      const double s = std::clamp(t, 0.0, 2.0);
      if (s <= 1.0) return b_ * s + a_ * (s - 0.5 * s * s);
      const double u = s - 1.0;
      return b_ + 0.5 * a_ + b_ * u + 0.5 * a_ * u * u;
    }
    case Kind::GaussianMixture: {
      double total = 0.0;
      for (const auto& c : components_)
        total += c.weight * 0.5 * std::erfc(-(t - c.mean) / (c.sd * std::sqrt(2.0)));
      return total;
    }
  }
  return 0.0;
}

double TimeDensity::quantile(const Interval& iv, double q) const {
  require(iv.start < iv.end, "time density: empty interval");
  require(q >= 0.0 && q <= 1.0, "time density: quantile level outside [0, 1]");
  const double lo_mass = cumulative(iv.start);
  const double z = cumulative(iv.end) - lo_mass;
  require(z > 0.0 && std::isfinite(z), "time density: no mass inside the interval");
  if (kind_ == Kind::Uniform) return iv.start + q * iv.length();
  if (q <= 0.0) return iv.start;
  if (q >= 1.0) return iv.end;
  const double target = lo_mass + q * z;
  double lo = iv.start;
  double hi = iv.end;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cumulative(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::string TimeDensity::describe() const {
  std::ostringstream out;
  switch (kind_) {
    case Kind::Uniform:
      out << "uniform";
      break;
    case Kind::Triangular:
      out << "triangular(a=" << a_ << ",b=" << b_ << ")";
      break;
    case Kind::GaussianMixture:
      out << "gaussian_mixture(" << components_.size() << ")";
      break;
  }
  return out.str();
}

}  // namespace ctot
