#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "stsa/errors.hpp"

namespace stsa {

struct LoglogFit {
  double slope = 0.0;
  double intercept = 0.0;  // of log(value) against log(k)
  double r2 = 1.0;
};

// Least-squares line through (log k, log value). Exact on pure power laws.
// All inputs must be strictly positive; callers clip or filter first.
inline LoglogFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw config_error("fit_loglog_slope: need at least 2 points");
  const double n = static_cast<double>(points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [k, v] : points) {
    if (!(k > 0.0) || !(v > 0.0)) throw std::domain_error("fit_loglog_slope: nonpositive point");
    sx += std::log(k);
    sy += std::log(v);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [k, v] : points) {
    const double dx = std::log(k) - mx;
    const double dy = std::log(v) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) throw std::domain_error("fit_loglog_slope: all abscissae identical");
  LoglogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssres = 0.0;
  for (const auto& [k, v] : points) {
    const double pred = fit.intercept + fit.slope * std::log(k);
    const double e = std::log(v) - pred;
    ssres += e * e;
  }
  fit.r2 = (syy > 1e-300) ? 1.0 - ssres / syy : 1.0;
  return fit;
}

}  // namespace stsa
