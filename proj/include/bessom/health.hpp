#pragma once

// Pack capacity and state of health from steady current periods.
//
// Steady periods are the inlier runs of a local-outlier-factor screen over the
// current series. Each period yields one (SOC change, integrated charge) pair
// via ampere-hour counting, and the capacity is the minimizer of a weighted
// total-least-squares cost that accounts for noise on both coordinates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "bessom/error.hpp"

namespace bessom {

namespace detail {
inline constexpr double kLofDistanceFloor = 1e-9;
}

/// Local outlier factor of each value of a 1-D sample, using k nearest
/// neighbours (ties at the k-distance included). Distances are floored at 1e-9
/// so duplicated values keep a finite density; identical data scores exactly 1.
inline std::vector<double> lof_scores(std::span<const double> values, std::size_t k) {
  const std::size_t n = values.size();
  if (k < 1) throw ValidationError("lof needs k >= 1");
  if (n <= k) throw ValidationError("lof needs more than k samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = values[order[i]];

  auto dist = [&](std::size_t i, std::size_t j) { return std::max(std::abs(s[i] - s[j]), detail::kLofDistanceFloor); };

  // In sorted order every neighbourhood is a contiguous window [lo[i], hi[i]] minus i itself.
  std::vector<double> kdist(n);
  std::vector<std::size_t> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t l = i, r = i;  // window currently [l, r]
    double kd = 0.0;
    for (std::size_t picked = 0; picked < k; ++picked) {
      const bool can_left = l > 0, can_right = r + 1 < n;
      if (can_left && (!can_right || dist(i, l - 1) <= dist(i, r + 1))) {
        --l;
        kd = dist(i, l);
      } else {
        ++r;
        kd = dist(i, r);
      }
    }
    while (l > 0 && dist(i, l - 1) <= kd) --l;
    while (r + 1 < n && dist(i, r + 1) <= kd) ++r;
    kdist[i] = kd;
    lo[i] = l;
    hi[i] = r;
  }

  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (std::size_t o = lo[i]; o <= hi[i]; ++o) {
      if (o != i) reach += std::max(kdist[o], dist(i, o));
    }
    lrd[i] = static_cast<double>(hi[i] - lo[i]) / reach;
  }

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ratio = 0.0;
    for (std::size_t o = lo[i]; o <= hi[i]; ++o) {
      if (o != i) ratio += lrd[o] / lrd[i];
    }
    out[order[i]] = ratio / static_cast<double>(hi[i] - lo[i]);
  }
  return out;
}

struct SteadyParams {
  std::size_t k = 20;
  double lof_threshold = 1.5;
  double min_len_s = 600.0;
};

/// Sample range [k1, k2] of a steady current period.
struct SteadySegment {
  std::size_t k1 = 0;
  std::size_t k2 = 0;
  double mean_current = 0.0;
};

/// Maximal contiguous runs of LOF inliers spanning at least min_len_s.
inline std::vector<SteadySegment> detect_steady_segments(std::span<const double> current,
                                                         std::span<const double> timestamps,
                                                         const SteadyParams& params = {}) {
  if (current.size() != timestamps.size()) throw ValidationError("current and timestamps differ in length");
  const auto scores = lof_scores(current, params.k);
  std::vector<SteadySegment> out;
  std::size_t i = 0;
  const std::size_t n = current.size();
  while (i < n) {
    if (!(scores[i] <= params.lof_threshold)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && scores[j + 1] <= params.lof_threshold) ++j;
    if (j > i && timestamps[j] - timestamps[i] >= params.min_len_s) {
      const double sum = std::accumulate(current.begin() + static_cast<std::ptrdiff_t>(i),
                                         current.begin() + static_cast<std::ptrdiff_t>(j) + 1, 0.0);
      out.push_back({i, j, sum / static_cast<double>(j - i + 1)});
    }
    i = j + 1;
  }
  return out;
}

/// Measurement-noise assumptions for capacity pairs.
struct CapacityNoiseModel {
  double sigma_x = 0.01;
  double sigma_y_rel = 0.005;
  double sigma_y_abs_Ah = 0.1;
};

/// x: SOC change, y: charge moved (Ah) over one steady period.
struct CapacityPair {
  double x = 0.0;
  double y = 0.0;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
};

/// Ampere-hour counting over [k1, k2): y = -(dt/3600) * sum eta * i[k] with
/// left-endpoint samples, so adjacent periods sharing an endpoint add exactly.
/// x = soc[k2] - soc[k1]. With charge current negative both are positive on charge.
inline CapacityPair ah_integrate(const SteadySegment& seg, std::span<const double> current,
                                 std::span<const double> soc, double dt_s, double eta = 1.0,
                                 const CapacityNoiseModel& noise = {}) {
  if (seg.k2 <= seg.k1) throw ValidationError("steady segment needs k2 > k1");
  if (seg.k2 >= current.size() || seg.k2 >= soc.size()) throw ValidationError("steady segment out of range");
  if (!(dt_s > 0)) throw ValidationError("sampling interval must be positive");
  CapacityPair p;
  p.x = soc[seg.k2] - soc[seg.k1];
  if (p.x == 0.0) throw ValidationError("zero SOC change over steady segment");
  double sum = 0.0;
  for (std::size_t k = seg.k1; k < seg.k2; ++k) sum += eta * current[k];
  p.y = -(dt_s / 3600.0) * sum;
  p.sigma_x = noise.sigma_x;
  p.sigma_y = noise.sigma_y_rel * std::abs(p.y) + noise.sigma_y_abs_Ah;
  if (!(p.sigma_x > 0 && p.sigma_y > 0)) throw ValidationError("capacity pair variances must be positive");
  return p;
}

/// Same as above with per-sample intervals t[k+1] - t[k] instead of a fixed step.
inline CapacityPair ah_integrate(const SteadySegment& seg, std::span<const double> current,
                                 std::span<const double> soc, std::span<const double> timestamps, double eta = 1.0,
                                 const CapacityNoiseModel& noise = {}) {
  if (seg.k2 <= seg.k1) throw ValidationError("steady segment needs k2 > k1");
  if (seg.k2 >= current.size() || seg.k2 >= soc.size() || seg.k2 >= timestamps.size()) {
    throw ValidationError("steady segment out of range");
  }
  CapacityPair p;
  p.x = soc[seg.k2] - soc[seg.k1];
  if (p.x == 0.0) throw ValidationError("zero SOC change over steady segment");
  double sum = 0.0;
  for (std::size_t k = seg.k1; k < seg.k2; ++k) sum += eta * current[k] * (timestamps[k + 1] - timestamps[k]);
  p.y = -sum / 3600.0;
  p.sigma_x = noise.sigma_x;
  p.sigma_y = noise.sigma_y_rel * std::abs(p.y) + noise.sigma_y_abs_Ah;
  if (!(p.sigma_x > 0 && p.sigma_y > 0)) throw ValidationError("capacity pair variances must be positive");
  return p;
}

/// Weighted total-least-squares cost in the scalar capacity q:
///   sum_i (y_i - q x_i)^2 / (1 + q^2)^2 * (q^2 / sx_i^2 + 1 / sy_i^2)
inline double rawtls_cost(double q, std::span<const CapacityPair> pairs) {
  if (pairs.empty()) throw ValidationError("rawtls cost needs at least one pair");
  const double denom = (1.0 + q * q) * (1.0 + q * q);
  double total = 0.0;
  for (const auto& p : pairs) {
    const double r = p.y - q * p.x;
    total += r * r / denom * (q * q / (p.sigma_x * p.sigma_x) + 1.0 / (p.sigma_y * p.sigma_y));
  }
  return total;
}

/// Golden-section search on [lo, hi]; the returned abscissa is within `tol` of
/// the minimizer when f is unimodal on the bracket.
inline double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > 2.0 * tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

struct CapacitySearch {
  double lo_fraction = 0.3;
  double hi_fraction = 1.2;
  double tol_Ah = 1e-4;
};

struct HealthResult {
  double q_hat = 0.0;
  double soh = 0.0;
  std::size_t pairs_used = 0;
  double cost_at_min = 0.0;
  /// The minimizer sits at an end of the search bracket.
  bool at_bracket_edge = false;
};

inline HealthResult estimate_capacity(std::span<const CapacityPair> pairs, double q_nom,
                                      const CapacitySearch& search = {}) {
  if (pairs.empty()) throw ValidationError("capacity estimation needs at least one pair");
  if (!(q_nom > 0)) throw ValidationError("nominal capacity must be positive");
  const double lo = search.lo_fraction * q_nom, hi = search.hi_fraction * q_nom;
  const double q = golden_section_minimize([&](double c) { return rawtls_cost(c, pairs); }, lo, hi, search.tol_Ah);
  HealthResult r;
  r.q_hat = q;
  r.soh = q / q_nom;
  r.pairs_used = pairs.size();
  r.cost_at_min = rawtls_cost(q, pairs);
  r.at_bracket_edge = (q - lo) <= 4.0 * search.tol_Ah || (hi - q) <= 4.0 * search.tol_Ah;
  return r;
}

}  // namespace bessom
