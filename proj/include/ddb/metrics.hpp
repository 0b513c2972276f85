#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ddb/errors.hpp"
#include "ddb/linop.hpp"
#include "ddb/tensor.hpp"

namespace ddb {

inline double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

// Identical inputs report +inf.
inline double psnr(const Tensor& estimate, const Tensor& reference, double peak) {
  if (!(peak > 0.0)) throw DomainError("psnr requires peak > 0");
  const double m = mse(estimate, reference);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

inline double residual_norm(const ForwardOp& op, const Tensor& estimate,
                            const Tensor& y) {
  return norm2(y - op.apply(estimate));
}

inline double residual_norm(const LinearOperator& op, const Tensor& estimate,
                            const Tensor& y) {
  return norm2(y - op.apply(estimate));
}

namespace detail {

inline double mean_pairwise_distance(const std::vector<Tensor>& a,
                                     const std::vector<Tensor>& b) {
  double s = 0.0;
  for (const Tensor& x : a)
    for (const Tensor& y : b) s += norm2(x - y);
  return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

// V-statistic form, defined for any non-empty sample sets.
inline double energy_distance_vstat(const std::vector<Tensor>& a,
                                    const std::vector<Tensor>& b) {
  return 2.0 * mean_pairwise_distance(a, b) - mean_pairwise_distance(a, a) -
         mean_pairwise_distance(b, b);
}

}  // namespace detail

// 2 E||X-Y|| - E||X-X'|| - E||Y-Y'|| over the empirical distributions.
inline double energy_distance(const std::vector<Tensor>& a,
                              const std::vector<Tensor>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw DomainError("energy_distance requires at least 2 samples per set");
  return detail::energy_distance_vstat(a, b);
}

}  // namespace ddb
