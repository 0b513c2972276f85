#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddb/errors.hpp"
#include "ddb/linop.hpp"
#include "ddb/rng.hpp"
#include "ddb/tensor.hpp"

namespace ddb {

enum class DatasetKind { GaussianField, BlobMixture };

inline const char* to_string(DatasetKind k) {
  return k == DatasetKind::GaussianField ? "gaussian_field" : "blob_mixture";
}

// Seeded synthetic image generators. Every sample is a pure function of
// (spec, index): regeneration is bit-identical, and train/test splits are
// just disjoint index ranges.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::GaussianField;
  Shape shape = {16, 16};
  std::size_t train_size = 64;
  std::uint64_t seed = 0;
  double field_smooth_std = 1.5;  // pixels
  int field_kernel_size = 7;

  // Nominal dynamic range used as the PSNR peak. gaussian_field: mean 0.5,
  // std 0.15 (unclipped tails). blob_mixture: clamped to [0,1].
  double peak() const { return 1.0; }
};

// Index range reserved for evaluation samples.
inline constexpr std::uint64_t kTestIndexOffset = 1u << 20;

namespace detail {

inline Tensor gaussian_field_sample(const DatasetSpec& spec, CounterRng& rng) {
  Tensor white(spec.shape);
  rng.fill_normal(white);
  const std::vector<double> k =
      gaussian_kernel(spec.field_kernel_size, spec.field_smooth_std);
  PeriodicConvolutionOp blur(spec.shape, k);
  Tensor v = blur.apply(white);
  double k2 = 0.0;
  for (double h : k) k2 += h * h;
  // Separable filtering of unit white noise: output std = (sum h^2)^(rank/2).
  const double out_std = std::pow(k2, 0.5 * static_cast<double>(spec.shape.size()));
  const double gain = 0.15 / out_std;
  for (double& x : v.data) x = 0.5 + gain * x;
  return v;
}

inline Tensor blob_mixture_sample(const DatasetSpec& spec, CounterRng& rng) {
  Tensor img = Tensor::full(spec.shape, 0.1);
  const std::size_t rank = spec.shape.size();
  const int n_blobs = 3 + static_cast<int>(rng.next_u64() % 3);
  for (int b = 0; b < n_blobs; ++b) {
    std::vector<double> center(rank), width(rank);
    for (std::size_t a = 0; a < rank; ++a) {
      const double dim = static_cast<double>(spec.shape[a]);
      center[a] = rng.uniform() * dim;
      width[a] = 1.5 + rng.uniform() * (dim / 4.0 - 1.5);
    }
    const double amp = 0.35 + rng.uniform() * 0.45;
    if (rank == 1) {
      for (std::size_t i = 0; i < spec.shape[0]; ++i) {
        const double d = (static_cast<double>(i) - center[0]) / width[0];
        img[i] += amp * std::exp(-0.5 * d * d);
      }
    } else {
      for (std::size_t r = 0; r < spec.shape[0]; ++r)
        for (std::size_t c = 0; c < spec.shape[1]; ++c) {
          const double dr = (static_cast<double>(r) - center[0]) / width[0];
          const double dc = (static_cast<double>(c) - center[1]) / width[1];
          img.at(r, c) += amp * std::exp(-0.5 * (dr * dr + dc * dc));
        }
    }
  }
  for (double& x : img.data) x = std::min(1.0, std::max(0.0, x));
  return img;
}

}  // namespace detail

inline Tensor make_sample(const DatasetSpec& spec, std::uint64_t index) {
  if (spec.shape.empty() || spec.shape.size() > 2)
    throw ConfigError("dataset supports rank 1 or 2 samples");
  CounterRng rng(derive_key(spec.seed, index, /*label=*/0xD5));
  switch (spec.kind) {
    case DatasetKind::GaussianField: return detail::gaussian_field_sample(spec, rng);
    case DatasetKind::BlobMixture: return detail::blob_mixture_sample(spec, rng);
  }
  throw Error("unreachable");
}

inline Tensor make_test_sample(const DatasetSpec& spec, std::uint64_t index) {
  return make_sample(spec, kTestIndexOffset + index);
}

struct PairedDataset {
  std::vector<Tensor> x0s;
  std::vector<Tensor> x1s;
};

// Noiseless training pairs (x0, lifted corruption of x0) for the mixture
// oracle; the nonlinear path lifts with the surrogate pseudo-inverse.
inline PairedDataset make_training_pairs(const DatasetSpec& spec, const ForwardOp& op,
                                         const PinvSolverConfig& pinv_cfg = {}) {
  PairedDataset out;
  out.x0s.reserve(spec.train_size);
  out.x1s.reserve(spec.train_size);
  for (std::size_t k = 0; k < spec.train_size; ++k) {
    Tensor x0 = make_sample(spec, k);
    Tensor y = op.apply(x0);
    Tensor x1 = op.is_linear() ? lift_measurement(op.lin(), y, pinv_cfg)
                               : op.nonlin().surrogate_pinv(y);
    out.x0s.push_back(std::move(x0));
    out.x1s.push_back(std::move(x1));
  }
  return out;
}

// Deterministic random 0/1 mask with the given keep fraction.
inline Tensor make_random_mask(const Shape& shape, double keep_fraction,
                               std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("mask keep fraction must be in (0,1]");
  CounterRng rng(derive_key(seed, 0, /*label=*/0xA5));
  Tensor m(shape);
  for (double& v : m.data) v = (rng.uniform() <= keep_fraction) ? 1.0 : 0.0;
  // Guarantee at least one observed pixel so the operator has a range.
  bool any = false;
  for (double v : m.data) any = any || (v != 0.0);
  if (!any) m[0] = 1.0;
  return m;
}

}  // namespace ddb
