#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ddb/errors.hpp"
#include "ddb/rng.hpp"
#include "ddb/tensor.hpp"

namespace ddb {

// Matrix-free linear measurement operator. Implementations are immutable and
// safe to share across threads.
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual Tensor apply(const Tensor& x) const = 0;
  virtual Tensor adjoint(const Tensor& r) const = 0;
  virtual const Shape& input_shape() const = 0;
  virtual const Shape& output_shape() const = 0;
  virtual std::string name() const = 0;

  bool shape_preserving() const { return input_shape() == output_shape(); }

 protected:
  void check_input(const Tensor& x) const {
    if (x.shape != input_shape())
      throw ShapeError(name() + ".apply: expected " + shape_str(input_shape()) +
                       ", got " + shape_str(x.shape));
  }
  void check_output(const Tensor& r) const {
    if (r.shape != output_shape())
      throw ShapeError(name() + ".adjoint: expected " + shape_str(output_shape()) +
                       ", got " + shape_str(r.shape));
  }
};

class IdentityOp final : public LinearOperator {
 public:
  explicit IdentityOp(Shape shape) : shape_(std::move(shape)) {}

  Tensor apply(const Tensor& x) const override {
    check_input(x);
    return x;
  }
  Tensor adjoint(const Tensor& r) const override {
    check_output(r);
    return r;
  }
  const Shape& input_shape() const override { return shape_; }
  const Shape& output_shape() const override { return shape_; }
  std::string name() const override { return "identity"; }

 private:
  Shape shape_;
};

// 0/1 diagonal operator; keeps observed pixels, zeroes the rest. Self-adjoint.
class MaskOp final : public LinearOperator {
 public:
  explicit MaskOp(Tensor mask) : mask_(std::move(mask)) {
    for (double m : mask_.data)
      if (m != 0.0 && m != 1.0) throw ConfigError("mask entries must be 0 or 1");
  }

  Tensor apply(const Tensor& x) const override {
    check_input(x);
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask_[i];
    return y;
  }
  Tensor adjoint(const Tensor& r) const override { return apply(r); }
  const Shape& input_shape() const override { return mask_.shape; }
  const Shape& output_shape() const override { return mask_.shape; }
  std::string name() const override { return "mask"; }

  const Tensor& mask() const { return mask_; }
  std::size_t kept() const {
    std::size_t n = 0;
    for (double m : mask_.data) n += (m != 0.0);
    return n;
  }

 private:
  Tensor mask_;
};

inline std::vector<double> gaussian_kernel(int size, double std_dev) {
  if (size < 1 || size % 2 == 0) throw ConfigError("kernel size must be odd and >= 1");
  if (!(std_dev > 0.0)) throw ConfigError("kernel std must be > 0");
  std::vector<double> k(static_cast<std::size_t>(size));
  const int c = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = static_cast<double>(i - c);
    k[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (std_dev * std_dev));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline std::vector<double> uniform_kernel(int size) {
  if (size < 1 || size % 2 == 0) throw ConfigError("kernel size must be odd and >= 1");
  return std::vector<double>(static_cast<std::size_t>(size), 1.0 / size);
}

// Separable circular convolution, rank 1 or 2. Circular boundaries keep
// A A^T well conditioned and exactly diagonalizable, which the pinv solver
// and its tests rely on.
class PeriodicConvolutionOp final : public LinearOperator {
 public:
  PeriodicConvolutionOp(Shape shape, std::vector<double> kernel)
      : shape_(std::move(shape)), kernel_(std::move(kernel)) {
    if (shape_.empty() || shape_.size() > 2)
      throw ConfigError("periodic convolution supports rank 1 or 2");
    if (kernel_.empty() || kernel_.size() % 2 == 0)
      throw ConfigError("kernel size must be odd and >= 1");
    for (std::size_t d : shape_)
      if (kernel_.size() > d)
        throw ConfigError("kernel larger than signal axis");
    flipped_.assign(kernel_.rbegin(), kernel_.rend());
  }

  Tensor apply(const Tensor& x) const override {
    check_input(x);
    return convolve(x, kernel_);
  }
  Tensor adjoint(const Tensor& r) const override {
    check_output(r);
    return convolve(r, flipped_);
  }
  const Shape& input_shape() const override { return shape_; }
  const Shape& output_shape() const override { return shape_; }
  std::string name() const override { return "periodic_convolution"; }

  const std::vector<double>& kernel() const { return kernel_; }

 private:
  Tensor convolve(const Tensor& x, const std::vector<double>& k) const {
    Tensor cur = x;
    if (shape_.size() == 1) {
      return convolve_axis(cur, k, shape_[0], 1, 1);
    }
    const std::size_t rows = shape_[0], cols = shape_[1];
    // rows: stride cols, count cols; cols: stride 1, count rows
    cur = convolve_axis(cur, k, rows, cols, cols);
    cur = convolve_axis(cur, k, cols, 1, rows);
    return cur;
  }

  // Convolves lines of length n with stride `stride`; `lines` parallel lines.
  Tensor convolve_axis(const Tensor& x, const std::vector<double>& k,
                       std::size_t n, std::size_t stride, std::size_t lines) const {
    Tensor out(x.shape);
    const int half = static_cast<int>(k.size()) / 2;
    for (std::size_t l = 0; l < lines; ++l) {
      // Line origin: for stride==1 lines are contiguous rows; otherwise columns.
      const std::size_t base = (stride == 1) ? l * n : l;
      const int ni = static_cast<int>(n);
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int m = -half; m <= half; ++m) {
          const int j = ((static_cast<int>(i) - m) % ni + ni) % ni;
          acc += k[static_cast<std::size_t>(m + half)] *
                 x[base + static_cast<std::size_t>(j) * stride];
        }
        out[base + i * stride] = acc;
      }
    }
    return out;
  }

  Shape shape_;
  std::vector<double> kernel_;
  std::vector<double> flipped_;
};

// Block-mean downsampling by factor k along every axis. A A^T = k^{-rank} I,
// so the exact pseudo-inverse is k^{rank} A^T.
class AvgPoolDownsampleOp final : public LinearOperator {
 public:
  AvgPoolDownsampleOp(Shape input_shape, int factor)
      : in_(std::move(input_shape)), factor_(factor) {
    if (factor_ < 1) throw ConfigError("pool factor must be >= 1");
    if (in_.empty() || in_.size() > 2) throw ConfigError("avgpool supports rank 1 or 2");
    out_ = in_;
    for (std::size_t& d : out_) {
      if (d % static_cast<std::size_t>(factor_) != 0)
        throw ConfigError("pool factor must divide every axis length");
      d /= static_cast<std::size_t>(factor_);
    }
  }

  Tensor apply(const Tensor& x) const override {
    check_input(x);
    Tensor y(out_);
    const double inv = 1.0 / block_size();
    if (in_.size() == 1) {
      for (std::size_t o = 0; o < out_[0]; ++o) {
        double acc = 0.0;
        for (int m = 0; m < factor_; ++m)
          acc += x[o * static_cast<std::size_t>(factor_) + static_cast<std::size_t>(m)];
        y[o] = acc * inv;
      }
      return y;
    }
    for (std::size_t r = 0; r < out_[0]; ++r)
      for (std::size_t c = 0; c < out_[1]; ++c) {
        double acc = 0.0;
        for (int dr = 0; dr < factor_; ++dr)
          for (int dc = 0; dc < factor_; ++dc)
            acc += x.at(r * static_cast<std::size_t>(factor_) + static_cast<std::size_t>(dr),
                        c * static_cast<std::size_t>(factor_) + static_cast<std::size_t>(dc));
        y.at(r, c) = acc * inv;
      }
    return y;
  }

  Tensor adjoint(const Tensor& r) const override {
    check_output(r);
    Tensor x(in_);
    const double inv = 1.0 / block_size();
    if (in_.size() == 1) {
      for (std::size_t i = 0; i < in_[0]; ++i)
        x[i] = r[i / static_cast<std::size_t>(factor_)] * inv;
      return x;
    }
    for (std::size_t i = 0; i < in_[0]; ++i)
      for (std::size_t j = 0; j < in_[1]; ++j)
        x.at(i, j) = r.at(i / static_cast<std::size_t>(factor_),
                          j / static_cast<std::size_t>(factor_)) * inv;
    return x;
  }

  const Shape& input_shape() const override { return in_; }
  const Shape& output_shape() const override { return out_; }
  std::string name() const override { return "avgpool"; }

  int factor() const { return factor_; }
  double block_size() const {
    return std::pow(static_cast<double>(factor_), static_cast<double>(in_.size()));
  }

 private:
  Shape in_;
  Shape out_;
  int factor_;
};

struct PinvSolverConfig {
  int max_iters = 50;
  double tol = 1e-8;
  double damping = 0.0;  // lambda in (A A^T + lambda I)

  void validate() const {
    if (max_iters < 1) throw ConfigError("pinv.max_iters must be >= 1");
    if (!(tol > 0.0)) throw ConfigError("pinv.tol must be > 0");
    if (damping < 0.0) throw ConfigError("pinv.damping must be >= 0");
  }
};

struct PinvResult {
  Tensor v;             // measurement-space solution, A^dag r = A^T v
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// Conjugate gradients on (A A^T + lambda I) v = r. Non-convergence is reported
// in the result, not thrown.
inline PinvResult pinv_apply(const LinearOperator& op, const Tensor& r,
                             const PinvSolverConfig& cfg = {}) {
  cfg.validate();
  auto normal_op = [&](const Tensor& v) {
    Tensor out = op.apply(op.adjoint(v));
    if (cfg.damping > 0.0) axpy(cfg.damping, v, out);
    return out;
  };

  PinvResult res;
  res.v = Tensor::zeros(r.shape);
  const double rnorm = norm2(r);
  if (rnorm == 0.0) {
    res.converged = true;
    return res;
  }

  Tensor resid = r;           // r - M v with v = 0
  Tensor p = resid;
  double rs = dot(resid, resid);
  for (int it = 0; it < cfg.max_iters; ++it) {
    Tensor mp = normal_op(p);
    const double denom = dot(p, mp);
    if (denom <= 0.0) break;  // hit the null space; best effort so far
    const double alpha = rs / denom;
    axpy(alpha, p, res.v);
    axpy(-alpha, mp, resid);
    const double rs_next = dot(resid, resid);
    res.iterations = it + 1;
    if (std::sqrt(rs_next) <= cfg.tol * rnorm) {
      rs = rs_next;
      break;
    }
    const double beta = rs_next / rs;
    rs = rs_next;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = resid[i] + beta * p[i];
  }

  // Report the true residual, not the recursive one.
  Tensor final_resid = r - normal_op(res.v);
  res.rel_residual = norm2(final_resid) / rnorm;
  res.converged = res.rel_residual <= cfg.tol;
  return res;
}

// Lifts a measurement into signal space to seed the bridge at t = 1.
// Shape-preserving operators pass the measurement through unchanged, except
// the mask which projects so missing pixels start at zero.
inline Tensor lift_measurement(const LinearOperator& op, const Tensor& y,
                               const PinvSolverConfig& cfg = {}) {
  if (y.shape != op.output_shape())
    throw ShapeError("lift_measurement: measurement shape " + shape_str(y.shape) +
                     " does not match operator output " + shape_str(op.output_shape()));
  if (dynamic_cast<const MaskOp*>(&op) != nullptr) return op.adjoint(y);
  if (op.shape_preserving()) return y;
  return op.adjoint(pinv_apply(op, y, cfg).v);
}

// Nonlinear forward map with a surrogate pseudo-inverse, the hook that lets
// deep guidance run where no standard gradient exists.
class NonlinearOperator {
 public:
  virtual ~NonlinearOperator() = default;
  virtual Tensor apply(const Tensor& x) const = 0;
  virtual Tensor surrogate_pinv(const Tensor& y) const = 0;
  virtual std::string name() const = 0;
};

class UniformQuantizer final : public NonlinearOperator {
 public:
  explicit UniformQuantizer(double delta) : delta_(delta) {
    if (!(delta > 0.0)) throw ConfigError("quantizer delta must be > 0");
  }

  Tensor apply(const Tensor& x) const override {
    Tensor y = x;
    for (double& v : y.data) v = delta_ * std::round(v / delta_);
    return y;
  }

  // Dequantization: the lattice point is its own best unquantized estimate.
  Tensor surrogate_pinv(const Tensor& y) const override { return y; }

  std::string name() const override { return "quantizer"; }
  double delta() const { return delta_; }

 private:
  double delta_;
};

// Non-owning sum type handed to the sampler: one of linear/nonlinear.
class ForwardOp {
 public:
  ForwardOp() = default;
  static ForwardOp linear(const LinearOperator& a) { return ForwardOp(&a, nullptr); }
  static ForwardOp nonlinear(const NonlinearOperator& q) { return ForwardOp(nullptr, &q); }

  explicit operator bool() const { return lin_ != nullptr || nonlin_ != nullptr; }
  bool is_linear() const { return lin_ != nullptr; }
  const LinearOperator& lin() const {
    if (!lin_) throw ConfigError("operation requires a linear operator");
    return *lin_;
  }
  const NonlinearOperator& nonlin() const {
    if (!nonlin_) throw ConfigError("operation requires a nonlinear operator");
    return *nonlin_;
  }

  Tensor apply(const Tensor& x) const {
    if (lin_) return lin_->apply(x);
    return nonlin().apply(x);
  }
  std::string name() const { return lin_ ? lin_->name() : nonlin().name(); }

 private:
  ForwardOp(const LinearOperator* l, const NonlinearOperator* n) : lin_(l), nonlin_(n) {}
  const LinearOperator* lin_ = nullptr;
  const NonlinearOperator* nonlin_ = nullptr;
};

// Power iteration estimate of ||A||^2 = lambda_max(A^T A).
inline double operator_norm_sq(const LinearOperator& op, int iters = 100,
                               std::uint64_t seed = 1234) {
  CounterRng rng(seed);
  Tensor v = rng.normal_tensor(op.input_shape());
  const double n0 = norm2(v);
  if (n0 == 0.0) return 0.0;
  v = (1.0 / n0) * v;
  double lambda = 0.0;
  for (int i = 0; i < iters; ++i) {
    Tensor w = op.adjoint(op.apply(v));
    lambda = dot(v, w);  // Rayleigh quotient, v is unit
    const double n = norm2(w);
    if (n == 0.0) return 0.0;
    v = (1.0 / n) * w;
  }
  return lambda;
}

}  // namespace ddb
