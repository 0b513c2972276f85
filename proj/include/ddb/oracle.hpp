#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ddb/errors.hpp"
#include "ddb/linop.hpp"
#include "ddb/schedule.hpp"
#include "ddb/tensor.hpp"

namespace ddb {

// Denoiser contract: predict(x_t, t) estimates the clean signal, vjp pulls a
// cotangent back through that map. Implementations are immutable; both calls
// are pure and safe to run concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor predict(const Tensor& x_t, double t) const = 0;
  virtual Tensor vjp(const Tensor& x_t, double t, const Tensor& cotangent) const = 0;
};

// Exact conditional mean E[x0 | x_t] for the jointly Gaussian model
//   x0 ~ N(mu0, S0),  x1 = A x0 + n,  n ~ N(0, noise_std^2 I),
//   x_t = (1-alpha_t) x0 + alpha_t x1 + sigma_t z.
// predict is affine in x_t and vjp is the constant transposed gain, which is
// what makes this usable as a closed-form stand-in for a trained denoiser.
class GaussianOracle final : public Denoiser {
 public:
  // Diagonal prior covariance. Identity/Mask operators keep an O(d) path;
  // anything else falls back to dense linear algebra.
  GaussianOracle(Tensor mu0, Tensor sigma0_diag, const LinearOperator& a,
                 double noise_std, BridgeSchedule sched)
      : mu0_(std::move(mu0)), noise_std_(noise_std), sched_(std::move(sched)) {
    require_same_shape(mu0_, sigma0_diag, "gaussian oracle prior");
    check_operator(a);
    for (double v : sigma0_diag.data)
      if (v < 0.0) throw ConfigError("prior variances must be >= 0");
    if (diagonal_operator(a)) {
      diag_ = true;
      s0_diag_ = std::move(sigma0_diag);
      a_diag_ = operator_diagonal(a);
    } else {
      init_dense(a, diag_matrix(sigma0_diag));
    }
  }

  // Full prior covariance; always dense.
  GaussianOracle(Tensor mu0, Eigen::MatrixXd sigma0, const LinearOperator& a,
                 double noise_std, BridgeSchedule sched)
      : mu0_(std::move(mu0)), noise_std_(noise_std), sched_(std::move(sched)) {
    check_operator(a);
    if (sigma0.rows() != static_cast<Eigen::Index>(mu0_.size()) ||
        sigma0.cols() != sigma0.rows())
      throw ShapeError("prior covariance must be d x d");
    init_dense(a, std::move(sigma0));
  }

  Tensor predict(const Tensor& x_t, double t) const override {
    require_same_shape(x_t, mu0_, "gaussian predict");
    if (t == 0.0) return x_t;  // x0 is fully observed at t = 0
    const auto c = sched_.coefficients(t);
    if (diag_) {
      Tensor out = mu0_;
      for (std::size_t j = 0; j < out.size(); ++j) {
        const double m = (1.0 - c.alpha_t) + c.alpha_t * a_diag_[j];
        const double ctt = ctt_diag(m, s0_diag_[j], c);
        const double gain = s0_diag_[j] * m / ctt;
        out[j] = mu0_[j] + gain * (x_t[j] - m * mu0_[j]);
      }
      return out;
    }
    const Eigen::MatrixXd m = mix_matrix(c);
    const Eigen::VectorXd rhs = to_vec(x_t) - m * to_vec(mu0_);
    const Eigen::VectorXd w = solve_ctt(m, c, rhs);
    return from_vec(to_vec(mu0_) + s0_ * (m.transpose() * w), mu0_.shape);
  }

  Tensor vjp(const Tensor& x_t, double t, const Tensor& u) const override {
    require_same_shape(x_t, mu0_, "gaussian vjp");
    require_same_shape(u, mu0_, "gaussian vjp cotangent");
    if (t == 0.0) return u;  // J = I at t = 0
    const auto c = sched_.coefficients(t);
    if (diag_) {
      Tensor out = u;
      for (std::size_t j = 0; j < out.size(); ++j) {
        const double m = (1.0 - c.alpha_t) + c.alpha_t * a_diag_[j];
        out[j] = u[j] * s0_diag_[j] * m / ctt_diag(m, s0_diag_[j], c);
      }
      return out;
    }
    const Eigen::MatrixXd m = mix_matrix(c);
    const Eigen::VectorXd z = m * (s0_ * to_vec(u));
    return from_vec(solve_ctt(m, c, z), mu0_.shape);
  }

  // Number of predict/vjp solves that needed extra damping to go through.
  long damped_solves() const { return damped_solves_.load(); }

  const Tensor& mu0() const { return mu0_; }

 private:
  void check_operator(const LinearOperator& a) const {
    if (!a.shape_preserving())
      throw ConfigError("gaussian oracle requires a shape-preserving operator");
    if (a.input_shape() != mu0_.shape)
      throw ShapeError("operator shape does not match prior mean");
    if (mu0_.size() > 4096)
      throw ConfigError("gaussian oracle supports at most 4096 dimensions");
    if (noise_std_ < 0.0) throw ConfigError("noise std must be >= 0");
  }

  static bool diagonal_operator(const LinearOperator& a) {
    return dynamic_cast<const IdentityOp*>(&a) != nullptr ||
           dynamic_cast<const MaskOp*>(&a) != nullptr;
  }

  static Tensor operator_diagonal(const LinearOperator& a) {
    if (const auto* m = dynamic_cast<const MaskOp*>(&a)) return m->mask();
    return Tensor::full(a.input_shape(), 1.0);
  }

  static Eigen::MatrixXd diag_matrix(const Tensor& d) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d.size()),
                                              static_cast<Eigen::Index>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = d[i];
    return m;
  }

  void init_dense(const LinearOperator& a, Eigen::MatrixXd sigma0) {
    diag_ = false;
    s0_ = std::move(sigma0);
    const auto d = static_cast<Eigen::Index>(mu0_.size());
    a_mat_.resize(d, d);
    Tensor basis = Tensor::zeros(mu0_.shape);
    for (Eigen::Index j = 0; j < d; ++j) {
      basis.data.assign(basis.size(), 0.0);
      basis[static_cast<std::size_t>(j)] = 1.0;
      const Tensor col = a.apply(basis);
      for (Eigen::Index i = 0; i < d; ++i) a_mat_(i, j) = col[static_cast<std::size_t>(i)];
    }
  }

  double ctt_diag(double m, double s0, const ScheduleCoefficients& c) const {
    double ctt = m * m * s0 +
                 c.alpha_t * c.alpha_t * noise_std_ * noise_std_ +
                 c.sigma_t * c.sigma_t;
    if (ctt <= 0.0) {
      ctt = 1e-300;
      damped_solves_.fetch_add(1);
    }
    return ctt;
  }

  Eigen::MatrixXd mix_matrix(const ScheduleCoefficients& c) const {
    const auto d = a_mat_.rows();
    return (1.0 - c.alpha_t) * Eigen::MatrixXd::Identity(d, d) + c.alpha_t * a_mat_;
  }

  Eigen::VectorXd solve_ctt(const Eigen::MatrixXd& m, const ScheduleCoefficients& c,
                            const Eigen::VectorXd& rhs) const {
    const auto d = m.rows();
    const double iso = c.alpha_t * c.alpha_t * noise_std_ * noise_std_ +
                       c.sigma_t * c.sigma_t;
    const Eigen::MatrixXd ctt =
        m * s0_ * m.transpose() + iso * Eigen::MatrixXd::Identity(d, d);
    const double scale = ctt.trace() / static_cast<double>(d);
    double damping = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::MatrixXd sys = ctt;
      if (damping > 0.0) sys.diagonal().array() += damping;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(sys);
      if (ldlt.info() == Eigen::Success) {
        const Eigen::VectorXd w = ldlt.solve(rhs);
        const double resid = (sys * w - rhs).norm();
        if (resid <= 1e-8 * std::max(rhs.norm(), 1e-300)) {
          if (damping > 0.0) damped_solves_.fetch_add(1);
          return w;
        }
      }
      damping = (damping == 0.0) ? 1e-14 * std::max(scale, 1e-300) : damping * 100.0;
    }
    damped_solves_.fetch_add(1);
    Eigen::MatrixXd sys = ctt;
    sys.diagonal().array() += damping;
    return Eigen::LDLT<Eigen::MatrixXd>(sys).solve(rhs);
  }

  static Eigen::VectorXd to_vec(const Tensor& t) {
    return Eigen::Map<const Eigen::VectorXd>(t.data.data(),
                                             static_cast<Eigen::Index>(t.size()));
  }
  static Tensor from_vec(const Eigen::VectorXd& v, const Shape& shape) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = v[static_cast<Eigen::Index>(i)];
    return t;
  }

  Tensor mu0_;
  double noise_std_;
  BridgeSchedule sched_;

  bool diag_ = false;
  Tensor s0_diag_;
  Tensor a_diag_;
  Eigen::MatrixXd s0_;
  Eigen::MatrixXd a_mat_;

  mutable std::atomic<long> damped_solves_{0};
};

// Exact minimizer of the bridge regression loss over a finite paired dataset:
// the posterior mean under the empirical pair distribution, with per-pair
// centers mu_k = (1-alpha_t) x0_k + alpha_t x1_k and Gaussian weights at
// temperature max(sigma_t, sigma_floor). Weights are computed in log space;
// sigma_t spans several orders of magnitude across an NFE=1000 grid.
class MixtureOracle final : public Denoiser {
 public:
  MixtureOracle(std::vector<Tensor> x0s, std::vector<Tensor> x1s,
                BridgeSchedule sched, double sigma_floor = 1e-3)
      : x0s_(std::move(x0s)), x1s_(std::move(x1s)),
        sched_(std::move(sched)), sigma_floor_(sigma_floor) {
    if (x0s_.empty() || x0s_.size() != x1s_.size())
      throw ConfigError("mixture oracle needs K >= 1 matched pairs");
    if (!(sigma_floor_ > 0.0)) throw ConfigError("sigma_floor must be > 0");
    for (std::size_t k = 0; k < x0s_.size(); ++k) {
      require_same_shape(x0s_[k], x0s_[0], "mixture dataset");
      require_same_shape(x1s_[k], x0s_[0], "mixture dataset");
    }
  }

  std::size_t components() const { return x0s_.size(); }
  double sigma_floor() const { return sigma_floor_; }

  std::vector<double> weights(const Tensor& x_t, double t) const {
    require_same_shape(x_t, x0s_[0], "mixture weights");
    const auto c = sched_.coefficients(t);
    const double s = std::max(c.sigma_t, sigma_floor_);
    const double inv2s2 = 1.0 / (2.0 * s * s);
    const std::size_t k_count = x0s_.size();
    std::vector<double> logits(k_count);
    double lmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < k_count; ++k) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < x_t.size(); ++j) {
        const double mu = (1.0 - c.alpha_t) * x0s_[k][j] + c.alpha_t * x1s_[k][j];
        const double diff = x_t[j] - mu;
        d2 += diff * diff;
      }
      logits[k] = -d2 * inv2s2;
      lmax = std::max(lmax, logits[k]);
    }
    double norm = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      logits[k] = std::exp(logits[k] - lmax);
      norm += logits[k];
    }
    for (double& w : logits) w /= norm;
    return logits;
  }

  Tensor predict(const Tensor& x_t, double t) const override {
    const std::vector<double> w = weights(x_t, t);
    Tensor out = Tensor::zeros(x0s_[0].shape);
    for (std::size_t k = 0; k < w.size(); ++k) axpy(w[k], x0s_[k], out);
    return out;
  }

  // Softmax pullback:
  //   J^T u = s^-2 sum_k w_k (<x0_k, u> - <xhat, u>) (mu_k - mu_bar).
  Tensor vjp(const Tensor& x_t, double t, const Tensor& u) const override {
    require_same_shape(u, x0s_[0], "mixture vjp cotangent");
    const auto c = sched_.coefficients(t);
    const double s = std::max(c.sigma_t, sigma_floor_);
    const std::vector<double> w = weights(x_t, t);

    const std::size_t k_count = x0s_.size();
    const std::size_t d = x0s_[0].size();
    Tensor xhat = Tensor::zeros(x0s_[0].shape);
    Tensor mu_bar = Tensor::zeros(x0s_[0].shape);
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t j = 0; j < d; ++j) {
        const double mu = (1.0 - c.alpha_t) * x0s_[k][j] + c.alpha_t * x1s_[k][j];
        xhat[j] += w[k] * x0s_[k][j];
        mu_bar[j] += w[k] * mu;
      }
    }
    const double xhat_u = dot(xhat, u);
    Tensor out = Tensor::zeros(x0s_[0].shape);
    const double inv_s2 = 1.0 / (s * s);
    for (std::size_t k = 0; k < k_count; ++k) {
      const double coef = w[k] * (dot(x0s_[k], u) - xhat_u) * inv_s2;
      if (coef == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        const double mu = (1.0 - c.alpha_t) * x0s_[k][j] + c.alpha_t * x1s_[k][j];
        out[j] += coef * (mu - mu_bar[j]);
      }
    }
    return out;
  }

  const std::vector<Tensor>& clean_images() const { return x0s_; }
  const std::vector<Tensor>& corrupted_images() const { return x1s_; }

 private:
  std::vector<Tensor> x0s_;
  std::vector<Tensor> x1s_;
  BridgeSchedule sched_;
  double sigma_floor_;
};

// Central-difference pullback: (J^T u)_j = d<predict(x + h e_j), u>/dh / 2.
// Fallback for denoisers without an analytic vjp and the test oracle for
// the ones that have it.
inline Tensor fd_vjp(const Denoiser& den, const Tensor& x_t, double t,
                     const Tensor& u, double h) {
  if (!(h > 0.0)) throw DomainError("fd_vjp requires h > 0");
  Tensor out = Tensor::zeros(x_t.shape);
  Tensor probe = x_t;
  for (std::size_t j = 0; j < x_t.size(); ++j) {
    const double orig = probe[j];
    probe[j] = orig + h;
    const double fp = dot(den.predict(probe, t), u);
    probe[j] = orig - h;
    const double fm = dot(den.predict(probe, t), u);
    probe[j] = orig;
    out[j] = (fp - fm) / (2.0 * h);
  }
  return out;
}

}  // namespace ddb
