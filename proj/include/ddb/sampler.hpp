#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ddb/errors.hpp"
#include "ddb/linop.hpp"
#include "ddb/oracle.hpp"
#include "ddb/rng.hpp"
#include "ddb/schedule.hpp"
#include "ddb/tensor.hpp"

namespace ddb {

enum class GuidanceMode { None, Adjoint, Deep };
enum class Precond { Adjoint, Pinv };
enum class StochasticMode { Ancestral, OtOde };

inline const char* to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::None: return "ddb";
    case GuidanceMode::Adjoint: return "cddb";
    case GuidanceMode::Deep: return "cddb_deep";
  }
  return "?";
}

inline GuidanceMode parse_method(const std::string& name) {
  if (name == "ddb") return GuidanceMode::None;
  if (name == "cddb") return GuidanceMode::Adjoint;
  if (name == "cddb_deep") return GuidanceMode::Deep;
  throw ConfigError("unknown sampler.method '" + name + "'");
}

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::None;
  Precond precond = Precond::Pinv;  // deep-guidance preconditioner
  double c = 1.0;                   // step-size scale
  int gd_steps = 1;                 // corrections per sampling iteration
  bool replacement = false;         // mask operators only

  void validate() const {
    if (c < 0.0) throw ConfigError("guidance.c must be >= 0");
    if (gd_steps < 1) throw ConfigError("guidance.gd_steps must be >= 1");
  }
};

struct SamplerConfig {
  int nfe = 20;
  GridKind grid = GridKind::Quadratic;
  StochasticMode mode = StochasticMode::Ancestral;
  std::uint64_t seed = 0;

  void validate() const {
    if (nfe < 1) throw ConfigError("sampler.nfe must be >= 1");
  }
};

struct TrajectoryState {
  int i = 0;          // grid index just reached
  Tensor x_i;         // iterate at that index
  Tensor x0_hat;      // denoised estimate the step was built from
  double residual = 0.0;  // ||y - A(x0_hat)||
};

struct RunResult {
  Tensor x0;
  std::vector<TrajectoryState> log;
  int pinv_warnings = 0;
};

// Constant step size scaled by the transition weight between adjacent grid
// times: rho_i = (1 - alpha^2_{t_i | t_{i+1}}) c.
inline double step_size(std::size_t i, double c, const BridgeSchedule& sched,
                        const std::vector<double>& grid) {
  if (i + 1 >= grid.size()) throw DomainError("step_size: grid index out of range");
  const double s = grid[i];
  const double t = grid[i + 1];
  return (1.0 - sched.transition(s, t).alpha_sq_st) * c;
}

// One ancestral transition t -> s:
//   x_s = (1 - a2) x0_hat + a2 x_t + sqrt(sigma_sq) z.
// Ancestral mode always draws z (even when sigma_sq happens to be 0) so the
// stream position depends only on the step count, keeping guided and
// unguided runs seed-comparable. OT-ODE draws nothing.
inline Tensor ddb_step(const Tensor& x_t, const Tensor& x0_hat, double s, double t,
                       const BridgeSchedule& sched, CounterRng* rng,
                       StochasticMode mode) {
  require_same_shape(x_t, x0_hat, "ddb_step");
  const auto tr = sched.transition(s, t);
  Tensor out(x_t.shape);
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = (1.0 - tr.alpha_sq_st) * x0_hat[j] + tr.alpha_sq_st * x_t[j];
  if (mode == StochasticMode::Ancestral) {
    if (rng == nullptr) throw ConfigError("ancestral sampling requires an rng");
    const double sd = std::sqrt(tr.sigma_sq_st);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += sd * rng->normal();
  }
  return out;
}

// Shallow data-consistency step: the ancestral transition plus gd_steps
// gradient-descent corrections A^T(y - A xw) at fixed step rho, accumulated
// and added after the transition.
inline Tensor cddb_step(const Tensor& x_t, const Tensor& x0_hat, const Tensor& y,
                        const LinearOperator& op, double rho, int gd_steps,
                        double s, double t, const BridgeSchedule& sched,
                        CounterRng* rng, StochasticMode mode) {
  Tensor out = ddb_step(x_t, x0_hat, s, t, sched, rng, mode);
  Tensor delta = Tensor::zeros(x0_hat.shape);
  Tensor xw = x0_hat;
  for (int j = 0; j < gd_steps; ++j) {
    const Tensor g = op.adjoint(y - op.apply(xw));
    axpy(rho, g, delta);
    xw = x0_hat + delta;
  }
  return out + delta;
}

// Deep data-consistency step: the correction is the denoiser pullback of a
// preconditioned residual. Linear operators use A^dag (CG) or A^T; nonlinear
// maps use their surrogate pseudo-inverse, which is what makes this path work
// without a standard gradient.
inline Tensor cddb_deep_step(const Tensor& x_t, const Tensor& x0_hat, const Tensor& y,
                             const ForwardOp& op, const Denoiser& den, double rho,
                             Precond precond, const PinvSolverConfig& pinv_cfg,
                             int gd_steps, double s, double t,
                             const BridgeSchedule& sched, CounterRng* rng,
                             StochasticMode mode, int* pinv_warnings = nullptr) {
  Tensor out = ddb_step(x_t, x0_hat, s, t, sched, rng, mode);
  Tensor delta = Tensor::zeros(x0_hat.shape);
  Tensor xw = x0_hat;
  for (int j = 0; j < gd_steps; ++j) {
    const Tensor r = y - op.apply(xw);
    Tensor u;
    if (!op.is_linear()) {
      u = op.nonlin().surrogate_pinv(r);
    } else if (precond == Precond::Pinv) {
      PinvResult pr = pinv_apply(op.lin(), r, pinv_cfg);
      if (!pr.converged && pinv_warnings != nullptr) ++*pinv_warnings;
      u = op.lin().adjoint(pr.v);
    } else {
      u = op.lin().adjoint(r);
    }
    const Tensor g = den.vjp(x_t, t, u);
    axpy(rho, g, delta);
    xw = x0_hat + delta;
  }
  return out + delta;
}

// Overwrites observed pixels of the denoised estimate with the measurement.
inline Tensor replacement_project(const Tensor& x0_hat, const Tensor& y,
                                  const LinearOperator& op) {
  const auto* mask_op = dynamic_cast<const MaskOp*>(&op);
  if (mask_op == nullptr)
    throw ConfigError("replacement projection requires a mask operator");
  require_same_shape(x0_hat, y, "replacement_project");
  Tensor out = x0_hat;
  const Tensor& m = mask_op->mask();
  for (std::size_t j = 0; j < out.size(); ++j)
    if (m[j] != 0.0) out[j] = y[j];
  return out;
}

// Full sampling loop from t = 1 down to t = 0. x1 is the lifted measurement
// (or the raw measurement for shape-preserving operators).
inline RunResult run(const Tensor& x1, const Denoiser& den, const ForwardOp& op,
                     const Tensor& y, const BridgeSchedule& sched,
                     const SamplerConfig& scfg, const GuidanceConfig& gcfg,
                     const PinvSolverConfig& pinv_cfg = {}) {
  scfg.validate();
  gcfg.validate();
  if (gcfg.mode == GuidanceMode::Adjoint && !op.is_linear())
    throw ConfigError("shallow guidance needs a linear operator; use deep guidance");
  if (gcfg.replacement &&
      (!op.is_linear() || dynamic_cast<const MaskOp*>(&op.lin()) == nullptr))
    throw ConfigError("replacement is only defined for mask operators");
  if (op.is_linear() && x1.shape != op.lin().input_shape())
    throw ShapeError("run: x1 must live in the operator input space");

  const std::vector<double> grid = timestep_grid(scfg.nfe, scfg.grid);
  const std::size_t n = grid.size() - 1;
  CounterRng rng(scfg.seed);

  RunResult res;
  res.log.reserve(n);
  Tensor x = x1;
  for (std::size_t i = n; i >= 1; --i) {
    const double t = grid[i];
    const double s = grid[i - 1];
    Tensor x0_hat = den.predict(x, t);
    if (gcfg.replacement) x0_hat = replacement_project(x0_hat, y, op.lin());

    switch (gcfg.mode) {
      case GuidanceMode::None:
        x = ddb_step(x, x0_hat, s, t, sched, &rng, scfg.mode);
        break;
      case GuidanceMode::Adjoint: {
        const double rho = step_size(i - 1, gcfg.c, sched, grid);
        x = cddb_step(x, x0_hat, y, op.lin(), rho, gcfg.gd_steps, s, t, sched,
                      &rng, scfg.mode);
        break;
      }
      case GuidanceMode::Deep: {
        const double rho = step_size(i - 1, gcfg.c, sched, grid);
        x = cddb_deep_step(x, x0_hat, y, op, den, rho, gcfg.precond, pinv_cfg,
                           gcfg.gd_steps, s, t, sched, &rng, scfg.mode,
                           &res.pinv_warnings);
        break;
      }
    }

    if (!all_finite(x))
      throw DivergenceError(
          "sampler diverged: non-finite iterate reaching grid index " +
              std::to_string(i - 1),
          static_cast<int>(i - 1));

    TrajectoryState st;
    st.i = static_cast<int>(i - 1);
    st.x_i = x;
    st.residual = norm2(y - op.apply(x0_hat));
    st.x0_hat = std::move(x0_hat);
    res.log.push_back(std::move(st));
  }
  res.x0 = std::move(x);
  return res;
}

}  // namespace ddb
