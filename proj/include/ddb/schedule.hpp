#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ddb/errors.hpp"

namespace ddb {

// Coefficients of the bridge marginal  x_t = (1-alpha_t) x0 + alpha_t x1 + sigma_t z.
struct ScheduleCoefficients {
  double alpha_t = 0.0;
  double sigma_t = 0.0;
};

// Coefficients of the ancestral posterior p(x_s | x0, x_t) for s < t:
//   x_s = (1 - alpha_sq_st) x0 + alpha_sq_st x_t + sqrt(sigma_sq_st) z.
struct TransitionCoefficients {
  double alpha_sq_st = 0.0;
  double sigma_sq_st = 0.0;
};

// Linear-symmetric beta profile. beta rises on [0, 0.5) and falls on [0.5, 1];
// the two branches as printed leave an O(beta_min) jump at t = 0.5
// (left limit beta_max, right limit beta_max + beta_min). Kept as is.
struct BetaProfile {
  double beta_min = 1e-4;
  double beta_max = 2e-2;

  double beta_d() const { return beta_max - beta_min; }

  void validate() const {
    if (!(beta_min > 0.0))
      throw ConfigError("beta_min must be > 0, got " + std::to_string(beta_min));
    if (!(beta_max > beta_min))
      throw ConfigError("beta_max must exceed beta_min");
  }
};

inline void require_unit_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0))
    throw DomainError(std::string(what) + ": t must lie in [0,1], got " + std::to_string(t));
}

inline double beta(const BetaProfile& p, double t) {
  require_unit_time(t, "beta");
  if (t < 0.5) return p.beta_min + 2.0 * p.beta_d() * t;
  return 2.0 * p.beta_max - 2.0 * p.beta_d() * t;
}

// gamma_t^2 = int_0^t beta, exact piecewise-quadratic antiderivative.
inline double gamma_sq(const BetaProfile& p, double t) {
  require_unit_time(t, "gamma_sq");
  const double bd = p.beta_d();
  if (t <= 0.5) return p.beta_min * t + bd * t * t;
  const double first_half = 0.5 * p.beta_min + 0.25 * bd;
  return first_half + 2.0 * p.beta_max * (t - 0.5) - bd * (t * t - 0.25);
}

inline double gamma_sq_total(const BetaProfile& p) { return gamma_sq(p, 1.0); }

inline double bar_gamma_sq(const BetaProfile& p, double t) {
  return gamma_sq_total(p) - gamma_sq(p, t);
}

// Monotone table for the IR-SDE integrated rate theta_bar(t); linear
// interpolation between knots. theta_bar(0) must be 0.
struct ThetaBarTable {
  std::vector<double> t;
  std::vector<double> value;

  void validate() const {
    if (t.size() < 2 || t.size() != value.size())
      throw ConfigError("theta_bar table needs >= 2 (t, value) rows");
    if (t.front() != 0.0 || t.back() != 1.0)
      throw ConfigError("theta_bar table must span t in [0,1]");
    if (value.front() != 0.0)
      throw ConfigError("theta_bar(0) must be 0");
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (!(t[i] > t[i - 1])) throw ConfigError("theta_bar table times must increase");
      if (value[i] < value[i - 1]) throw ConfigError("theta_bar must be non-decreasing");
    }
  }

  double operator()(double x) const {
    require_unit_time(x, "theta_bar");
    std::size_t hi = 1;
    while (hi + 1 < t.size() && t[hi] < x) ++hi;
    const double w = (x - t[hi - 1]) / (t[hi] - t[hi - 1]);
    return value[hi - 1] + w * (value[hi] - value[hi - 1]);
  }
};

enum class ScheduleKind { I2SB, InDI, IRSDE };

inline const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::I2SB: return "i2sb";
    case ScheduleKind::InDI: return "indi";
    case ScheduleKind::IRSDE: return "irsde";
  }
  return "?";
}

// One of the three closed-form bridge families. Immutable after construction;
// all member functions are pure.
class BridgeSchedule {
 public:
  static BridgeSchedule i2sb(BetaProfile profile = {}) {
    profile.validate();
    BridgeSchedule s(ScheduleKind::I2SB);
    s.profile_ = profile;
    return s;
  }

  static BridgeSchedule indi(double eps = 0.01) {
    if (eps < 0.0) throw ConfigError("indi eps must be >= 0");
    BridgeSchedule s(ScheduleKind::InDI);
    s.eps_ = eps;
    return s;
  }

  static BridgeSchedule irsde(ThetaBarTable table, double lambda) {
    table.validate();
    if (!(lambda > 0.0)) throw ConfigError("irsde lambda must be > 0");
    BridgeSchedule s(ScheduleKind::IRSDE);
    s.theta_bar_ = std::move(table);
    s.lambda_ = lambda;
    return s;
  }

  ScheduleKind kind() const { return kind_; }
  const BetaProfile& profile() const {
    if (kind_ != ScheduleKind::I2SB) throw ConfigError("schedule has no beta profile");
    return profile_;
  }
  double indi_eps() const { return eps_; }

  ScheduleCoefficients coefficients(double t) const {
    require_unit_time(t, "coefficients");
    switch (kind_) {
      case ScheduleKind::I2SB: {
        const double g2 = gamma_sq(profile_, t);
        const double total = gamma_sq_total(profile_);
        const double bg2 = total - g2;
        return {g2 / total, std::sqrt(g2 * bg2 / total)};
      }
      case ScheduleKind::InDI:
        return {t, t * eps_};
      case ScheduleKind::IRSDE: {
        const double th = theta_bar_(t);
        return {1.0 - std::exp(-th),
                lambda_ * std::sqrt(1.0 - std::exp(-2.0 * th))};
      }
    }
    throw Error("unreachable");
  }

  TransitionCoefficients transition(double s, double t) const {
    require_unit_time(t, "transition");
    if (!(s >= 0.0 && s < t))
      throw DomainError("transition requires 0 <= s < t <= 1, got s=" +
                        std::to_string(s) + " t=" + std::to_string(t));
    switch (kind_) {
      case ScheduleKind::I2SB: {
        const double gs2 = gamma_sq(profile_, s);
        const double gt2 = gamma_sq(profile_, t);
        return {gs2 / gt2, (gt2 - gs2) * gs2 / gt2};
      }
      case ScheduleKind::InDI:
        // Constant eps makes s^2 (eps_s^2 - eps_t^2) vanish identically,
        // so the stochastic transition degenerates to the deterministic one.
        return {s / t, 0.0};
      case ScheduleKind::IRSDE:
        throw UnsupportedError(
            "IR-SDE ancestral transitions are not defined here; its reverse-SDE "
            "sampler is out of scope");
    }
    throw Error("unreachable");
  }

 private:
  explicit BridgeSchedule(ScheduleKind k) : kind_(k) {}

  ScheduleKind kind_;
  BetaProfile profile_{};
  double eps_ = 0.01;
  ThetaBarTable theta_bar_{};
  double lambda_ = 0.0;
};

// Theorem-1 reparametrization of an I2SB profile as InDI:
//   t_indi    = gamma_t^2 / (gamma_t^2 + bar_gamma_t^2)
//   eps_t^2   = (bar_gamma_t^2 / gamma_t^2) (gamma_t^2 + bar_gamma_t^2)
// Undefined at t = 0 where gamma_0^2 = 0.
struct IndiTimeMap {
  double t_indi;
  double eps_sq_indi;
};

inline IndiTimeMap indi_time_map(const BetaProfile& p, double t) {
  require_unit_time(t, "indi_time_map");
  if (t == 0.0) throw DomainError("indi_time_map undefined at t=0 (gamma_0^2 = 0)");
  const double g2 = gamma_sq(p, t);
  const double total = gamma_sq_total(p);
  const double bg2 = total - g2;
  return {g2 / total, (bg2 / g2) * total};
}

// Residual of the total variance condition
//   (alpha_sq_st * sigma_t)^2 + sigma_sq_st - sigma_s^2,
// zero (up to rounding) for I2SB and InDI.
inline double total_variance_residual(const BridgeSchedule& sched, double s, double t) {
  if (!(s > 0.0 && s < t && t <= 1.0))
    throw DomainError("total_variance_residual requires 0 < s < t <= 1");
  const auto cs = sched.coefficients(s);
  const auto ct = sched.coefficients(t);
  const auto tr = sched.transition(s, t);
  const double a = tr.alpha_sq_st * ct.sigma_t;
  return a * a + tr.sigma_sq_st - cs.sigma_t * cs.sigma_t;
}

enum class GridKind { Uniform, Quadratic };

inline const char* to_string(GridKind k) {
  return k == GridKind::Uniform ? "uniform" : "quadratic";
}

// N = nfe transitions, N+1 grid points, t_0 = 0 and t_N = 1 exact.
inline std::vector<double> timestep_grid(int nfe, GridKind kind) {
  if (nfe < 1) throw DomainError("timestep_grid requires nfe >= 1");
  const double n = static_cast<double>(nfe);
  std::vector<double> grid(static_cast<std::size_t>(nfe) + 1);
  for (int i = 0; i <= nfe; ++i) {
    const double u = static_cast<double>(i) / n;
    grid[static_cast<std::size_t>(i)] = (kind == GridKind::Quadratic) ? u * u : u;
  }
  return grid;
}

}  // namespace ddb
