#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ddb/dataset.hpp"
#include "ddb/errors.hpp"
#include "ddb/io.hpp"
#include "ddb/linop.hpp"
#include "ddb/metrics.hpp"
#include "ddb/oracle.hpp"
#include "ddb/rng.hpp"
#include "ddb/sampler.hpp"
#include "ddb/schedule.hpp"
#include "ddb/tensor.hpp"

namespace ddb {

inline unsigned thread_cap() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("DDB_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1 && v < static_cast<long>(hw)) return static_cast<unsigned>(v);
    if (v >= static_cast<long>(hw)) return hw;
  }
  return hw;
}

// Runs fn(0..count) across worker threads; rethrows the first exception.
// Tasks must be independent; results should go to preassigned slots so the
// outcome does not depend on scheduling.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = std::min<std::size_t>(thread_cap(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct TrialResult {
  std::string method;
  int nfe = 0;
  std::uint64_t seed = 0;
  double psnr = 0.0;
  double mse = 0.0;
  double residual = 0.0;
  double energy_distance = 0.0;
  double runtime_s = 0.0;
  double noise_std = 0.0;
  bool aborted = false;
  std::string note;
  std::uint64_t measurement_hash = 0;  // paired-design witness, not serialized
};

struct GroupSummary {
  std::string method;
  int nfe = 0;
  double noise_std = 0.0;
  std::size_t n = 0;
  double mean_psnr = 0.0, se_psnr = 0.0;
  double mean_mse = 0.0, se_mse = 0.0;
  double mean_residual = 0.0, se_residual = 0.0;
  double energy_distance = 0.0;
  int aborted = 0;
};

struct SweepResult {
  std::vector<TrialResult> trials;
  std::vector<GroupSummary> summary;
};

// Everything a trial needs; immutable while a sweep runs.
struct ExperimentTask {
  const BridgeSchedule* sched = nullptr;
  ForwardOp op;
  const Denoiser* oracle = nullptr;
  DatasetSpec dataset;
  PinvSolverConfig pinv;
  GridKind grid = GridKind::Quadratic;
  StochasticMode mode = StochasticMode::Ancestral;
  GuidanceConfig guidance;  // mode field is overridden per method
  double meas_noise_std = 0.0;
  std::uint64_t base_seed = 0;
};

namespace detail {

inline constexpr std::uint64_t kMeasLabel = 0x3E;
inline constexpr std::uint64_t kTrajLabel = 0x7A;

struct TrialArtifacts {
  TrialResult result;
  Tensor recon;
  Tensor truth;
};

inline TrialArtifacts run_trial(const ExperimentTask& task, const std::string& method,
                                int nfe, std::uint64_t seed_index) {
  TrialArtifacts art;
  art.truth = make_test_sample(task.dataset, seed_index);

  Tensor y = task.op.apply(art.truth);
  if (task.meas_noise_std > 0.0) {
    CounterRng noise(derive_key(task.base_seed, seed_index, kMeasLabel));
    for (double& v : y.data) v += task.meas_noise_std * noise.normal();
  }

  TrialResult& r = art.result;
  r.method = method;
  r.nfe = nfe;
  r.seed = seed_index;
  r.noise_std = task.meas_noise_std;
  r.measurement_hash = content_hash(y);

  Tensor x1 = task.op.is_linear()
                  ? lift_measurement(task.op.lin(), y, task.pinv)
                  : task.op.nonlin().surrogate_pinv(y);

  SamplerConfig scfg;
  scfg.nfe = nfe;
  scfg.grid = task.grid;
  scfg.mode = task.mode;
  // Same trajectory key for every method: paired noise streams by design.
  scfg.seed = derive_key(task.base_seed, seed_index, kTrajLabel);

  GuidanceConfig gcfg = task.guidance;
  gcfg.mode = parse_method(method);

  const auto t_start = std::chrono::steady_clock::now();
  try {
    RunResult run_res = run(x1, *task.oracle, task.op, y, *task.sched, scfg, gcfg,
                            task.pinv);
    art.recon = std::move(run_res.x0);
    r.runtime_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start).count();
    r.mse = mse(art.recon, art.truth);
    r.psnr = psnr(art.recon, art.truth, task.dataset.peak());
    r.residual = residual_norm(task.op, art.recon, y);
  } catch (const DivergenceError& e) {
    r.aborted = true;
    r.note = e.what();
    r.runtime_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start).count();
  }
  return art;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 /= static_cast<double>(v.size() - 1);
  return std::sqrt(s2 / static_cast<double>(v.size()));
}

inline GroupSummary summarize(const std::string& method, int nfe, double noise_std,
                              const std::vector<TrialResult>& trials,
                              const std::vector<Tensor>& recons,
                              const std::vector<Tensor>& truths) {
  GroupSummary g;
  g.method = method;
  g.nfe = nfe;
  g.noise_std = noise_std;
  std::vector<double> ps, ms, rs;
  for (const auto& t : trials) {
    if (t.aborted) {
      ++g.aborted;
      continue;
    }
    ps.push_back(t.psnr);
    ms.push_back(t.mse);
    rs.push_back(t.residual);
  }
  g.n = ps.size();
  g.mean_psnr = mean_of(ps);
  g.se_psnr = stderr_of(ps);
  g.mean_mse = mean_of(ms);
  g.se_mse = stderr_of(ms);
  g.mean_residual = mean_of(rs);
  g.se_residual = stderr_of(rs);
  g.energy_distance =
      recons.empty() ? 0.0 : energy_distance_vstat(recons, truths);
  return g;
}

}  // namespace detail

// Paired-seed sweep over (method, nfe): every method sees the same
// measurement realization and the same trajectory noise stream per seed.
// Group energy distance compares reconstructions against the matching
// ground-truth set (same pairing the trials used).
inline SweepResult pareto_sweep(const ExperimentTask& task,
                                const std::vector<int>& nfe_list,
                                const std::vector<std::string>& methods,
                                std::size_t n_seeds) {
  if (nfe_list.empty() || methods.empty() || n_seeds == 0)
    throw ConfigError("pareto_sweep needs methods, nfe values and seeds");

  const std::size_t groups = methods.size() * nfe_list.size();
  const std::size_t total = groups * n_seeds;
  std::vector<detail::TrialArtifacts> slots(total);

  parallel_for(total, [&](std::size_t idx) {
    const std::size_t g = idx / n_seeds;
    const std::size_t seed = idx % n_seeds;
    const std::string& method = methods[g / nfe_list.size()];
    const int nfe = nfe_list[g % nfe_list.size()];
    slots[idx] = detail::run_trial(task, method, nfe, seed);
  });

  SweepResult out;
  out.trials.reserve(total);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::string& method = methods[g / nfe_list.size()];
    const int nfe = nfe_list[g % nfe_list.size()];
    std::vector<TrialResult> group_trials;
    std::vector<Tensor> recons, truths;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      detail::TrialArtifacts& a = slots[g * n_seeds + s];
      group_trials.push_back(a.result);
      if (!a.result.aborted) {
        recons.push_back(std::move(a.recon));
        truths.push_back(std::move(a.truth));
      }
    }
    GroupSummary summary = detail::summarize(method, nfe, task.meas_noise_std,
                                             group_trials, recons, truths);
    for (auto& t : group_trials) {
      t.energy_distance = summary.energy_distance;
      out.trials.push_back(std::move(t));
    }
    out.summary.push_back(summary);
  }
  return out;
}

// Fixed NFE, varying measurement noise. Evaluation measurements carry the
// noise; the oracle stays whatever it was (typically built on noiseless pairs).
inline SweepResult noise_robustness(const ExperimentTask& base_task,
                                    const std::vector<double>& noise_stds,
                                    const std::vector<std::string>& methods,
                                    int nfe, std::size_t n_seeds) {
  if (noise_stds.empty()) throw ConfigError("noise_robustness needs noise levels");
  SweepResult out;
  for (double std_dev : noise_stds) {
    ExperimentTask task = base_task;
    task.meas_noise_std = std_dev;
    SweepResult part = pareto_sweep(task, {nfe}, methods, n_seeds);
    for (auto& t : part.trials) out.trials.push_back(std::move(t));
    for (auto& s : part.summary) out.summary.push_back(std::move(s));
  }
  return out;
}

struct GdAblationResult {
  std::vector<int> steps;
  std::vector<double> mean_psnr;
  std::vector<double> mean_residual;
  // [seed][step] for per-seed monotonicity checks.
  std::vector<std::vector<double>> per_seed_residual;
  std::vector<std::vector<double>> per_seed_psnr;
  double rho = 0.0;
};

// Repeated shallow corrections applied to the denoised estimate at the
// midpoint iterate i = N/2 (rounded down), after running plain DDB that far.
// Step 0 is the uncorrected baseline.
inline GdAblationResult gd_ablation(const ExperimentTask& task, int nfe,
                                    int max_steps, std::size_t n_seeds) {
  if (max_steps < 1) throw ConfigError("gd_ablation needs max_steps >= 1");
  if (!task.op.is_linear()) throw ConfigError("gd_ablation needs a linear operator");
  const std::vector<double> grid = timestep_grid(nfe, task.grid);
  const std::size_t n = grid.size() - 1;
  const std::size_t mid = n / 2;

  GdAblationResult res;
  res.rho = step_size(mid, task.guidance.c, *task.sched, grid);
  for (int j = 0; j <= max_steps; ++j) res.steps.push_back(j);
  res.per_seed_residual.resize(n_seeds);
  res.per_seed_psnr.resize(n_seeds);

  parallel_for(n_seeds, [&](std::size_t seed) {
    const Tensor truth = make_test_sample(task.dataset, seed);
    Tensor y = task.op.apply(truth);
    if (task.meas_noise_std > 0.0) {
      CounterRng noise(derive_key(task.base_seed, seed, detail::kMeasLabel));
      for (double& v : y.data) v += task.meas_noise_std * noise.normal();
    }
    Tensor x = lift_measurement(task.op.lin(), y, task.pinv);
    CounterRng rng(derive_key(task.base_seed, seed, detail::kTrajLabel));
    for (std::size_t i = n; i > mid; --i) {
      const Tensor x0_hat = task.oracle->predict(x, grid[i]);
      x = ddb_step(x, x0_hat, grid[i - 1], grid[i], *task.sched, &rng, task.mode);
    }
    Tensor xhat = task.oracle->predict(x, grid[mid]);
    for (int j = 0; j <= max_steps; ++j) {
      res.per_seed_residual[seed].push_back(residual_norm(task.op.lin(), xhat, y));
      res.per_seed_psnr[seed].push_back(psnr(xhat, truth, task.dataset.peak()));
      const Tensor g = task.op.lin().adjoint(y - task.op.lin().apply(xhat));
      axpy(res.rho, g, xhat);
    }
  });

  for (int j = 0; j <= max_steps; ++j) {
    double pr = 0.0, rr = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      pr += res.per_seed_psnr[s][static_cast<std::size_t>(j)];
      rr += res.per_seed_residual[s][static_cast<std::size_t>(j)];
    }
    res.mean_psnr.push_back(pr / static_cast<double>(n_seeds));
    res.mean_residual.push_back(rr / static_cast<double>(n_seeds));
  }
  return res;
}

struct CheckResult {
  std::string name;
  bool pass = false;
  bool skipped = false;
  double max_residual = 0.0;
  std::string detail;
};

inline bool all_passed(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks)
    if (!c.skipped && !c.pass) return false;
  return true;
}

namespace detail {

// Adaptive Simpson on a beta branch (the integrand is piecewise linear, so
// Simpson is exact per branch; recursion just guards the tolerance claim).
inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double fa, double fb, double fm,
                               double eps, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * eps)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1);
}

inline double quadrature_gamma_sq(const BetaProfile& p, double t) {
  // Integrate the two printed branches separately; evaluating beta() at the
  // 0.5 breakpoint would leak the right-branch value into the left integral.
  const auto lo = [&p](double x) { return p.beta_min + 2.0 * p.beta_d() * x; };
  const auto hi = [&p](double x) { return 2.0 * p.beta_max - 2.0 * p.beta_d() * x; };
  auto integrate = [](const std::function<double(double)>& f, double a, double b) {
    if (b <= a) return 0.0;
    const double m = 0.5 * (a + b);
    return adaptive_simpson(f, a, b, f(a), f(b), f(m), 1e-15, 30);
  };
  if (t <= 0.5) return integrate(lo, 0.0, t);
  return integrate(lo, 0.0, 0.5) + integrate(hi, 0.5, t);
}

}  // namespace detail

// Runs the schedule/operator/oracle invariants and reports max residuals.
// sigma_sq_fault_scale != 1 corrupts the transition variance inside the
// total-variance check; the fault-injection hook the tests use to prove the
// check has teeth.
inline std::vector<CheckResult> theorem_suite(const BridgeSchedule* user_sched = nullptr,
                                              double sigma_sq_fault_scale = 1.0) {
  std::vector<CheckResult> out;
  const BetaProfile profile{};
  const BridgeSchedule i2sb = BridgeSchedule::i2sb(profile);
  const BridgeSchedule indi = BridgeSchedule::indi(0.01);
  CounterRng rng(20240u);

  auto push = [&out](std::string name, bool pass, double resid, std::string detail = "") {
    CheckResult c;
    c.name = std::move(name);
    c.pass = pass;
    c.max_residual = resid;
    c.detail = std::move(detail);
    out.push_back(std::move(c));
  };

  {  // gamma closure: gamma^2 + bar_gamma^2 constant
    double worst = 0.0;
    const double total = gamma_sq_total(profile);
    for (int i = 0; i <= 1000; ++i) {
      const double t = static_cast<double>(i) / 1000.0;
      worst = std::max(worst,
                       std::abs(gamma_sq(profile, t) + bar_gamma_sq(profile, t) - total));
    }
    push("schedule.gamma_closure", worst < 1e-14, worst);
  }

  {  // closed form vs adaptive quadrature
    double worst = 0.0;
    for (int i = 1; i <= 200; ++i) {
      const double t = static_cast<double>(i) / 200.0;
      const double cf = gamma_sq(profile, t);
      const double q = detail::quadrature_gamma_sq(profile, t);
      worst = std::max(worst, std::abs(cf - q) / std::abs(q));
    }
    push("schedule.gamma_quadrature", worst < 1e-12, worst);
  }

  {  // Theorem 1: InDI-mapped transitions equal I2SB transitions
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      double s = 0.001 + 0.998 * rng.uniform();
      double t = 0.001 + 0.998 * rng.uniform();
      if (s > t) std::swap(s, t);
      if (s == t) continue;
      const auto direct = i2sb.transition(s, t);
      const auto ms = indi_time_map(profile, s);
      const auto mt = indi_time_map(profile, t);
      const double a2 = ms.t_indi / mt.t_indi;
      const double s2 = ms.t_indi * ms.t_indi * (ms.eps_sq_indi - mt.eps_sq_indi);
      worst = std::max(worst, std::abs(a2 - direct.alpha_sq_st) /
                                  std::max(std::abs(direct.alpha_sq_st), 1e-300));
      worst = std::max(worst, std::abs(s2 - direct.sigma_sq_st) /
                                  std::max(std::abs(direct.sigma_sq_st), 1e-12));
    }
    push("schedule.theorem1_equivalence", worst < 1e-10, worst);
  }

  for (const auto* fam : {&i2sb, &indi}) {  // Theorem 2: total variance
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      double s = 0.001 + 0.998 * rng.uniform();
      double t = 0.001 + 0.998 * rng.uniform();
      if (s > t) std::swap(s, t);
      if (s == t) continue;
      const auto cs = fam->coefficients(s);
      const auto ct = fam->coefficients(t);
      const auto tr = fam->transition(s, t);
      const double a = tr.alpha_sq_st * ct.sigma_t;
      const double resid =
          a * a + sigma_sq_fault_scale * tr.sigma_sq_st - cs.sigma_t * cs.sigma_t;
      worst = std::max(worst, std::abs(resid));
    }
    push(std::string("schedule.theorem2_total_variance.") + to_string(fam->kind()),
         worst < 1e-10, worst);
  }

  {  // alpha monotone on a dense grid
    double worst = 0.0;
    std::vector<const BridgeSchedule*> fams = {&i2sb, &indi};
    if (user_sched != nullptr) fams.push_back(user_sched);
    for (const auto* fam : fams) {
      double prev = fam->coefficients(0.0).alpha_t;
      for (int i = 1; i <= 1000; ++i) {
        const double a = fam->coefficients(static_cast<double>(i) / 1000.0).alpha_t;
        worst = std::max(worst, prev - a);
        prev = a;
      }
    }
    push("schedule.alpha_monotone", worst <= 0.0, worst);
  }

  if (user_sched != nullptr && user_sched->kind() == ScheduleKind::IRSDE) {
    CheckResult c;
    c.name = "schedule.transition.irsde";
    c.skipped = true;
    c.detail = "unsupported: reverse-SDE sampling out of scope";
    out.push_back(c);
  }

  {  // operator adjoint identities and pseudo-inverse consistency
    const Shape img{12, 12};
    const IdentityOp ident(img);
    Tensor mask_t = make_random_mask(img, 0.6, 7);
    const MaskOp mask(mask_t);
    const PeriodicConvolutionOp gauss(img, gaussian_kernel(5, 1.2));
    const PeriodicConvolutionOp unif(img, uniform_kernel(5));
    const AvgPoolDownsampleOp pool(img, 2);
    const std::vector<const LinearOperator*> ops = {&ident, &mask, &gauss, &unif, &pool};

    double worst_dot = 0.0;
    double worst_pinv = 0.0;
    for (const auto* op : ops) {
      for (int trial = 0; trial < 100; ++trial) {
        Tensor x = rng.normal_tensor(op->input_shape());
        Tensor u = rng.normal_tensor(op->output_shape());
        const double lhs = dot(op->apply(x), u);
        const double rhs = dot(x, op->adjoint(u));
        worst_dot = std::max(worst_dot,
                             std::abs(lhs - rhs) / (norm2(x) * norm2(u)));
      }
      PinvSolverConfig cfg;
      cfg.max_iters = 200;
      cfg.tol = 1e-12;
      Tensor x = rng.normal_tensor(op->input_shape());
      Tensor ax = op->apply(x);
      Tensor pinv = op->adjoint(pinv_apply(*op, ax, cfg).v);
      const double resid = norm2(op->apply(pinv) - ax) / std::max(norm2(ax), 1e-300);
      worst_pinv = std::max(worst_pinv, resid);
    }
    push("linop.adjoint_dot_product", worst_dot < 1e-10, worst_dot);
    push("linop.pinv_consistency", worst_pinv < 1e-6, worst_pinv);
  }

  {  // quantizer idempotence
    const UniformQuantizer q(0.5);
    Tensor x = rng.normal_tensor({64});
    const Tensor once = q.apply(x);
    const Tensor twice = q.apply(once);
    const bool idem = bit_identical(once, twice);
    double bound = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
      bound = std::max(bound, std::abs(once[i] - x[i]));
    push("linop.quantizer_idempotent", idem && bound <= 0.25 + 1e-15, bound);
  }

  {  // oracle invariants on a small mixture and gaussian pair
    const Shape sig{8};
    DatasetSpec spec;
    spec.kind = DatasetKind::GaussianField;
    spec.shape = sig;
    spec.train_size = 6;
    spec.seed = 11;
    spec.field_kernel_size = 3;
    spec.field_smooth_std = 1.0;
    const IdentityOp ident(sig);
    const ForwardOp fop = ForwardOp::linear(ident);
    PairedDataset pairs = make_training_pairs(spec, fop);
    const MixtureOracle mix(pairs.x0s, pairs.x1s, i2sb, 0.05);

    double worst0 = 0.0;
    for (const Tensor& x0 : pairs.x0s)
      worst0 = std::max(worst0, max_abs(mix.predict(x0, 0.0) - x0));
    push("oracle.mixture_predict_t0", worst0 == 0.0, worst0);

    double worst_w = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const Tensor x = rng.normal_tensor(sig);
      const auto w = mix.weights(x, rng.uniform());
      double sum = 0.0;
      for (double v : w) sum += v;
      worst_w = std::max(worst_w, std::abs(sum - 1.0));
    }
    push("oracle.mixture_weights_sum", worst_w < 1e-12, worst_w);

    const GaussianOracle gauss(Tensor::full(sig, 0.5), Tensor::full(sig, 0.04),
                               ident, 0.1, i2sb);
    double worst_fd = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const double t = 0.2 + 0.7 * rng.uniform();
      const Tensor x = rng.normal_tensor(sig);
      const Tensor u = rng.normal_tensor(sig);
      const Tensor a = gauss.vjp(x, t, u);
      const Tensor f = fd_vjp(gauss, x, t, u, 1e-5);
      worst_fd = std::max(worst_fd, norm2(a - f) / std::max(norm2(a), 1e-12));
    }
    for (int trial = 0; trial < 20; ++trial) {
      const double t = 0.2 + 0.7 * rng.uniform();
      const std::size_t k = rng.next_u64() % pairs.x0s.size();
      const auto c = i2sb.coefficients(t);
      Tensor x = pairs.x0s[k];
      for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = (1.0 - c.alpha_t) * pairs.x0s[k][j] + c.alpha_t * pairs.x1s[k][j] +
               0.05 * rng.normal();
      const Tensor u = rng.normal_tensor(sig);
      const Tensor a = mix.vjp(x, t, u);
      const Tensor f = fd_vjp(mix, x, t, u, 1e-4 * 0.05);
      worst_fd = std::max(worst_fd, norm2(a - f) / std::max(norm2(a), 1e-12));
    }
    push("oracle.vjp_finite_difference", worst_fd < 1e-5, worst_fd);
  }

  return out;
}

inline constexpr const char* kTrialCsvHeader =
    "method,nfe,seed,psnr,mse,residual,energy_distance,runtime_s";

// The energy_distance column carries the group statistic of the (method, nfe)
// cell the row belongs to; it is a set-level quantity, not a per-seed one.
inline std::string trials_to_csv(const std::vector<TrialResult>& trials) {
  std::ostringstream os;
  os << kTrialCsvHeader << '\n';
  for (const auto& t : trials) {
    os << t.method << ',' << t.nfe << ',' << t.seed << ',' << format_double(t.psnr)
       << ',' << format_double(t.mse) << ',' << format_double(t.residual) << ','
       << format_double(t.energy_distance) << ',' << format_double(t.runtime_s)
       << '\n';
  }
  return os.str();
}

inline std::string format_summary_table(const std::vector<GroupSummary>& rows,
                                        bool show_noise = false) {
  std::ostringstream os;
  char line[256];
  if (show_noise) {
    std::snprintf(line, sizeof line, "%-10s %6s %9s %8s %18s %18s %12s %7s\n",
                  "method", "nfe", "noise", "n", "psnr(mean+-se)", "resid(mean+-se)",
                  "energy_dist", "abort");
    os << line;
    for (const auto& g : rows) {
      std::snprintf(line, sizeof line,
                    "%-10s %6d %9.4g %8zu %10.3f+-%-6.3f %10.4g+-%-7.3g %12.5g %7d\n",
                    g.method.c_str(), g.nfe, g.noise_std, g.n, g.mean_psnr, g.se_psnr,
                    g.mean_residual, g.se_residual, g.energy_distance, g.aborted);
      os << line;
    }
  } else {
    std::snprintf(line, sizeof line, "%-10s %6s %8s %18s %18s %12s %7s\n", "method",
                  "nfe", "n", "psnr(mean+-se)", "resid(mean+-se)", "energy_dist",
                  "abort");
    os << line;
    for (const auto& g : rows) {
      std::snprintf(line, sizeof line,
                    "%-10s %6d %8zu %10.3f+-%-6.3f %10.4g+-%-7.3g %12.5g %7d\n",
                    g.method.c_str(), g.nfe, g.n, g.mean_psnr, g.se_psnr,
                    g.mean_residual, g.se_residual, g.energy_distance, g.aborted);
      os << line;
    }
  }
  return os.str();
}

inline std::string format_check_report(const std::vector<CheckResult>& checks) {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.skipped ? "[SKIP]" : (c.pass ? "[PASS]" : "[FAIL]")) << ' ' << c.name;
    if (!c.skipped) {
      os.setf(std::ios::scientific);
      os.precision(3);
      os << "  max_residual=" << c.max_residual;
      os.unsetf(std::ios::scientific);
    }
    if (!c.detail.empty()) os << "  (" << c.detail << ")";
    os << '\n';
  }
  return os.str();
}

}  // namespace ddb
