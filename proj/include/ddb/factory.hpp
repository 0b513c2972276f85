#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ddb/config.hpp"
#include "ddb/dataset.hpp"
#include "ddb/errors.hpp"
#include "ddb/io.hpp"
#include "ddb/linop.hpp"
#include "ddb/oracle.hpp"
#include "ddb/sampler.hpp"
#include "ddb/schedule.hpp"

namespace ddb {

// Text table: one "t theta_bar" pair per line, '#' comments allowed.
inline ThetaBarTable load_theta_bar(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("irsde schedule needs schedule.theta_bar_file; cannot open: " + path);
  ThetaBarTable table;
  std::string line;
  while (std::getline(f, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double t, v;
    if (ls >> t >> v) {
      table.t.push_back(t);
      table.value.push_back(v);
    }
  }
  table.validate();
  return table;
}

inline BridgeSchedule build_schedule(const RunConfig& cfg) {
  if (cfg.schedule_kind == "i2sb") {
    BetaProfile p;
    p.beta_min = cfg.beta_min;
    p.beta_max = cfg.beta_max;
    return BridgeSchedule::i2sb(p);
  }
  if (cfg.schedule_kind == "indi") return BridgeSchedule::indi(cfg.eps);
  if (cfg.theta_bar_file.empty())
    throw ConfigError("schedule.kind = irsde requires schedule.theta_bar_file");
  return BridgeSchedule::irsde(load_theta_bar(cfg.theta_bar_file), cfg.lambda);
}

// Owns whichever operator the config names; op() views it.
struct OperatorBundle {
  std::unique_ptr<LinearOperator> lin;
  std::unique_ptr<UniformQuantizer> quant;

  ForwardOp op() const {
    if (lin) return ForwardOp::linear(*lin);
    return ForwardOp::nonlinear(*quant);
  }
  Shape input_shape(const Shape& fallback) const {
    return lin ? lin->input_shape() : fallback;
  }
};

inline OperatorBundle build_operator(const RunConfig& cfg, const Shape& signal_shape) {
  OperatorBundle b;
  if (cfg.operator_kind == "identity") {
    b.lin = std::make_unique<IdentityOp>(signal_shape);
  } else if (cfg.operator_kind == "mask") {
    Tensor m = cfg.mask_file.empty()
                   ? make_random_mask(signal_shape, cfg.mask_keep, cfg.seed)
                   : read_mask_pgm(cfg.mask_file);
    if (m.shape != signal_shape)
      throw ConfigError("mask shape " + shape_str(m.shape) +
                        " does not match signal shape " + shape_str(signal_shape));
    b.lin = std::make_unique<MaskOp>(std::move(m));
  } else if (cfg.operator_kind == "gauss_blur") {
    b.lin = std::make_unique<PeriodicConvolutionOp>(
        signal_shape, gaussian_kernel(cfg.kernel_size, cfg.kernel_std));
  } else if (cfg.operator_kind == "uniform_blur") {
    b.lin = std::make_unique<PeriodicConvolutionOp>(signal_shape,
                                                    uniform_kernel(cfg.kernel_size));
  } else if (cfg.operator_kind == "avgpool") {
    b.lin = std::make_unique<AvgPoolDownsampleOp>(signal_shape, cfg.pool_factor);
  } else if (cfg.operator_kind == "quantizer") {
    b.quant = std::make_unique<UniformQuantizer>(cfg.quant_delta);
  } else {
    throw ConfigError("unknown operator.kind '" + cfg.operator_kind + "'");
  }
  return b;
}

// Signal shape from the measurement shape (the `sample` path, where only the
// measurement file is known).
inline Shape signal_shape_for_measurement(const RunConfig& cfg, const Shape& y_shape) {
  if (cfg.operator_kind != "avgpool") return y_shape;
  Shape s = y_shape;
  for (std::size_t& d : s) d *= static_cast<std::size_t>(cfg.pool_factor);
  return s;
}

inline DatasetSpec build_dataset_spec(const RunConfig& cfg, Shape shape = {}) {
  DatasetSpec spec;
  spec.kind = (cfg.dataset_kind == "blob_mixture") ? DatasetKind::BlobMixture
                                                   : DatasetKind::GaussianField;
  spec.shape = shape.empty()
                   ? Shape{static_cast<std::size_t>(cfg.dataset_dim),
                           static_cast<std::size_t>(cfg.dataset_dim)}
                   : std::move(shape);
  spec.train_size = static_cast<std::size_t>(cfg.dataset_train_size);
  spec.seed = cfg.seed;
  return spec;
}

inline PinvSolverConfig build_pinv_config(const RunConfig& cfg) {
  PinvSolverConfig p;
  p.max_iters = cfg.pinv_max_iters;
  p.tol = cfg.pinv_tol;
  p.damping = cfg.pinv_damping;
  p.validate();
  return p;
}

inline SamplerConfig build_sampler_config(const RunConfig& cfg) {
  SamplerConfig s;
  s.nfe = cfg.nfe;
  s.grid = (cfg.grid == "uniform") ? GridKind::Uniform : GridKind::Quadratic;
  s.mode = (cfg.mode == "ot_ode") ? StochasticMode::OtOde : StochasticMode::Ancestral;
  s.seed = cfg.seed;
  s.validate();
  return s;
}

inline GuidanceConfig build_guidance_config(const RunConfig& cfg) {
  GuidanceConfig g;
  g.mode = parse_method(cfg.sampler_method);
  g.precond = (cfg.precond == "adjoint") ? Precond::Adjoint : Precond::Pinv;
  g.c = cfg.guidance_c;
  g.gd_steps = cfg.gd_steps;
  g.replacement = cfg.replacement;
  g.validate();
  return g;
}

// pair_00000_x0.ddbt / pair_00000_x1.ddbt, contiguous from zero.
inline PairedDataset load_pairs(const std::string& dir) {
  PairedDataset pairs;
  for (std::size_t k = 0;; ++k) {
    char name[64];
    std::snprintf(name, sizeof name, "/pair_%05zu_x0.ddbt", k);
    const std::string p0 = dir + name;
    std::snprintf(name, sizeof name, "/pair_%05zu_x1.ddbt", k);
    const std::string p1 = dir + name;
    std::ifstream probe(p0, std::ios::binary);
    if (!probe) break;
    probe.close();
    pairs.x0s.push_back(read_tensor(p0));
    pairs.x1s.push_back(read_tensor(p1));
  }
  if (pairs.x0s.empty())
    throw ConfigError("no pair_NNNNN_x0.ddbt files found in '" + dir + "'");
  return pairs;
}

inline void save_pairs(const std::string& dir, const PairedDataset& pairs) {
  for (std::size_t k = 0; k < pairs.x0s.size(); ++k) {
    char name[64];
    std::snprintf(name, sizeof name, "/pair_%05zu_x0.ddbt", k);
    write_tensor(dir + name, pairs.x0s[k]);
    std::snprintf(name, sizeof name, "/pair_%05zu_x1.ddbt", k);
    write_tensor(dir + name, pairs.x1s[k]);
  }
}

// Moment-matched Gaussian prior (diagonal) fitted to the clean training
// images; the desk-scale analogue of "the prior the oracle was trained on".
inline std::unique_ptr<GaussianOracle> build_gaussian_oracle(
    const RunConfig& cfg, const std::vector<Tensor>& train_x0,
    const LinearOperator& a, BridgeSchedule sched) {
  if (train_x0.empty()) throw ConfigError("gaussian oracle needs training images");
  Tensor mu = Tensor::zeros(train_x0[0].shape);
  for (const Tensor& x : train_x0) axpy(1.0 / static_cast<double>(train_x0.size()), x, mu);
  Tensor var = Tensor::zeros(mu.shape);
  for (const Tensor& x : train_x0)
    for (std::size_t j = 0; j < var.size(); ++j) {
      const double d = x[j] - mu[j];
      var[j] += d * d / static_cast<double>(train_x0.size());
    }
  for (double& v : var.data) v = std::max(v, 1e-8);
  return std::make_unique<GaussianOracle>(std::move(mu), std::move(var), a,
                                          cfg.oracle_noise_std, std::move(sched));
}

// Builds the denoiser named by oracle.kind. Mixture pairs come from
// oracle.dataset_dir when set, otherwise they are synthesized (noiseless)
// from the dataset config and the configured operator.
struct OracleBundle {
  std::unique_ptr<Denoiser> denoiser;
  PairedDataset pairs;  // the training pairs actually used (mixture, or moments)
};

inline OracleBundle build_oracle(const RunConfig& cfg, const DatasetSpec& spec,
                                 const ForwardOp& op, const BridgeSchedule& sched,
                                 const PinvSolverConfig& pinv) {
  OracleBundle out;
  out.pairs = cfg.dataset_dir.empty() ? make_training_pairs(spec, op, pinv)
                                      : load_pairs(cfg.dataset_dir);
  if (cfg.oracle_kind == "mixture") {
    out.denoiser = std::make_unique<MixtureOracle>(out.pairs.x0s, out.pairs.x1s,
                                                   sched, cfg.sigma_floor);
  } else {
    if (!op.is_linear())
      throw ConfigError("gaussian oracle requires a linear operator");
    out.denoiser = build_gaussian_oracle(cfg, out.pairs.x0s, op.lin(), sched);
  }
  return out;
}

}  // namespace ddb
