#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "ddb/errors.hpp"
#include "ddb/io.hpp"

namespace ddb {

// Flat dotted-key configuration, one `key = value` per line, '#' comments.
// Unknown keys are rejected; every field has a documented default below.
struct RunConfig {
  // schedule
  std::string schedule_kind = "i2sb";
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  double eps = 0.01;
  double lambda = 0.19803;  // sqrt(10/255), OU stationary std
  std::string theta_bar_file;

  // operator
  std::string operator_kind = "gauss_blur";
  double kernel_std = 1.5;
  int kernel_size = 7;
  int pool_factor = 2;
  std::string mask_file;
  double mask_keep = 0.5;  // used when mask_file is empty
  double quant_delta = 0.25;

  // pinv solver
  int pinv_max_iters = 50;
  double pinv_tol = 1e-8;
  double pinv_damping = 0.0;

  // oracle
  std::string oracle_kind = "mixture";
  double sigma_floor = 1e-3;
  double oracle_noise_std = 0.0;
  std::string dataset_dir;

  // sampler
  std::string sampler_method = "ddb";
  int nfe = 20;
  std::string grid = "quadratic";
  std::string mode = "ancestral";

  // guidance
  double guidance_c = 1.0;
  int gd_steps = 1;
  std::string precond = "pinv";
  bool replacement = false;

  // synthetic dataset
  std::string dataset_kind = "gaussian_field";
  int dataset_dim = 16;
  int dataset_train_size = 64;
  double eval_noise_std = 0.0;

  // experiment lists
  std::string sweep_nfe_list = "5,20,100";
  std::string sweep_methods = "ddb,cddb";
  std::string noise_stds = "0,0.05,0.1";
  int ablate_max_steps = 10;

  // run
  std::uint64_t seed = 0;
  int trials = 30;
  std::string out_dir = "out";

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline double cfg_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

inline int cfg_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(d);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

inline std::uint64_t cfg_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long d = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + v + "'");
  }
}

inline bool cfg_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

inline void cfg_choice(const std::string& key, const std::string& v,
                       const std::vector<std::string>& allowed) {
  for (const auto& a : allowed)
    if (v == a) return;
  std::string msg = "key '" + key + "': '" + v + "' is not one of {";
  bool first = true;
  for (const auto& a : allowed) {
    if (!first) msg += ", ";
    msg += a;
    first = false;
  }
  throw ConfigError(msg + "}");
}

inline void cfg_range(const std::string& key, bool ok, const std::string& what) {
  if (!ok) throw ConfigError("key '" + key + "': " + what);
}

struct KeyDef {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<KeyDef>& key_registry() {
  static const std::vector<KeyDef> keys = [] {
    std::vector<KeyDef> k;
    auto str = [&k](const char* name, std::string RunConfig::* field) {
      k.push_back({name,
                   [field](RunConfig& c, const std::string& v) { c.*field = v; },
                   [field](const RunConfig& c) { return c.*field; }});
    };
    auto num = [&k](const char* name, double RunConfig::* field,
                    std::function<void(const std::string&, double)> check) {
      k.push_back({name,
                   [field, check, name](RunConfig& c, const std::string& v) {
                     const double d = cfg_double(name, v);
                     check(name, d);
                     c.*field = d;
                   },
                   [field](const RunConfig& c) { return format_double(c.*field); }});
    };
    auto integer = [&k](const char* name, int RunConfig::* field,
                        std::function<void(const std::string&, int)> check) {
      k.push_back({name,
                   [field, check, name](RunConfig& c, const std::string& v) {
                     const int d = cfg_int(name, v);
                     check(name, d);
                     c.*field = d;
                   },
                   [field](const RunConfig& c) { return std::to_string(c.*field); }});
    };
    auto choice = [&k](const char* name, std::string RunConfig::* field,
                       std::initializer_list<const char*> allowed) {
      // Copy: an initializer_list's backing array does not outlive this call.
      std::vector<std::string> values(allowed.begin(), allowed.end());
      k.push_back({name,
                   [field, values = std::move(values), name](RunConfig& c,
                                                             const std::string& v) {
                     cfg_choice(name, v, values);
                     c.*field = v;
                   },
                   [field](const RunConfig& c) { return c.*field; }});
    };

    auto positive = [](const std::string& key, double v) {
      cfg_range(key, v > 0.0, "must be > 0");
    };
    auto non_negative = [](const std::string& key, double v) {
      cfg_range(key, v >= 0.0, "must be >= 0");
    };
    auto at_least_1 = [](const std::string& key, int v) {
      cfg_range(key, v >= 1, "must be >= 1");
    };

    choice("schedule.kind", &RunConfig::schedule_kind, {"i2sb", "indi", "irsde"});
    num("schedule.beta_min", &RunConfig::beta_min, positive);
    num("schedule.beta_max", &RunConfig::beta_max, positive);
    num("schedule.eps", &RunConfig::eps, non_negative);
    num("schedule.lambda", &RunConfig::lambda, positive);
    str("schedule.theta_bar_file", &RunConfig::theta_bar_file);

    choice("operator.kind", &RunConfig::operator_kind,
           {"identity", "mask", "gauss_blur", "uniform_blur", "avgpool", "quantizer"});
    num("operator.kernel_std", &RunConfig::kernel_std, positive);
    integer("operator.kernel_size", &RunConfig::kernel_size,
            [](const std::string& key, int v) {
              cfg_range(key, v >= 1 && v % 2 == 1, "must be odd and >= 1");
            });
    integer("operator.pool_factor", &RunConfig::pool_factor, at_least_1);
    str("operator.mask_file", &RunConfig::mask_file);
    num("operator.mask_keep", &RunConfig::mask_keep,
        [](const std::string& key, double v) {
          cfg_range(key, v > 0.0 && v <= 1.0, "must be in (0,1]");
        });
    num("operator.quant_delta", &RunConfig::quant_delta, positive);

    integer("pinv.max_iters", &RunConfig::pinv_max_iters, at_least_1);
    num("pinv.tol", &RunConfig::pinv_tol, positive);
    num("pinv.damping", &RunConfig::pinv_damping, non_negative);

    choice("oracle.kind", &RunConfig::oracle_kind, {"gaussian", "mixture"});
    num("oracle.sigma_floor", &RunConfig::sigma_floor, positive);
    num("oracle.noise_std", &RunConfig::oracle_noise_std, non_negative);
    str("oracle.dataset_dir", &RunConfig::dataset_dir);

    choice("sampler.method", &RunConfig::sampler_method, {"ddb", "cddb", "cddb_deep"});
    integer("sampler.nfe", &RunConfig::nfe, at_least_1);
    choice("sampler.grid", &RunConfig::grid, {"uniform", "quadratic"});
    choice("sampler.mode", &RunConfig::mode, {"ancestral", "ot_ode"});

    num("guidance.c", &RunConfig::guidance_c, non_negative);
    integer("guidance.gd_steps", &RunConfig::gd_steps, at_least_1);
    choice("guidance.precond", &RunConfig::precond, {"adjoint", "pinv"});
    k.push_back({"guidance.replacement",
                 [](RunConfig& c, const std::string& v) {
                   c.replacement = cfg_bool("guidance.replacement", v);
                 },
                 [](const RunConfig& c) { return std::string(c.replacement ? "true" : "false"); }});

    choice("dataset.kind", &RunConfig::dataset_kind, {"gaussian_field", "blob_mixture"});
    integer("dataset.dim", &RunConfig::dataset_dim, [](const std::string& key, int v) {
      cfg_range(key, v >= 2 && v <= 64, "must be in [2,64]");
    });
    integer("dataset.train_size", &RunConfig::dataset_train_size, at_least_1);
    num("eval.noise_std", &RunConfig::eval_noise_std, non_negative);

    str("sweep.nfe_list", &RunConfig::sweep_nfe_list);
    str("sweep.methods", &RunConfig::sweep_methods);
    str("noise.stds", &RunConfig::noise_stds);
    integer("ablate.max_steps", &RunConfig::ablate_max_steps, at_least_1);

    k.push_back({"seed",
                 [](RunConfig& c, const std::string& v) { c.seed = cfg_u64("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    integer("trials", &RunConfig::trials, at_least_1);
    str("out_dir", &RunConfig::out_dir);
    return k;
  }();
  return keys;
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

inline std::vector<std::string> known_config_keys() {
  std::vector<std::string> names;
  for (const auto& k : detail::key_registry()) names.emplace_back(k.name);
  return names;
}

inline void set_config_key(RunConfig& cfg, const std::string& key,
                           const std::string& value) {
  for (const auto& def : detail::key_registry()) {
    if (key == def.name) {
      def.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

inline RunConfig parse_config_stream(std::istream& in, const std::string& origin) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = detail::trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string value = detail::trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    set_config_key(cfg, key, value);
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  return parse_config_stream(f, path);
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& def : detail::key_registry())
    os << def.name << " = " << def.get(cfg) << '\n';
  return os.str();
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = detail::trim(item);
    if (t.empty()) continue;
    out.push_back(detail::cfg_int(key, t));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

inline std::vector<double> parse_double_list(const std::string& key,
                                             const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = detail::trim(item);
    if (t.empty()) continue;
    out.push_back(detail::cfg_double(key, t));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

inline std::vector<std::string> parse_string_list(const std::string& key,
                                                  const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = detail::trim(item);
    if (!t.empty()) out.push_back(t);
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

}  // namespace ddb
