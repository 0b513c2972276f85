#pragma once

#include <cmath>
#include <cstdint>

#include "ddb/tensor.hpp"

namespace ddb {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace detail

// Counter-based stream: output i is a pure function of (key, i), so streams
// are reproducible, cheap to fork, and independent across keys. Normal
// variates come from Box-Muller on consecutive counter values.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return detail::splitmix64(key_ ^ (counter_++ * 0xA24BAED4963EE407ull)); }

  // Uniform on (0,1]; never returns 0 so log() is safe.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normal(Tensor& t) {
    for (double& x : t.data) x = normal();
  }

  Tensor normal_tensor(Shape s) {
    Tensor t(std::move(s));
    fill_normal(t);
    return t;
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Deterministic key derivation for substreams (trajectory noise, measurement
// noise, dataset samples, ...). Label keeps unrelated substreams apart.
inline std::uint64_t derive_key(std::uint64_t base, std::uint64_t stream,
                                std::uint64_t label = 0) {
  std::uint64_t h = detail::splitmix64(base ^ 0x6C62272E07BB0142ull);
  h = detail::splitmix64(h ^ stream);
  h = detail::splitmix64(h ^ (label * 0x9E3779B97F4A7C15ull));
  return h;
}

}  // namespace ddb
