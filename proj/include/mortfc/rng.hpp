#pragma once

#include <cstdint>
#include <random>

namespace mortfc {

/// Explicit-state generator. Child streams are derived deterministically from
/// (seed, stream id) so concurrent chains never share state.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 1) : seed_(seed), engine_(make_seq(seed, 0)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), engine_(make_seq(seed, stream)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Independent child generator for sub-stream `stream`.
  Rng split(std::uint64_t stream) { return Rng(engine_() ^ seed_, stream + 1); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  /// Uniform on the open interval (0,1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::mt19937_64 make_seq(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mortfc
