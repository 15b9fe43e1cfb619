#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace mtsens {

/// Seeded, single-owner random stream. Streams for parallel work are derived
/// by (seed, stream_index) splitting, never by sharing.
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64+seed_seq";

  explicit RngStream(std::uint64_t seed, std::uint64_t stream_index = 0)
      : seed_(seed), stream_(stream_index), engine_(make_engine(seed, stream_index)) {}

  RngStream(const RngStream&) = delete;
  RngStream& operator=(const RngStream&) = delete;
  RngStream(RngStream&&) noexcept = default;
  RngStream& operator=(RngStream&&) noexcept = default;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_index() const noexcept { return stream_; }
  std::string algorithm_id() const { return kAlgorithm; }

  /// Independent stream for sub-task i of this stream's seed.
  RngStream split(std::uint64_t i) const { return RngStream(seed_, stream_ * 1000003ULL + i + 1); }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  /// Gamma with shape and scale.
  double gamma(double shape, double scale) { return std::gamma_distribution<double>(shape, scale)(engine_); }
  /// Inverse gamma with shape a and scale b (density ~ x^{-a-1} exp(-b/x)).
  double inv_gamma(double shape, double scale) { return scale / gamma(shape, 1.0); }
  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace mtsens
