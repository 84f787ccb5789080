#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

namespace doit {

/// Philox4x32-10 block function (Salmon et al., SC'11). Pure: the same
/// (counter, key) always yields the same four words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Disjoint stream families. Step noise, lookahead noise and initial noise never
// share a family, which is what makes a gamma=0 steered run reproduce the
// vanilla run bit for bit.
enum class StreamFamily : std::uint32_t {
  initial = 1,
  step = 2,
  lookahead = 3,
  rollout = 4,
  proposal = 5,
  auxiliary = 6,
};

/// Counter-derived random stream keyed by (seed, family, sample, step, trajectory).
/// Draw j of a stream is a pure function of the key and j, so results do not
/// depend on which worker computes them or in what order.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamFamily family, std::uint32_t sample,
               std::uint32_t step = 0, std::uint32_t trajectory = 0) noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double normal() noexcept;
  void fill_normal(Eigen::Ref<Eigen::VectorXd> out) noexcept;

 private:
  std::uint64_t next_u64() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 4> block_{};
  int words_left_ = 0;
  double spare_radius_ = 0.0;
  double spare_angle_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace doit
