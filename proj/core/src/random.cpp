#include "doit/random.hpp"

#include <cmath>
#include <numbers>

namespace doit {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) noexcept {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed, StreamFamily family, std::uint32_t sample,
                           std::uint32_t step, std::uint32_t trajectory) noexcept {
  const std::uint64_t k =
      splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(family) * 0x9E3779B97F4A7C15ull));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  counter_ = {0u, trajectory, step, sample};
}

std::uint64_t RandomStream::next_u64() noexcept {
  if (words_left_ < 2) {
    block_ = philox4x32(counter_, key_);
    ++counter_[0];
    words_left_ = 4;
  }
  const int i = 4 - words_left_;
  words_left_ -= 2;
  return (static_cast<std::uint64_t>(block_[i]) << 32) | block_[i + 1];
}

double RandomStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_radius_ * std::sin(spare_angle_);
  }
  // Box-Muller on (0,1) uniforms so log never sees zero.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  // The sine half is only computed if someone asks for it.
  spare_radius_ = radius;
  spare_angle_ = angle;
  has_spare_ = true;
  return radius * std::cos(angle);
}

void RandomStream::fill_normal(Eigen::Ref<Eigen::VectorXd> out) noexcept {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal();
}

}  // namespace doit
