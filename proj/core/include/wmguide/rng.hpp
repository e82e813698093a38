#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wmguide {

// Deterministic random stream. Child streams are derived from a master seed
// by hashing (seed, index, tag), so results do not depend on the order in
// which trials are executed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  static RngStream derive(std::uint64_t master, std::uint64_t index,
                          std::string_view tag);
  RngStream child(std::uint64_t index, std::string_view tag) const {
    return derive(seed_, index, tag);
  }

  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace wmguide
