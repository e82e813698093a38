#include "wmguide/rng.hpp"

namespace wmguide {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

RngStream RngStream::derive(std::uint64_t master, std::uint64_t index,
                            std::string_view tag) {
  // FNV-1a over the tag keeps stage names stable across builds.
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : tag) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ull;
  }
  std::uint64_t s = splitmix64(master);
  s = splitmix64(s ^ index);
  s = splitmix64(s ^ h);
  return RngStream(s);
}

}  // namespace wmguide
