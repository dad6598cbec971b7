#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace uavsim {

/// Derives independent named generators from one root seed. A stream depends
/// only on (root seed, name), so adding a stream never perturbs the others.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t root_seed) : root_seed_(root_seed) {}

  std::mt19937_64 stream(std::string_view name) const;
  std::mt19937_64 stream(std::string_view name, std::uint64_t index) const;

  std::uint64_t root_seed() const { return root_seed_; }

 private:
  std::uint64_t root_seed_;
};

}  // namespace uavsim
