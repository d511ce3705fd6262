#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nssm {

using Rng = std::mt19937_64;

/// Derive an independent substream seed from a top-level seed, a purpose
/// label and an index. Used everywhere randomness is consumed so results do
/// not depend on call order or thread scheduling.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                        std::uint64_t index = 0) noexcept;

[[nodiscard]] inline Rng make_rng(std::uint64_t seed, std::string_view purpose,
                                  std::uint64_t index = 0) {
    return Rng(derive_seed(seed, purpose, index));
}

}  // namespace nssm
