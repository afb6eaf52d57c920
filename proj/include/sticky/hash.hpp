#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sticky {

// Seeded 64-bit hash used for ring points, session lookups and RNG stream
// derivation. FNV-1a over the bytes, starting from the FNV offset basis
// XOR fmix64(seed), followed by the MurmurHash3 fmix64 finalizer.
// The exact algorithm is part of the on-disk contract (see docs/FORMATS.md).
std::uint64_t hash64(std::string_view bytes, std::uint64_t seed);

std::uint64_t fmix64(std::uint64_t k);

// Seed for an independent random stream: hash64("<purpose>/<entity>", seed).
std::uint64_t stream_seed(std::uint64_t seed, std::string_view purpose,
                          std::string_view entity);

std::string hex64(std::uint64_t v);

}  // namespace sticky
