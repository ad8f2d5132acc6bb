#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cdm::io {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;

// 64-bit FNV-1a, continuing from `h`.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset);
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = kFnvOffset);

// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

}  // namespace cdm::io
