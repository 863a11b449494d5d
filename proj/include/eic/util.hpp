#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eic {

/// 64-bit FNV-1a. Stable across platforms; used for token buckets and checksums.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// SplitMix64 step; a small seeded stream for deterministic pseudo-random vectors.
struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  /// Uniform in [-1, 1).
  double symmetric() { return static_cast<double>(next() >> 11) * 0x1.0p-52 - 1.0; }
};

/// Derive a child seed from a root seed and a tag. All run randomness flows through here.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

std::string hex64(std::uint64_t v);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(std::string_view text);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename, so readers never observe a partial file.
void write_file(const std::filesystem::path& path, std::string_view content);

/// RFC 4180 CSV row (quotes fields containing separators, quotes or newlines).
std::string csv_row(const std::vector<std::string>& fields);
/// Parses a whole CSV document; quoted fields may contain commas, quotes and newlines.
std::vector<std::vector<std::string>> csv_parse(std::string_view text);

/// SOURCE_DATE_EPOCH when set. Manifests carry no wall-clock time otherwise, so reruns are
/// byte-identical.
std::optional<std::int64_t> manifest_timestamp();

}  // namespace eic
