#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace archsim::io {

std::string read_text(const std::filesystem::path& path);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

/// Writes to a temporary sibling then renames, so readers never observe a
/// partially written file.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> contents);

/// Little-endian f32 encoding used by every binary blob.
std::vector<std::uint8_t> encode_f32(std::span<const float> values);
std::vector<float> decode_f32(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t count);

/// Shortest round-trip decimal text; "NA" for NaN.
std::string format_number(double v);
/// Inverse of format_number.
double parse_number(std::string_view text);

/// 64-bit FNV-1a digest in hex; used for cache keys, not integrity.
std::string content_hash(std::string_view data);

}  // namespace archsim::io
