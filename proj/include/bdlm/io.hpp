#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdlm/mat.hpp"

// Flat binary arrays: little-endian, row-major. Index arrays are int64,
// model arrays float32; shapes live in the sibling JSON metadata.

namespace bdlm::io {

using json = nlohmann::ordered_json;

void write_f32(const std::filesystem::path& path, std::span<const double> data);
std::vector<double> read_f32(const std::filesystem::path& path, int64_t expect = -1);

void write_i64(const std::filesystem::path& path, std::span<const int64_t> data);
std::vector<int64_t> read_i64(const std::filesystem::path& path, int64_t expect = -1);

void write_mat_f32(const std::filesystem::path& path, const Mat& m);
Mat read_mat_f32(const std::filesystem::path& path, int64_t rows, int64_t cols);

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// FNV-1a over raw bytes, used for artifact checksums in tests and metadata.
uint64_t fnv1a(std::span<const unsigned char> bytes);
uint64_t hash_mat(const Mat& m);

}  // namespace bdlm::io
