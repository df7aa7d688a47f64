#include "bdlm/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "bdlm/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "array serialization assumes a little-endian host");

namespace bdlm::io {

namespace fs = std::filesystem;

void write_f32(const fs::path& path, std::span<const double> data) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open for write: " + path.string());
    std::vector<float> buf(data.size());
    for (size_t i = 0; i < data.size(); ++i) buf[i] = static_cast<float>(data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    require(out.good(), "write failed: " + path.string());
}

std::vector<double> read_f32(const fs::path& path, int64_t expect) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    require(in.good(), "cannot open: " + path.string());
    auto bytes = static_cast<int64_t>(in.tellg());
    require(bytes % 4 == 0, "truncated float32 array: " + path.string());
    int64_t n = bytes / 4;
    require(expect < 0 || n == expect,
            "array size mismatch in " + path.string() + ": have " + std::to_string(n) +
                ", expected " + std::to_string(expect));
    in.seekg(0);
    std::vector<float> buf(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(buf.data()), bytes);
    require(in.good(), "read failed: " + path.string());
    std::vector<double> out(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) out[i] = static_cast<double>(buf[i]);
    return out;
}

void write_i64(const fs::path& path, std::span<const int64_t> data) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open for write: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(int64_t)));
    require(out.good(), "write failed: " + path.string());
}

std::vector<int64_t> read_i64(const fs::path& path, int64_t expect) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    require(in.good(), "cannot open: " + path.string());
    auto bytes = static_cast<int64_t>(in.tellg());
    require(bytes % 8 == 0, "truncated int64 array: " + path.string());
    int64_t n = bytes / 8;
    require(expect < 0 || n == expect,
            "array size mismatch in " + path.string() + ": have " + std::to_string(n) +
                ", expected " + std::to_string(expect));
    in.seekg(0);
    std::vector<int64_t> out(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(out.data()), bytes);
    require(in.good(), "read failed: " + path.string());
    return out;
}

void write_mat_f32(const fs::path& path, const Mat& m) { write_f32(path, m.a); }

Mat read_mat_f32(const fs::path& path, int64_t rows, int64_t cols) {
    Mat m(rows, cols);
    m.a = read_f32(path, rows * cols);
    return m;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    require(out.good(), "cannot open for write: " + path.string());
    out << j.dump(2) << "\n";
    require(out.good(), "write failed: " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail("invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    require(out.good(), "cannot open for write: " + path.string());
    out << text;
    require(out.good(), "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

uint64_t fnv1a(std::span<const unsigned char> bytes) {
    uint64_t h = 14695981039346656037ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

uint64_t hash_mat(const Mat& m) {
    return fnv1a({reinterpret_cast<const unsigned char*>(m.a.data()), m.a.size() * sizeof(double)});
}

}  // namespace bdlm::io
