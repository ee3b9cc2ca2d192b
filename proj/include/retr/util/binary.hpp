// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace retr {

static_assert(std::endian::native == std::endian::little,
              "serialization code assumes a little-endian host");

/// Thin wrappers over fstream with hard failure on short reads; every file
/// format in this project is little-endian with fixed-width fields.
struct BinaryWriter {
  std::ofstream out;

  explicit BinaryWriter(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
  }
  void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), n); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u64(uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void f64s(const std::vector<double>& v) { bytes(v.data(), v.size() * 8); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void finish(const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + path);
  }
};

struct BinaryReader {
  std::ifstream in;
  std::string path;
  std::string section = "header";

  explicit BinaryReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw std::runtime_error("cannot open for reading: " + p);
  }
  void bytes(void* p, size_t n) {
    in.read(static_cast<char*>(p), n);
    if (static_cast<size_t>(in.gcount()) != n) {
      throw std::runtime_error(path + ": truncated while reading section '" + section + "'");
    }
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    bytes(&v, 8);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  std::vector<double> f64s(size_t n) {
    std::vector<double> v(n);
    bytes(v.data(), n * 8);
    return v;
  }
  std::string str(size_t max_len = 1 << 20) {
    uint32_t n = u32();
    if (n > max_len) {
      throw std::runtime_error(path + ": implausible string length in section '" + section + "'");
    }
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

}  // namespace retr
