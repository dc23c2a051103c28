#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "deepaco/error.hpp"

namespace deepaco::io {

std::vector<char> read_file_bytes(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Shortest decimal that parses back to the same double, independent of locale.
std::string format_number(double v);
void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);

// Little-endian byte sink/source for the binary container formats.
class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    put_raw(s.data(), s.size());
  }
  void put_doubles(const std::vector<double>& v) {
    put<std::uint64_t>(v.size());
    put_raw(v.data(), v.size() * sizeof(double));
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_raw_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string() { return get_raw_string(get<std::uint64_t>()); }
  void get_raw(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::vector<double> get_doubles() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw FormatError(what_ + ": truncated data");
    std::vector<double> v(n);
    get_raw(v.data(), n * sizeof(double));
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw FormatError(what_ + ": truncated data");
  }
  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace deepaco::io
