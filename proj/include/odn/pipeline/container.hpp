#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "odn/tensor/tensor.hpp"

namespace odn::io {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, u8 = 3 };
std::size_t dtype_size(DType t);

struct Entry {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> extents;
  std::vector<std::uint8_t> payload;  // little-endian row-major
};

/// Named-tensor container ("ODN1"): little-endian header, entries in name
/// order, CRC-32 trailer over everything before it.
class TensorContainer {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, Entry e);
  void put_f64(const std::string& name, const Tensor& t);
  void put_f64(const std::string& name, std::span<const double> values, std::vector<std::uint64_t> extents);
  void put_f32(const std::string& name, std::span<const float> values, std::vector<std::uint64_t> extents);
  void put_u8(const std::string& name, std::span<const std::uint8_t> values, std::vector<std::uint64_t> extents);
  void put_text(const std::string& name, const std::string& text);

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }
  const Entry& at(const std::string& name) const;
  Tensor get_f64(const std::string& name) const;
  std::vector<double> get_f64_values(const std::string& name) const;
  std::vector<float> get_f32(const std::string& name) const;
  std::vector<std::uint8_t> get_u8(const std::string& name) const;
  std::string get_text(const std::string& name) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const;
  static TensorContainer parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static TensorContainer load(const std::filesystem::path& path);

 private:
  std::map<std::string, Entry> entries_;
};

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Writes to a sibling temp file then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace odn::io
