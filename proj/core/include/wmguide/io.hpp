#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "wmguide/tensor.hpp"

namespace wmguide::harness {

// Writes to a sibling temporary file, then renames over the target.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// "WMT1", u64 rank, rank × u64 dims, then float64 payload, all
// little-endian, row-major.
struct TensorFile {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  static TensorFile from(const Tensor& t);
  Tensor to_tensor() const;  // rank 3 only

  std::string encode() const;
  static TensorFile decode(std::string_view bytes, std::string_view origin = "<bytes>");
  void save(const std::filesystem::path& path) const;
  static TensorFile load(const std::filesystem::path& path);
};

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// 8-bit binary PGM (1 channel) or PPM (3 channels), values clamped to [0, 1].
void save_netpbm(const std::filesystem::path& path, const Image& x);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add(std::vector<std::string> row);
  std::size_t rows() const noexcept { return rows_.size(); }
  std::string str() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string bits_to_string(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> bits_from_string(std::string_view s);

}  // namespace wmguide::harness
