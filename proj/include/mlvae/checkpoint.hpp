#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mlvae/tensor.hpp"

namespace mlvae {

/// One named tensor. Values are held in double; `dtype` ("F32" or "F64")
/// selects the on-disk width, so float tensors round-trip exactly.
struct NamedTensor {
  std::string name;
  std::string dtype = "F32";
  std::vector<std::int64_t> shape;
  std::vector<double> values;

  std::int64_t numel() const;
};

/// Self-describing archive: u64 little-endian header length, a JSON header
/// mapping tensor names to dtype/shape/byte range plus a string-valued
/// `__metadata__` object, then the raw little-endian tensor bytes.
struct TensorArchive {
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> metadata;

  void add(const std::string& name, const Matrix& m);
  const NamedTensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  /// Copies a stored tensor into `m`, which must already have the stored shape.
  void read_into(const std::string& name, Matrix& m) const;
  const std::string& meta(const std::string& key) const;
};

/// Writes atomically (temporary file, then rename).
void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

}  // namespace mlvae
