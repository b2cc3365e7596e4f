#include "mlvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mlvae/errors.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace mlvae {
namespace {

std::size_t dtype_width(const std::string& dtype) {
  if (dtype == "F32") return 4;
  if (dtype == "F64") return 8;
  throw ArgumentError("unsupported tensor dtype '" + dtype + "'");
}

constexpr const char* kDefaultDtype = sizeof(Real) == 4 ? "F32" : "F64";

}  // namespace

std::int64_t NamedTensor::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void TensorArchive::add(const std::string& name, const Matrix& m) {
  if (contains(name)) throw ArgumentError("duplicate tensor name '" + name + "'");
  NamedTensor t;
  t.name = name;
  t.dtype = kDefaultDtype;
  t.shape = {static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols())};
  t.values.assign(m.data(), m.data() + m.size());
  tensors.push_back(std::move(t));
}

bool TensorArchive::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

const NamedTensor& TensorArchive::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw ArgumentError("archive has no tensor named '" + name + "'");
}

void TensorArchive::read_into(const std::string& name, Matrix& m) const {
  const auto& t = at(name);
  if (t.shape.size() != 2 || t.shape[0] != m.rows() || t.shape[1] != m.cols()) {
    throw ShapeError("tensor '" + name + "' has a shape that does not match the model");
  }
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(t.values[static_cast<std::size_t>(i)]);
}

const std::string& TensorArchive::meta(const std::string& key) const {
  const auto it = metadata.find(key);
  if (it == metadata.end()) throw ArgumentError("archive metadata has no key '" + key + "'");
  return it->second;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  nlohmann::ordered_json header;
  std::uint64_t offset = 0;
  for (const auto& t : archive.tensors) {
    if (t.numel() != static_cast<std::int64_t>(t.values.size())) {
      throw ShapeError("tensor '" + t.name + "' holds a value count that does not match its shape");
    }
    const std::uint64_t bytes = t.values.size() * dtype_width(t.dtype);
    header[t.name] = {{"dtype", t.dtype}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  header["__metadata__"] = archive.metadata;
  std::string text = header.dump();
  while (text.size() % 8 != 0) text.push_back(' ');

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint '" + tmp.string() + "'");
    const std::uint64_t n = text.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : archive.tensors) {
      if (t.dtype == "F32") {
        std::vector<float> buf(t.values.begin(), t.values.end());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
      } else {
        out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * 8));
      }
    }
    if (!out) throw Error("short write to checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  const auto file_size = static_cast<std::uint64_t>(std::filesystem::file_size(path));
  std::uint64_t header_size = 0;
  if (file_size < 8 || !in.read(reinterpret_cast<char*>(&header_size), 8)) {
    throw FormatError("checkpoint truncated before the header length", 0);
  }
  if (header_size > file_size - 8) throw FormatError("checkpoint header length exceeds the file size", 0);
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what(), 8 + e.byte);
  }
  const std::uint64_t data_start = 8 + header_size;
  const std::uint64_t data_size = file_size - data_start;
  std::vector<char> data(data_size);
  in.read(data.data(), static_cast<std::streamsize>(data_size));

  TensorArchive archive;
  try {
    for (const auto& [name, entry] : header.items()) {
      if (name == "__metadata__") {
        archive.metadata = entry.get<std::map<std::string, std::string>>();
        continue;
      }
      NamedTensor t;
      t.name = name;
      t.dtype = entry.at("dtype").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto range = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
      const std::size_t width = dtype_width(t.dtype);
      if (range.size() != 2 || range[0] > range[1] || range[1] > data_size ||
          (range[1] - range[0]) != static_cast<std::uint64_t>(t.numel()) * width) {
        throw FormatError("tensor '" + name + "' has an invalid byte range", data_start);
      }
      t.values.resize(static_cast<std::size_t>(t.numel()));
      const char* src = data.data() + range[0];
      for (std::size_t i = 0; i < t.values.size(); ++i) {
        if (width == 4) {
          float v;
          std::memcpy(&v, src + 4 * i, 4);
          t.values[i] = v;
        } else {
          std::memcpy(&t.values[i], src + 8 * i, 8);
        }
      }
      archive.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what(), 8);
  }
  return archive;
}

}  // namespace mlvae
