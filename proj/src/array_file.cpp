#include "lvcvc/array_file.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "lvcvc/errors.hpp"

namespace lvcvc {

namespace {

constexpr char kMagic[4] = {'L', 'V', 'C', 'A'};

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t read_u16(std::istream& is, const std::string& what) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2))
    throw DataError("array file truncated while reading " + what);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("array file truncated while reading " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void ArrayFile::add(const std::string& name, const Eigen::MatrixXf& values) {
  if (arrays_.find(name) == arrays_.end()) order_.push_back(name);
  arrays_[name] = values;
}

bool ArrayFile::has(const std::string& name) const {
  return arrays_.find(name) != arrays_.end();
}

const Eigen::MatrixXf& ArrayFile::get(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw DataError("array file has no array named '" + name + "'");
  return it->second;
}

void ArrayFile::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  const std::string meta = meta_.dump();
  write_u32(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_u32(os, static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const Eigen::MatrixXf& m = arrays_.at(name);
    write_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(m.rows()));
    write_u32(os, static_cast<std::uint32_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(float) * m.size()));
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

ArrayFile ArrayFile::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("'" + path + "' is not an LVCA array file");
  const std::uint32_t version = read_u32(is, "version");
  if (version != kVersion)
    throw DataError("'" + path + "' has version " + std::to_string(version) +
                    ", expected " + std::to_string(kVersion));
  const std::uint32_t meta_len = read_u32(is, "meta length");
  std::string meta(meta_len, '\0');
  if (meta_len > 0 && !is.read(meta.data(), meta_len))
    throw DataError("array file truncated while reading metadata");
  ArrayFile out;
  try {
    out.meta_ = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt metadata in '" + path + "': " + e.what());
  }
  const std::uint32_t count = read_u32(is, "array count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = read_u16(is, "array name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw DataError("array file truncated while reading array name");
    const std::uint32_t rows = read_u32(is, "rows");
    const std::uint32_t cols = read_u32(is, "cols");
    Eigen::MatrixXf m(rows, cols);
    const std::streamsize bytes = static_cast<std::streamsize>(sizeof(float)) * rows * cols;
    if (bytes > 0 && !is.read(reinterpret_cast<char*>(m.data()), bytes))
      throw DataError("array file truncated while reading data of '" + name + "'");
    out.add(name, m);
  }
  return out;
}

}  // namespace lvcvc
