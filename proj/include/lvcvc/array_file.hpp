#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "vendor_json.hpp"

namespace lvcvc {

/// Versioned container of named float32 matrices plus a JSON metadata blob.
/// One format backs feature caches, the Gaussian store, probe exports, and
/// checkpoints. Layout (little-endian):
///
///   "LVCA" | u32 version | u32 meta_len | meta (UTF-8 JSON)
///   u32 array_count
///   per array: u16 name_len | name | u32 rows | u32 cols | rows*cols float32
///
/// Arrays are stored column-major in insertion order; save() is byte-stable
/// for identical content.
class ArrayFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void set_meta(const nlohmann::json& meta) { meta_ = meta; }
  const nlohmann::json& meta() const { return meta_; }

  void add(const std::string& name, const Eigen::MatrixXf& values);
  bool has(const std::string& name) const;
  const Eigen::MatrixXf& get(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }

  void save(const std::string& path) const;
  // Throws DataError on missing / corrupt / wrong-version files.
  static ArrayFile load(const std::string& path);

 private:
  nlohmann::json meta_ = nlohmann::json::object();
  std::vector<std::string> order_;
  std::map<std::string, Eigen::MatrixXf> arrays_;
};

}  // namespace lvcvc
