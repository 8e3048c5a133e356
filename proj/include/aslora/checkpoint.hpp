#pragma once

#include "aslora/common.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace aslora {

/// Single-file tensor container:
///
///   bytes 0..7   magic "ASLORA1\n"
///   bytes 8..15  u64 little-endian manifest length M
///   M bytes      JSON manifest {"tensors":[{name,shape,offset,count}...],
///                               "extra": <caller data>}
///   payload      float32 little-endian values, offsets are element indices
///
/// Values are stored as float32 regardless of the build's scalar type; the
/// 64-bit build round-trips through float32 and loses the low bits.
class ContainerWriter {
public:
  /// Pre: names unique and non-empty.
  void add_tensor(const std::string& name, const Shape& shape, const real* data,
                  int64_t count);
  void set_extra(nlohmann::ordered_json extra) { extra_ = std::move(extra); }

  /// Writes the file; IoError on failure.
  void write(const std::string& path) const;

private:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> values;
  };
  std::vector<Entry> entries_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

class ContainerReader {
public:
  /// Loads and validates the whole file. IoError on filesystem or framing
  /// problems.
  explicit ContainerReader(const std::string& path);

  const nlohmann::json& extra() const { return extra_; }
  bool has(const std::string& name) const;
  std::vector<std::string> names() const;
  const Shape& shape_of(const std::string& name) const;

  /// Reads one tensor, checking the stored shape. IoError when missing or
  /// mismatched.
  std::vector<real> read(const std::string& name, const Shape& expect) const;

private:
  struct Entry {
    Shape shape;
    uint64_t offset = 0;
    uint64_t count = 0;
  };
  const Entry& find(const std::string& name) const;

  std::string path_;
  std::vector<std::pair<std::string, Entry>> entries_;
  std::vector<float> payload_;
  nlohmann::json extra_;
};

} // namespace aslora
