#include "aslora/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace aslora {

static_assert(std::endian::native == std::endian::little,
              "container layout assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace {
constexpr char kMagic[8] = {'A', 'S', 'L', 'O', 'R', 'A', '1', '\n'};
} // namespace

void ContainerWriter::add_tensor(const std::string& name, const Shape& shape,
                                 const real* data, int64_t count) {
  if (name.empty()) throw ContractError("container: tensor name must not be empty");
  for (const auto& e : entries_)
    if (e.name == name)
      throw ContractError("container: duplicate tensor name '" + name + "'");
  if (count != numel_of(shape))
    throw ContractError("container: count does not match shape for '" + name + "'");
  Entry e;
  e.name = name;
  e.shape = shape;
  e.values.resize(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i)
    e.values[static_cast<size_t>(i)] = static_cast<float>(data[i]);
  entries_.push_back(std::move(e));
}

void ContainerWriter::write(const std::string& path) const {
  nlohmann::ordered_json manifest;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (const auto& e : entries_) {
    nlohmann::ordered_json t;
    t["name"] = e.name;
    t["shape"] = e.shape;
    t["offset"] = offset;
    t["count"] = e.values.size();
    tensors.push_back(std::move(t));
    offset += e.values.size();
  }
  manifest["tensors"] = std::move(tensors);
  manifest["extra"] = extra_;
  const std::string mbytes = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  const uint64_t mlen = mbytes.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mbytes.data(), static_cast<std::streamsize>(mbytes.size()));
  for (const auto& e : entries_)
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

ContainerReader::ContainerReader(const std::string& path) : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("'" + path + "' is not a tensor container");
  uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  if (!in || mlen == 0 || mlen > (1ull << 31))
    throw IoError("'" + path + "': bad manifest length");
  std::string mbytes(mlen, '\0');
  in.read(mbytes.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw IoError("'" + path + "': truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mbytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("'" + path + "': manifest is not valid JSON: " + e.what());
  }
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
    throw IoError("'" + path + "': manifest missing tensor table");
  extra_ = manifest.value("extra", nlohmann::json::object());

  uint64_t total = 0;
  for (const auto& t : manifest["tensors"]) {
    Entry e;
    e.shape = t.at("shape").get<Shape>();
    e.offset = t.at("offset").get<uint64_t>();
    e.count = t.at("count").get<uint64_t>();
    if (e.count != static_cast<uint64_t>(numel_of(e.shape)) || e.offset != total)
      throw IoError("'" + path + "': inconsistent tensor table");
    total += e.count;
    entries_.emplace_back(t.at("name").get<std::string>(), std::move(e));
  }

  payload_.resize(total);
  in.read(reinterpret_cast<char*>(payload_.data()),
          static_cast<std::streamsize>(total * sizeof(float)));
  if (!in) throw IoError("'" + path + "': truncated payload");
}

bool ContainerReader::has(const std::string& name) const {
  for (const auto& [n, e] : entries_)
    if (n == name) return true;
  return false;
}

std::vector<std::string> ContainerReader::names() const {
  std::vector<std::string> out;
  for (const auto& [n, e] : entries_) out.push_back(n);
  return out;
}

const ContainerReader::Entry& ContainerReader::find(const std::string& name) const {
  for (const auto& [n, e] : entries_)
    if (n == name) return e;
  throw IoError("'" + path_ + "': no tensor named '" + name + "'");
}

const Shape& ContainerReader::shape_of(const std::string& name) const {
  return find(name).shape;
}

std::vector<real> ContainerReader::read(const std::string& name, const Shape& expect) const {
  const Entry& e = find(name);
  if (e.shape != expect)
    throw IoError("'" + path_ + "': tensor '" + name + "' has shape " +
                  shape_str(e.shape) + ", expected " + shape_str(expect));
  std::vector<real> out(e.count);
  for (uint64_t i = 0; i < e.count; ++i)
    out[i] = static_cast<real>(payload_[e.offset + i]);
  return out;
}

} // namespace aslora
