#include "ctformer/pipeline/container.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctformer::pipeline {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'F', 'C', 'O', 'N', 'T', '1'};

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t read_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

}  // namespace

const NamedArray& Container::array(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return a;
  }
  throw std::runtime_error("container '" + kind + "': no array named '" + name + "'");
}

bool Container::has_array(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

std::string serialize_container(const Container& c) {
  nlohmann::json manifest{{"schema_version", kContainerSchemaVersion},
                          {"kind", c.kind},
                          {"metadata", c.metadata}};
  nlohmann::json arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const NamedArray& a : c.arrays) {
    std::size_t count = 1;
    for (std::size_t d : a.shape) count *= d;
    if (count != a.values.size()) {
      throw std::invalid_argument("container: array '" + a.name + "' shape/value count mismatch");
    }
    arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", count}});
    offset += count;
  }
  manifest["arrays"] = std::move(arrays);
  const std::string text = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  append_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset * 8);
  for (const NamedArray& a : c.arrays) {
    for (double v : a.values) append_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Container parse_container(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("container: bad magic");
  }
  const std::uint64_t manifest_len = read_u64(bytes, 8);
  if (16 + manifest_len > bytes.size()) throw std::runtime_error("container: truncated manifest");
  const nlohmann::json manifest = nlohmann::json::parse(bytes.substr(16, manifest_len));
  if (manifest.value("schema_version", -1) != kContainerSchemaVersion) {
    throw std::runtime_error("container: unsupported schema_version");
  }
  Container c;
  c.kind = manifest.at("kind").get<std::string>();
  c.metadata = manifest.at("metadata");
  const std::size_t data_start = 16 + manifest_len;
  for (const auto& entry : manifest.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto count = entry.at("count").get<std::uint64_t>();
    if (data_start + (offset + count) * 8 > bytes.size()) {
      throw std::runtime_error("container: truncated array '" + a.name + "'");
    }
    a.values.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      a.values[i] = std::bit_cast<double>(read_u64(bytes, data_start + (offset + i) * 8));
    }
    c.arrays.push_back(std::move(a));
  }
  return c;
}

void write_container(const std::string& path, const Container& c) {
  const std::string bytes = serialize_container(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_container: cannot open " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_container: write failed for " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_container: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_container(buf.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

}  // namespace ctformer::pipeline
