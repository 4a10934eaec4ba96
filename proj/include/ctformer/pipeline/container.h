#ifndef CTFORMER_PIPELINE_CONTAINER_H_
#define CTFORMER_PIPELINE_CONTAINER_H_

#include <string>
#include <vector>

#include "json.hpp"

namespace ctformer::pipeline {

inline constexpr int kContainerSchemaVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

// Versioned binary container:
//   8-byte magic "CTFCONT1"
//   uint64 little-endian manifest length
//   manifest JSON {"schema_version", "kind", "metadata",
//                  "arrays": [{"name", "shape", "offset", "count"}]}
//   array payloads as little-endian IEEE-754 doubles, in manifest order
// Serialization is a pure function of the contents, so write -> read ->
// write reproduces the file byte for byte.
struct Container {
  std::string kind;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  bool has_array(const std::string& name) const;
};

std::string serialize_container(const Container& c);
Container parse_container(const std::string& bytes);

void write_container(const std::string& path, const Container& c);
// Throws std::runtime_error on bad magic, schema mismatch or truncation.
Container read_container(const std::string& path);

}  // namespace ctformer::pipeline

#endif  // CTFORMER_PIPELINE_CONTAINER_H_
