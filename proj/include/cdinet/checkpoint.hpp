#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cdinet/tensor.hpp"

namespace cdinet {

/// Binary tensor archive: 8-byte magic, u64 little-endian JSON header
/// length, JSON header (meta + ordered tensor directory), then raw
/// little-endian f64 payloads in directory order. Serialization is
/// deterministic, so save -> load -> save is byte-identical.
struct TensorArchive {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  static constexpr char kMagic[9] = "CDINETA1";

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

  const Tensor* find(const std::string& name) const;
  void add(const std::string& name, Tensor t) {
    tensors.emplace_back(name, std::move(t));
  }
};

}  // namespace cdinet
