// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aewc/numerics.hpp"

namespace aewc {

/// Binary artifact: magic, JSON header, then length-prefixed little-endian
/// float64 arrays. The header carries a SHA-256 of the array payload.
///
///   "AEWCBIN\x01" | u64 header_len | header (UTF-8 JSON) |
///   u64 n_arrays | { u64 len | len x f64 }...
struct Container {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  const std::vector<double>& array(const std::string& name) const;
};

void write_container(const std::filesystem::path& path, const Container& c);
/// Throws ValidationError on bad magic, truncation, or payload hash mismatch.
Container read_container(const std::filesystem::path& path);

nlohmann::json layout_to_json(const ParamVector& p);
ParamVector params_from_layout(const nlohmann::json& layout, const std::vector<double>& values);

}  // namespace aewc
