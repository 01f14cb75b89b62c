// SPDX-License-Identifier: Apache-2.0
#include "aewc/container.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aewc/errors.hpp"
#include "aewc/hash.hpp"

namespace aewc {

namespace {

constexpr char kMagic[8] = {'A', 'E', 'W', 'C', 'B', 'I', 'N', '\x01'};

std::string payload_hash(const std::vector<std::pair<std::string, std::vector<double>>>& arrays) {
  Sha256 h;
  h.update_u64(arrays.size());
  for (const auto& [name, values] : arrays) {
    h.update_field(name);
    h.update_u64(values.size());
    h.update(std::span<const double>(values));
  }
  return h.hex();
}

void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw ValidationError("corrupt container: truncated");
  return v;
}

}  // namespace

const std::vector<double>& Container::array(const std::string& name) const {
  for (const auto& [n, v] : arrays) {
    if (n == name) return v;
  }
  throw ValidationError("corrupt container: missing array '" + name + "'");
}

void write_container(const std::filesystem::path& path, const Container& c) {
  nlohmann::json header = c.header;
  nlohmann::json names = nlohmann::json::array();
  for (const auto& [name, _] : c.arrays) names.push_back(name);
  header["arrays"] = names;
  header["payload_sha256"] = payload_hash(c.arrays);
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u64(os, c.arrays.size());
  for (const auto& [_, values] : c.arrays) {
    put_u64(os, values.size());
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path.string());
  char magic[8] = {};
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ValidationError("corrupt container: bad magic in " + path.string());
  }
  const auto header_len = get_u64(is);
  if (header_len > (1u << 26)) throw ValidationError("corrupt container: header too large");
  std::string text(header_len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw ValidationError("corrupt container: truncated header");
  }
  Container c;
  try {
    c.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corrupt container: bad header: ") + e.what());
  }
  const auto n_arrays = get_u64(is);
  const auto& names = c.header.at("arrays");
  if (names.size() != n_arrays) throw ValidationError("corrupt container: array count mismatch");
  for (std::uint64_t k = 0; k < n_arrays; ++k) {
    const auto len = get_u64(is);
    if (len > (1ull << 32)) throw ValidationError("corrupt container: array too large");
    std::vector<double> values(len);
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(len * 8))) {
      throw ValidationError("corrupt container: truncated array");
    }
    c.arrays.emplace_back(names[k].get<std::string>(), std::move(values));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ValidationError("corrupt container: trailing bytes");
  if (payload_hash(c.arrays) != c.header.value("payload_sha256", std::string{})) {
    throw ValidationError("corrupt container: payload hash mismatch in " + path.string());
  }
  return c;
}

nlohmann::json layout_to_json(const ParamVector& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& seg : p.segments()) {
    out.push_back({{"name", seg.name}, {"shape", seg.shape}});
  }
  return out;
}

ParamVector params_from_layout(const nlohmann::json& layout, const std::vector<double>& values) {
  ParamVector p;
  for (const auto& seg : layout) {
    p.add_segment(seg.at("name").get<std::string>(), seg.at("shape").get<std::vector<std::size_t>>());
  }
  if (p.size() != values.size()) throw ValidationError("parameter layout does not match stored values");
  p.values() = values;
  return p;
}

}  // namespace aewc
