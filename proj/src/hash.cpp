// SPDX-License-Identifier: Apache-2.0
#include "aewc/hash.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <stdexcept>

#include "aewc/numerics.hpp"

namespace aewc {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 init failed");
  }
}

Sha256& Sha256::update(std::span<const std::uint8_t> bytes) {
  if (!bytes.empty() && EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size()) != 1) {
    throw std::runtime_error("sha256 update failed");
  }
  return *this;
}

Sha256& Sha256::update(std::string_view s) {
  return update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

Sha256& Sha256::update(std::span<const double> xs) {
  return update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(xs.data()),
                                              xs.size() * sizeof(double)));
}

Sha256& Sha256::update_u64(std::uint64_t v) {
  std::array<std::uint8_t, 8> b{};
  std::memcpy(b.data(), &v, 8);
  return update(std::span<const std::uint8_t>(b));
}

Sha256& Sha256::update_field(std::string_view s) {
  update_u64(s.size());
  return update(s);
}

std::string Sha256::hex() {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) throw std::runtime_error("sha256 final failed");
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(digits[md[i] >> 4]);
    out.push_back(digits[md[i] & 0xF]);
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data);
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got > 0) h.update(std::string_view(buf.data(), got));
  }
  return h.hex();
}

void hash_params(Sha256& h, const ParamVector& p) {
  h.update_u64(p.segments().size());
  for (const auto& seg : p.segments()) {
    h.update_field(seg.name);
    h.update_u64(seg.shape.size());
    for (auto d : seg.shape) h.update_u64(d);
  }
  h.update(std::span<const double>(p.values()));
}

std::string params_hash(const ParamVector& p) {
  Sha256 h;
  hash_params(h, p);
  return h.hex();
}

}  // namespace aewc
