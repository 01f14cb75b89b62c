// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace aewc {

class ParamVector;

/// Incremental SHA-256 producing lowercase hex digests.
class Sha256 {
 public:
  Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> bytes);
  Sha256& update(std::string_view s);
  Sha256& update(std::span<const double> xs);
  Sha256& update_u64(std::uint64_t v);
  /// Length-prefixed, so ("ab","c") and ("a","bc") differ.
  Sha256& update_field(std::string_view s);
  std::string hex();

 private:
  struct Deleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
  };
  std::unique_ptr<EVP_MD_CTX, Deleter> ctx_;
};

std::string sha256_hex(std::string_view data);
/// Digest of a file's bytes; throws std::runtime_error if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Hash of segment layout plus raw little-endian parameter bytes.
void hash_params(Sha256& h, const ParamVector& p);
std::string params_hash(const ParamVector& p);

}  // namespace aewc
