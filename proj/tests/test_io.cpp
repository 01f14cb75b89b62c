// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "aewc/container.hpp"
#include "aewc/errors.hpp"
#include "aewc/hash.hpp"
#include "aewc/text.hpp"
#include "support.hpp"

using namespace aewc;

TEST_CASE("utf8 round trip and validation") {
  const std::string s = "cаt é 😀";
  auto cps = text::decode_utf8(s);
  REQUIRE(cps);
  std::string back;
  for (char32_t c : *cps) back += text::encode_utf8(c);
  CHECK(back == s);
  CHECK((*cps)[1] == U'а');
  CHECK_FALSE(text::is_valid_utf8("\xC3"));
  CHECK_FALSE(text::is_valid_utf8("\xC0\xAF"));  // overlong
  CHECK(text::is_valid_utf8(""));
}

TEST_CASE("trim and split_whitespace") {
  CHECK(text::trim("  a b \t\n") == "a b");
  CHECK(text::trim("   ").empty());
  CHECK(text::split_whitespace(" a  b\tc ") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("length-prefixed fields disambiguate concatenation") {
  Sha256 a, b;
  a.update_field("ab").update_field("c");
  b.update_field("a").update_field("bc");
  CHECK(a.hex() != b.hex());
}

TEST_CASE("params_hash changes iff a value or the layout changes") {
  ParamVector p;
  auto s = p.add_segment("w", {3});
  s[0] = 1.0;
  const auto h0 = params_hash(p);
  ParamVector q = p;
  CHECK(params_hash(q) == h0);
  auto bits = std::bit_cast<std::uint64_t>(q.values()[2]);
  q.values()[2] = std::bit_cast<double>(bits ^ 1u);
  CHECK(params_hash(q) != h0);

  ParamVector r;
  r.add_segment("v", {3});
  r.values() = p.values();
  CHECK(params_hash(r) != h0);
}

TEST_CASE("container round trip is bit exact and corruption is detected") {
  const auto dir = aewc::testing::scratch_dir("container");
  Container c;
  c.header["kind"] = "test";
  c.arrays.push_back({"x", {1.0, -0.0, 1e-300, 3.141592653589793}});
  c.arrays.push_back({"y", {}});
  write_container(dir / "c.bin", c);
  const auto back = read_container(dir / "c.bin");
  CHECK(back.header["kind"] == "test");
  REQUIRE(back.arrays.size() == 2);
  CHECK(std::memcmp(back.array("x").data(), c.arrays[0].second.data(), 4 * sizeof(double)) == 0);
  CHECK(back.array("y").empty());
  CHECK_THROWS_AS(back.array("z"), ValidationError);

  // Flip one payload byte.
  {
    std::fstream f(dir / "c.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(-3, std::ios::end);
    char ch = 0;
    f.read(&ch, 1);
    f.seekp(-3, std::ios::end);
    ch = static_cast<char>(ch ^ 0x40);
    f.write(&ch, 1);
  }
  CHECK_THROWS_AS(read_container(dir / "c.bin"), ValidationError);

  std::ofstream(dir / "junk.bin") << "not a container";
  CHECK_THROWS_AS(read_container(dir / "junk.bin"), ValidationError);

  // Truncation.
  write_container(dir / "t.bin", c);
  std::filesystem::resize_file(dir / "t.bin", std::filesystem::file_size(dir / "t.bin") - 5);
  CHECK_THROWS_AS(read_container(dir / "t.bin"), ValidationError);
}

TEST_CASE("layout json round trip") {
  ParamVector p;
  p.add_segment("a", {2, 2})[3] = 4.0;
  p.add_segment("b", {1});
  const auto q = params_from_layout(layout_to_json(p), p.values());
  CHECK(q == p);
  CHECK(q.same_layout(p));
}
