#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "uma/checkpoint.hpp"
#include "uma/errors.hpp"
#include "uma/network.hpp"

using namespace uma;

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& s, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

}  // namespace

TEST(Checkpoint, ByteLayoutMatchesHandEncoding) {
  NamedTensors t;
  t["b"] = Tensor({2}, std::vector<double>{1.5, -2});
  t["a"] = Tensor({1, 2}, std::vector<double>{0.25, 3});
  std::string want = "UMA1";
  // Name order: "a" first.
  put_u32(want, 1);
  want += "a";
  put_u32(want, 2);
  put_u32(want, 1);
  put_u32(want, 2);
  put_f64(want, 0.25);
  put_f64(want, 3);
  put_u32(want, 1);
  want += "b";
  put_u32(want, 1);
  put_u32(want, 2);
  put_f64(want, 1.5);
  put_f64(want, -2);
  EXPECT_EQ(encode_checkpoint(t), want);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto params = init_params(NetworkConfig::toy(), 5);
  const auto path = std::filesystem::temp_directory_path() / "uma_test_roundtrip.uma";
  save_checkpoint(path, params);
  const auto back = load_checkpoint(path);
  ASSERT_EQ(back.size(), params.size());
  for (const auto& [name, t] : params) {
    const Tensor& u = back.at(name);
    ASSERT_EQ(u.shape(), t.shape()) << name;
    EXPECT_EQ(std::memcmp(u.data().data(), t.data().data(), t.size() * sizeof(double)), 0) << name;
  }
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(params));
  std::filesystem::remove(path);
}

TEST(Checkpoint, SpecialValuesSurvive) {
  NamedTensors t;
  t["x"] = Tensor({3}, std::vector<double>{-0.0, 5e-324, 1.7976931348623157e308});
  const auto back = decode_checkpoint(encode_checkpoint(t));
  EXPECT_TRUE(std::signbit(back.at("x")[0]));
  EXPECT_EQ(back.at("x")[1], 5e-324);
  EXPECT_EQ(back.at("x")[2], 1.7976931348623157e308);
}

TEST(Checkpoint, BadMagicRejected) { EXPECT_THROW(decode_checkpoint("UMA2"), ParseError); }

TEST(Checkpoint, TruncationRejected) {
  NamedTensors t;
  t["w"] = Tensor({4}, 1.0);
  std::string bytes = encode_checkpoint(t);
  bytes.pop_back();
  EXPECT_THROW(decode_checkpoint(bytes), ParseError);
}

TEST(Checkpoint, EmptyFileOfTensorsIsValid) { EXPECT_TRUE(decode_checkpoint("UMA1").empty()); }
