/*
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <limits>
#include <random>

#include "insloc/checkpoint.hpp"
#include "insloc/error.hpp"

using namespace insloc;

TEST(Checkpoint, ByteLayout) {
  std::vector<NamedTensor> e{{"b", Tensor({1}, 1.0)}};
  const auto bytes = encode_checkpoint(e);
  // magic, len, 'b', rank, extent, value
  ASSERT_EQ(bytes.size(), 5u + 8 + 1 + 8 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 5), "CLOC1");
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(bytes[13], 'b');
  // 1.0 = 0x3FF0000000000000, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[36]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[37]), 0x3F);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  std::vector<NamedTensor> e;
  Tensor a({2, 3, 1, 4});
  for (auto& v : a.data()) v = std::bit_cast<double>(rng() & 0x7fefffffffffffffull);
  e.push_back({"unet.enc0.conv1.weight", a});
  e.push_back({"bn.running_var", Tensor({3}, std::vector<double>{-0.0, 1e-310, 3.5})});
  e.push_back({"\xce\xb1-utf8", Tensor({1}, std::numeric_limits<double>::max())});
  const auto path = std::filesystem::temp_directory_path() / "insloc_ckpt_test.bin";
  save_checkpoint(path, e);
  auto back = load_checkpoint(path);
  ASSERT_EQ(back.size(), e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_EQ(back[i].name, e[i].name);
    EXPECT_EQ(back[i].value.shape(), e[i].value.shape());
    for (std::size_t j = 0; j < e[i].value.numel(); ++j) {
      EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i].value[j]),
                std::bit_cast<std::uint64_t>(e[i].value[j]));
    }
  }
  EXPECT_EQ(encode_checkpoint(back), read_file(path));
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptInput) {
  EXPECT_THROW(decode_checkpoint("CLOC2"), FormatError);
  std::vector<NamedTensor> e{{"w", Tensor({2, 2}, 1.0)}};
  auto bytes = encode_checkpoint(e);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_TRUE(decode_checkpoint("CLOC1").empty());
}
