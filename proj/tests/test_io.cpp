// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "lmdm/checkpoint.hpp"
#include "lmdm/errors.hpp"
#include "lmdm/latent.hpp"
#include "test_util.hpp"

using namespace lmdm;
using lmdm::testing::random_latents;
using lmdm::testing::small_config;

namespace {

std::filesystem::path scratch(const char* name) { return std::filesystem::temp_directory_path() / name; }

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("latent files round-trip bitwise") {
  std::mt19937_64 rng(4);
  const LatentSequence seq = random_latents(rng, 5, 17);
  const auto path = scratch("lmdm_io_latent.bin");
  save_latents(path, seq);
  CHECK(std::filesystem::file_size(path) == 16 + 5 * 17 * 4);
  CHECK(load_latents(path) == seq);

  const std::string bytes = read_bytes(path);
  CHECK(bytes.substr(0, 4) == "LMLS");

  write_bytes(path, bytes.substr(0, bytes.size() - 4));
  try {
    load_latents(path);
    FAIL("truncated file accepted");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(bytes.size())) != std::string::npos);
    CHECK(msg.find(std::to_string(bytes.size() - 4)) != std::string::npos);
  }

  write_bytes(path, bytes + "x");
  CHECK_THROWS_AS(load_latents(path), FormatError);

  std::string bad = bytes;
  bad[0] = 'X';
  write_bytes(path, bad);
  CHECK_THROWS_AS(load_latents(path), FormatError);

  bad = bytes;
  bad[4] = 9;
  write_bytes(path, bad);
  CHECK_THROWS_AS(load_latents(path), FormatError);

  CHECK_THROWS_AS(load_latents(scratch("lmdm_io_missing.bin")), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoints round-trip config, parameters and extras") {
  ModelConfig mc = small_config(MaskFamily::BlockCausal);
  mc.local_cond_channels = 2;
  DiT model(mc, 12);
  Checkpoint ck{mc, model.params().clone(), 0x1234567890ull, {}};
  AdamW opt(model.params(), AdamWConfig{});
  store_optimizer(opt, model.params(), "adam", ck.extra);

  const auto path = scratch("lmdm_io_ckpt.bin");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == mc);
  CHECK(back.step == ck.step);
  REQUIRE(back.params.size() == ck.params.size());
  for (const auto& [name, t] : ck.params) {
    const Tensor& u = back.params.get(name);
    CHECK(u.shape() == t.shape());
    CHECK(std::equal(u.data().begin(), u.data().end(), t.data().begin()));
  }
  CHECK(back.extra.size() == ck.extra.size());

  const std::string bytes = read_bytes(path);
  CHECK(bytes.substr(0, 4) == "LMCK");
  write_bytes(path, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  write_bytes(path, bytes + std::string(3, '\0'));
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::string bad = bytes;
  bad[1] = 'Z';
  write_bytes(path, bad);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
