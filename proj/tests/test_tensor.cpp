// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <cmath>
#include <array>
#include <numeric>
#include <random>

#include "lmdm/tensor.hpp"
#include "lmdm/verify/gradcheck.hpp"
#include "test_util.hpp"

using namespace lmdm;

TEST_CASE("every op matches central differences over 20 seeds") {
  for (const auto& op : verify::op_cases()) {
    CAPTURE(op.name);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto inputs = verify::op_inputs(op, 100 + seed);
      worst = std::max(worst, verify::gradcheck(op.fn, inputs, seed).rel_error);
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("softmax rows lie on the simplex") {
  std::mt19937_64 rng(3);
  const Tensor x = testing::random_tensor(rng, {6, 9}, 10.f);
  const Tensor p = softmax(x, 1);
  for (int r = 0; r < 6; ++r) {
    double total = 0.0;
    for (int c = 0; c < 9; ++c) {
      CHECK(p.at(r, c) >= 0.f);
      total += p.at(r, c);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("masked softmax zeroes masked entries and rejects empty rows") {
  const Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  const std::vector<std::uint8_t> mask = {1, 0, 1, 0, 1, 0};
  const Tensor p = masked_softmax(x, mask);
  CHECK(p.at(0, 1) == 0.f);
  CHECK(p.at(1, 1) == 1.f);
  const std::vector<std::uint8_t> empty = {1, 1, 1, 0, 0, 0};
  CHECK_THROWS_AS(masked_softmax(x, empty), ContractError);
}

TEST_CASE("backward freezes the tape") {
  Tensor w = Tensor::parameter({2}, {1.f, 2.f});
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(mul(w, w));
  }
  const Gradients g = tape.backward(loss);
  CHECK(g.of(w).data()[1] == 4.f);
  CHECK(tape.frozen());
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("detach and NoGradGuard stop gradient flow") {
  Tensor w = Tensor::parameter({3}, {1.f, -1.f, 0.5f});
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    const Tensor stopped = detach(mul(w, w));
    Tensor unrecorded;
    {
      NoGradGuard guard;
      CHECK_FALSE(recording_enabled());
      unrecorded = scale(w, 3.f);
    }
    CHECK(recording_enabled());
    loss = sum(add(add(stopped, unrecorded), w));
  }
  const std::size_t nodes = tape.size();
  const Gradients g = tape.backward(loss);
  const Tensor gw = g.of(w);
  for (float v : gw.data()) CHECK(v == 1.f);
  CHECK(nodes == 3);  // the two adds and the sum
}

TEST_CASE("ops without grad inputs record nothing") {
  Tape tape;
  TapeScope scope(tape);
  const Tensor a = Tensor::ones({2, 2});
  (void)matmul(a, a);
  CHECK(tape.size() == 0);
}

TEST_CASE("shape mismatches throw DimensionError") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  CHECK_THROWS_AS(rope(Tensor::zeros({2, 6}), std::vector<int>{0, 1}, 4), DimensionError);
}

TEST_CASE("matmul kernels agree with a naive product on odd shapes") {
  std::mt19937_64 rng(9);
  for (auto [m, k, n] : {std::array{1, 1, 1}, std::array{5, 7, 33}, std::array{9, 64, 70}, std::array{4, 3, 31}}) {
    const Tensor a = testing::random_tensor(rng, {m, k});
    const Tensor b = testing::random_tensor(rng, {k, n});
    const Tensor c = matmul(a, b);
    const Tensor cnt = matmul_nt(a, transpose(b));
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double ref = 0.0;
        for (int p = 0; p < k; ++p) ref += static_cast<double>(a.at(i, p)) * b.at(p, j);
        CHECK(c.at(i, j) == doctest::Approx(ref).epsilon(1e-5).scale(1.0));
        CHECK(cnt.at(i, j) == c.at(i, j));
      }
    }
  }
}

TEST_CASE("mac counter tracks matmul work") {
  reset_mac_count();
  (void)matmul(Tensor::ones({3, 4}), Tensor::ones({4, 5}));
  CHECK(mac_count() == 60);
  reset_mac_count();
  CHECK(mac_count() == 0);
}
