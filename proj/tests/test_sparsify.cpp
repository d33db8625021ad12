#include <cmath>
#include <random>

#include "doctest.h"
#include "evinc/sparsify.hpp"
#include "oracles.hpp"

using namespace evinc;

namespace {

IncrementTensor scalar_inc(float v) {
  Tensor t(1, 1, 1);
  t(0, 0, 0) = v;
  return IncrementTensor::from_values(t, {1, 1});
}

}  // namespace

TEST_CASE("fixed k=1 rounding with error feedback") {
  auto st = SparsifyState::fixed({1, 1, 1}, 1.0f);
  auto y = sparsify_step(scalar_inc(0.4f), st);
  CHECK(y.values(0, 0, 0) == 0.0f);
  CHECK(y.mask.count_true() == 0);
  CHECK(st.delta(0, 0, 0) == doctest::Approx(0.4f));

  y = sparsify_step(scalar_inc(0.4f), st);
  CHECK(y.values(0, 0, 0) == 1.0f);
  CHECK(y.mask.count_true() == 1);
  CHECK(st.delta(0, 0, 0) == doctest::Approx(-0.2f));
}

TEST_CASE("half-way values round up") {
  auto st = SparsifyState::fixed({1, 1, 1}, 1.0f);
  CHECK(sparsify_step(scalar_inc(0.5f), st).values(0, 0, 0) == 1.0f);
  CHECK(st.delta(0, 0, 0) == -0.5f);
  st = SparsifyState::fixed({1, 1, 1}, 1.0f);
  CHECK(sparsify_step(scalar_inc(-0.5f), st).values(0, 0, 0) == 0.0f);
}

TEST_CASE("k=0 is the identity") {
  std::mt19937 rng(1);
  auto st = SparsifyState::fixed({2, 5, 5}, 0.0f);
  for (int i = 0; i < 10; ++i) {
    auto x = IncrementTensor::from_values(oracle::random_tiled({2, 5, 5}, {2, 2}, 0.5, rng).first, {2, 2});
    auto y = sparsify_step(x, st);
    CHECK(max_abs_diff(y.values, x.values) == 0.0f);
    CHECK(y.mask == x.mask);
    CHECK((st.delta.array() == 0.0f).all());
  }
}

TEST_CASE("fixed k: residual and cumulative error stay within k/2") {
  std::mt19937 rng(2);
  const Shape s{2, 6, 6};
  const float k = 0.5f;
  auto st = SparsifyState::fixed(s, k);
  Eigen::ArrayXd emitted = Eigen::ArrayXd::Zero(s.size()), truth = emitted;
  const double slack = 1e-4;
  for (int step = 0; step < 1000; ++step) {
    auto x = IncrementTensor::from_values(oracle::random_tensor(s, rng, -0.7f, 0.7f), {3, 3});
    auto y = sparsify_step(x, st);
    CHECK(y.is_sound());
    emitted += y.values.array().cast<double>();
    truth += x.values.array().cast<double>();
    REQUIRE(st.delta.array().abs().maxCoeff() <= k / 2 + 1e-6f);
    REQUIRE((emitted - truth).abs().maxCoeff() <= k / 2 + slack);
    // Every emitted value is a multiple of k.
    const Eigen::ArrayXf q = y.values.array() / k;
    REQUIRE((q - q.round()).abs().maxCoeff() <= 1e-4f);
  }
}

TEST_CASE("adaptive k follows the EMA of the corrected norm") {
  auto st = SparsifyState::make({1, 1, 2}, 0.1f, 0.5f);
  CHECK(st.k == 0.0f);
  Tensor x(1, 1, 2);
  x.array() << 3.0f, 4.0f;
  reset(st, x);
  CHECK(st.k == doctest::Approx(0.5f));
  CHECK(st.norm_ema == doctest::Approx(5.0f));

  Tensor d(1, 1, 2);
  d.array() << 0.0f, 1.0f;
  sparsify_step(IncrementTensor::from_values(d, {1, 1}), st);
  // corrected = [0, 1], norm 1; ema = 0.5*5 + 0.5*1 = 3; k = 0.3
  CHECK(st.norm_ema == doctest::Approx(3.0f));
  CHECK(st.k == doctest::Approx(0.3f));
  CHECK(st.k == doctest::Approx(st.threshold * st.norm_ema));
}

TEST_CASE("adaptive residual bound uses the k in force at each step") {
  std::mt19937 rng(3);
  const Shape s{3, 7, 7};
  auto st = SparsifyState::make(s, 0.2f);
  reset(st, oracle::random_tensor(s, rng));
  for (int step = 0; step < 300; ++step) {
    const float k_used = st.k;
    sparsify_step(IncrementTensor::from_values(oracle::random_tensor(s, rng, -0.3f, 0.3f), {3, 3}), st);
    REQUIRE(st.delta.array().abs().maxCoeff() <= k_used / 2 * (1 + 1e-5f) + 1e-7f);
  }
}

TEST_CASE("reset then zero increment emits nothing") {
  auto st = SparsifyState::make({1, 2, 2}, 0.1f);
  Tensor x(1, 2, 2);
  x.array().setConstant(1.0f);
  reset(st, x);
  auto y = sparsify_step(IncrementTensor::zeros({1, 2, 2}, {1, 1}), st);
  CHECK(y.mask.count_true() == 0);
  CHECK((st.delta.array() == 0.0f).all());
}

TEST_CASE("reset state equals a freshly constructed and reset state") {
  std::mt19937 rng(4);
  const Shape s{2, 4, 4};
  Tensor x = oracle::random_tensor(s, rng);
  auto used = SparsifyState::make(s, 0.1f);
  reset(used, x);
  for (int i = 0; i < 5; ++i)
    sparsify_step(IncrementTensor::from_values(oracle::random_tensor(s, rng), {2, 2}), used);
  reset(used, x);
  auto fresh = SparsifyState::make(s, 0.1f);
  reset(fresh, x);
  CHECK(used == fresh);
}

TEST_CASE("a large threshold emits far fewer tiles than t_p = 0") {
  std::mt19937 rng(5);
  const Shape s{2, 12, 12};
  std::vector<IncrementTensor> seq;
  for (int i = 0; i < 30; ++i)
    seq.push_back(IncrementTensor::from_values(oracle::random_tiled(s, {3, 3}, 0.5, rng).first, {3, 3}));
  Tensor x0 = oracle::random_tensor(s, rng);
  auto tiles = [&](float tp) {
    auto st = SparsifyState::make(s, tp);
    reset(st, x0);
    std::size_t total = 0;
    for (const auto& x : seq) total += sparsify_step(x, st).mask.count_true();
    return total;
  };
  std::size_t input_tiles = 0;
  for (const auto& x : seq) input_tiles += x.mask.count_true();
  CHECK(tiles(0.0f) == input_tiles);
  CHECK(tiles(0.3f) < input_tiles / 2);
}

TEST_CASE("sparsify errors") {
  auto st = SparsifyState::fixed({1, 2, 2}, 1.0f);
  CHECK_THROWS_AS(sparsify_step(IncrementTensor::zeros({1, 2, 3}, {1, 1}), st), ShapeError);
  CHECK_THROWS_AS(SparsifyState::make({1, 1, 1}, -1.0f), Error);
  CHECK_THROWS_AS(SparsifyState::fixed({1, 1, 1}, -1.0f), Error);
}
