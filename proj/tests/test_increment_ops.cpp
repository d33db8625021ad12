#include <random>

#include "doctest.h"
#include "evinc/increment_ops.hpp"
#include "oracles.hpp"

using namespace evinc;

namespace {

IncrementTensor random_inc(Shape s, TileShape tile, double p, std::mt19937& rng) {
  return IncrementTensor::from_values(oracle::random_tiled(s, tile, p, rng).first, tile);
}

std::vector<float> no_bias;

}  // namespace

TEST_CASE("inc_conv2d: all-false mask does no work") {
  ConvFilter f(4, 2, 3, 3);
  f.array().setOnes();
  FlopCounter m;
  auto y = inc_conv2d(IncrementTensor::zeros({2, 8, 8}, {4, 4}), f, {1, 1}, m);
  CHECK(m.performed == 0);
  CHECK(m.dense_equiv == 2ull * 9 * 2 * 4 * 64);
  CHECK(y.mask.count_true() == 0);
  CHECK((y.values.array() == 0.0f).all());
}

TEST_CASE("inc_conv2d: all-true mask costs exactly dense") {
  std::mt19937 rng(1);
  ConvFilter f = oracle::random_filter(4, 4, 3, 3, rng);
  Tensor x = oracle::random_tensor({4, 8, 8}, rng);
  IncrementTensor inc(x, TileMask(x.shape(), {6, 6}, true));
  FlopCounter m;
  ConvFilter f1 = oracle::random_filter(1, 1, 3, 3, rng);
  IncrementTensor inc1(oracle::random_tensor({1, 8, 8}, rng), TileMask({1, 8, 8}, {6, 6}, true));
  inc_conv2d(inc1, f1, {1, 1}, m);
  CHECK(m.performed == 1152);
  CHECK(m.dense_equiv == 1152);

  FlopCounter m4;
  auto y = inc_conv2d(inc, f, {1, 1}, m4);
  CHECK(m4.performed == m4.dense_equiv);
  CHECK(oracle::max_abs_diff(y.values, oracle::conv(x, f, no_bias, 1, 1)) <= 1e-5f);
}

TEST_CASE("inc_conv2d with a single true tile") {
  std::mt19937 rng(2);
  ConvFilter f = oracle::random_filter(3, 2, 3, 3, rng);
  Tensor x(2, 12, 12);
  for (int y = 6; y < 12; ++y)
    for (int z = 0; z < 6; ++z) x(1, y, z) = 1.0f + float(y * z);
  auto inc = IncrementTensor::from_values(x, {6, 6});
  REQUIRE(inc.mask.count_true() == 1);
  FlopCounter m;
  auto out = inc_conv2d(inc, f, {1, 1}, m);
  CHECK(m.performed == oracle::enumerate_conv_flops(inc.mask, f, 1, 1));
  CHECK(oracle::max_abs_diff(out.values, oracle::conv(x, f, no_bias, 1, 1)) <= 1e-4f);
  CHECK(out.is_sound());
  CHECK(oracle::mask_bits(out.mask) == oracle::reachable_output_tiles(inc.mask, f, 1, 1));
}

TEST_CASE("inc_conv2d property sweep: values, FLOPs, masks") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> pick(0, 1 << 20);
  for (int trial = 0; trial < 120; ++trial) {
    const int k = 1 + 2 * (pick(rng) % 3);
    const int stride = 1 + pick(rng) % 2;
    const int pad = pick(rng) % (k / 2 + 1);
    const int ci = 1 + pick(rng) % 3, co = 1 + pick(rng) % 3;
    const Shape s{ci, k + pick(rng) % 20, k + pick(rng) % 20};
    const TileShape tile{1 + pick(rng) % 7, 1 + pick(rng) % 7};
    const double p = (pick(rng) % 100) / 100.0;
    auto inc = random_inc(s, tile, p, rng);
    ConvFilter f = oracle::random_filter(co, ci, k, k, rng);
    FlopCounter m;
    auto y = inc_conv2d(inc, f, {stride, pad}, m);
    auto want = oracle::conv(inc.values, f, no_bias, stride, pad);
    REQUIRE(y.shape() == want.shape());
    CHECK(oracle::max_abs_diff(y.values, want) <= 1e-4f);
    CHECK(m.performed == oracle::enumerate_conv_flops(inc.mask, f, stride, pad));
    CHECK(m.dense_equiv == 2ull * k * k * ci * co * want.height() * want.width());
    CHECK(y.is_sound());
    CHECK(y.mask.tile() == tile);
    CHECK(oracle::mask_bits(y.mask) == oracle::reachable_output_tiles(inc.mask, f, stride, pad));
  }
}

TEST_CASE("inc_conv2d FLOPs are monotone in the mask") {
  std::mt19937 rng(4);
  const Shape s{3, 20, 20};
  ConvFilter f = oracle::random_filter(2, 3, 3, 3, rng);
  for (int trial = 0; trial < 30; ++trial) {
    auto base = random_inc(s, {5, 5}, 0.3, rng);
    auto extra = random_inc(s, {5, 5}, 0.3, rng);
    IncrementTensor sup(base.values, mask_or(base.mask, extra.mask));
    FlopCounter a, b;
    inc_conv2d(base, f, {1, 1}, a);
    inc_conv2d(sup, f, {1, 1}, b);
    CHECK(a.performed <= b.performed);
  }
}

TEST_CASE("inc_conv2d is linear in the increment") {
  std::mt19937 rng(5);
  const Shape s{2, 14, 14};
  ConvFilter f = oracle::random_filter(3, 2, 3, 3, rng);
  Tensor bias_free_a = oracle::random_tensor(s, rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_inc(s, {4, 4}, 0.4, rng);
    auto b = random_inc(s, {4, 4}, 0.4, rng);
    Tensor sum(s, a.values.array() + b.values.array());
    FlopCounter m;
    auto ya = inc_conv2d(a, f, {1, 1}, m), yb = inc_conv2d(b, f, {1, 1}, m);
    auto ys = inc_conv2d(IncrementTensor::from_values(sum, {4, 4}), f, {1, 1}, m);
    Tensor lhs(ys.shape(), ya.values.array() + yb.values.array());
    CHECK(max_abs_diff(lhs, ys.values) <= 1e-5f);
  }
  // Linearity of the full layer: conv(x + d) - conv(x) == conv(d) without bias.
  Eigen::VectorXf bias = Eigen::VectorXf::Constant(3, 0.7f);
  auto d = random_inc(s, {4, 4}, 0.3, rng);
  Tensor xd(s, bias_free_a.array() + d.values.array());
  FlopCounter m;
  auto yd = inc_conv2d(d, f, {1, 1}, m);
  Tensor diff(yd.shape(), dense_conv2d(xd, f, bias, {1, 1}).array() - dense_conv2d(bias_free_a, f, bias, {1, 1}).array());
  CHECK(max_abs_diff(diff, yd.values) <= 1e-5f);
}

TEST_CASE("inc_conv2d shape errors") {
  FlopCounter m;
  CHECK_THROWS_AS(inc_conv2d(IncrementTensor::zeros({2, 8, 8}, {4, 4}), ConvFilter(1, 3, 3, 3), {1, 1}, m), ShapeError);
  CHECK_THROWS_AS(inc_conv2d(IncrementTensor::zeros({1, 2, 2}, {4, 4}), ConvFilter(1, 1, 5, 5), {1, 0}, m), ShapeError);
}

TEST_CASE("inc_linear") {
  std::mt19937 rng(6);
  Eigen::MatrixXf w = Eigen::MatrixXf::Random(5, 12);
  Tensor x = oracle::random_tensor({1, 1, 12}, rng);
  for (int i = 4; i < 8; ++i) x(0, 0, i) = 0.0f;
  auto inc = IncrementTensor::from_values(x, {1, 4});
  FlopCounter m;
  auto y = inc_linear(inc, w, m);
  CHECK(m.dense_equiv == 2 * 5 * 12);
  CHECK(m.performed == 2 * 5 * 8);
  Eigen::VectorXf want = w * Eigen::Map<const Eigen::VectorXf>(x.data(), 12);
  for (int i = 0; i < 5; ++i) CHECK(y.values(0, 0, i) == doctest::Approx(want[i]).epsilon(1e-5));
  CHECK(y.is_sound());
  CHECK_THROWS_AS(inc_linear(inc, Eigen::MatrixXf(5, 11), m), ShapeError);
}

TEST_CASE("inc_add") {
  std::mt19937 rng(7);
  const Shape s{2, 9, 9};
  auto a = random_inc(s, {3, 3}, 0.3, rng), b = random_inc(s, {3, 3}, 0.3, rng);
  auto y = inc_add(a, b);
  CHECK(y.mask == mask_or(a.mask, b.mask));
  CHECK(max_abs_diff(y.values, Tensor(s, a.values.array() + b.values.array())) == 0.0f);
  CHECK_THROWS_AS(inc_add(a, IncrementTensor::zeros({2, 9, 8}, {3, 3})), ShapeError);
  CHECK_THROWS_AS(inc_add(a, IncrementTensor::zeros(s, {2, 2})), ShapeError);
}

TEST_CASE("inc_activation: relu single tile example") {
  AccState st{Tensor(1, 2, 2)};
  st.x_acc.array() << -1.0f, 2.0f, 0.5f, -3.0f;
  Tensor d(1, 2, 2);
  d.array() << 2.0f, -3.0f, 0.0f, 1.0f;
  auto y = inc_activation(IncrementTensor::from_values(d, {2, 2}), st, Activation::relu());
  // relu(acc + d) - relu(acc)
  CHECK(y.values(0, 0, 0) == 1.0f);
  CHECK(y.values(0, 0, 1) == -2.0f);
  CHECK(y.values(0, 1, 0) == 0.0f);
  CHECK(y.values(0, 1, 1) == 0.0f);
  CHECK(st.x_acc(0, 0, 0) == 1.0f);
  CHECK(st.x_acc(0, 1, 1) == -2.0f);
}

TEST_CASE("inc_activation tracks the dense oracle over many steps") {
  std::mt19937 rng(8);
  const Shape s{3, 10, 11};
  for (auto fn : {Activation::relu(), Activation::sigmoid(), Activation::tanh(), Activation::leaky(0.1f)}) {
    Tensor x = oracle::random_tensor(s, rng);
    AccState st{x};
    Tensor y = dense_activation(x, fn);
    for (int k = 0; k < 20; ++k) {
      auto d = random_inc(s, {4, 4}, 0.3, rng);
      auto dy = inc_activation(d, st, fn);
      CHECK(dy.is_sound());
      integrate_inplace(y, dy);
      x.array() += d.values.array();
    }
    CHECK(max_abs_diff(st.x_acc, x) <= 1e-5f);
    CHECK(max_abs_diff(y, dense_activation(x, fn)) <= 1e-4f);
  }
}

TEST_CASE("inc_activation zero increment leaves the state alone") {
  std::mt19937 rng(9);
  Tensor x = oracle::random_tensor({2, 6, 6}, rng);
  AccState st{x};
  auto y = inc_activation(IncrementTensor::zeros(x.shape(), {3, 3}), st, Activation::relu());
  CHECK(y.mask.count_true() == 0);
  CHECK(max_abs_diff(st.x_acc, x) == 0.0f);
}

TEST_CASE("dense_activation matches a scalar relu") {
  std::mt19937 rng(10);
  Tensor x = oracle::random_tensor({2, 5, 7}, rng);
  CHECK(max_abs_diff(dense_activation(x, Activation::relu()), oracle::relu(x)) == 0.0f);
}

TEST_CASE("Activation::parse") {
  CHECK(Activation::parse("relu") == Activation::relu());
  CHECK(Activation::parse("leaky:0.2").alpha == doctest::Approx(0.2));
  CHECK(Activation::parse("identity").kind == Activation::Kind::Identity);
  CHECK_THROWS_AS(Activation::parse("swish"), Error);
  CHECK(Activation::parse(Activation::leaky(0.25f).name()) == Activation::leaky(0.25f));
}

TEST_CASE("inc_mul tracks the product") {
  std::mt19937 rng(11);
  const Shape s{2, 8, 8};
  Tensor a = oracle::random_tensor(s, rng), b = oracle::random_tensor(s, rng);
  AccState sa{a}, sb{b};
  Tensor y = dense_mul(a, b);
  for (int k = 0; k < 25; ++k) {
    auto da = random_inc(s, {3, 3}, 0.25, rng), db = random_inc(s, {3, 3}, 0.25, rng);
    auto dy = inc_mul(da, db, sa, sb);
    CHECK(dy.is_sound());
    integrate_inplace(y, dy);
    a.array() += da.values.array();
    b.array() += db.values.array();
  }
  CHECK(max_abs_diff(y, Tensor(s, a.array() * b.array())) <= 1e-4f);
}

TEST_CASE("inc_mul with one side silent") {
  const Shape s{1, 2, 2};
  Tensor a(s), b(s);
  a.array().setConstant(2.0f);
  b.array().setConstant(3.0f);
  AccState sa{a}, sb{b};
  Tensor d(s);
  d(0, 0, 0) = 1.0f;
  auto y = inc_mul(IncrementTensor::from_values(d, {1, 1}), IncrementTensor::zeros(s, {1, 1}), sa, sb);
  CHECK(y.values(0, 0, 0) == 3.0f);
  CHECK(y.mask.count_true() == 1);
}

TEST_CASE("inc_concat") {
  std::mt19937 rng(12);
  auto a = random_inc({2, 6, 6}, {3, 3}, 0.5, rng), b = random_inc({3, 6, 6}, {3, 3}, 0.5, rng);
  auto y = inc_concat(std::vector<IncrementTensor>{a, b});
  CHECK(y.shape() == Shape{5, 6, 6});
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(y.mask(c, i, j) == (c < 2 ? a.mask(c, i, j) : b.mask(c - 2, i, j)));
  CHECK(y.values(3, 1, 1) == b.values(1, 1, 1));
  CHECK_THROWS_AS(inc_concat(std::vector<IncrementTensor>{a, IncrementTensor::zeros({1, 5, 6}, {3, 3})}), ShapeError);
  CHECK_THROWS_AS(inc_concat(std::vector<IncrementTensor>{}), ShapeError);
}

TEST_CASE("inc_upsample matches the dense oracle") {
  std::mt19937 rng(13);
  for (int f : {2, 4}) {
    for (int trial = 0; trial < 20; ++trial) {
      const Shape s{2, 3 + trial % 5, 4 + trial % 3};
      const TileShape tile{1 + trial % 4, 2 + trial % 3};
      auto x = random_inc(s, tile, 0.3, rng);
      auto n = inc_upsample(x, f, UpsampleMode::Nearest);
      CHECK(oracle::max_abs_diff(n.values, oracle::upsample_nearest(x.values, f)) == 0.0f);
      CHECK(n.is_sound());
      auto b = inc_upsample(x, f, UpsampleMode::Bilinear);
      CHECK(oracle::max_abs_diff(b.values, oracle::upsample_bilinear(x.values, f)) <= 1e-6f);
      CHECK(b.is_sound());
    }
  }
}

TEST_CASE("inc_maxpool tracks the dense oracle") {
  std::mt19937 rng(14);
  const Shape s{2, 12, 12};
  Tensor x = oracle::random_tensor(s, rng);
  AccState st{x};
  Tensor y = oracle::maxpool(x, 2, 2);
  CHECK(max_abs_diff(dense_maxpool(x, 2, 2), y) == 0.0f);
  for (int k = 0; k < 20; ++k) {
    auto d = random_inc(s, {3, 3}, 0.3, rng);
    auto dy = inc_maxpool(d, st, 2, 2);
    CHECK(dy.is_sound());
    integrate_inplace(y, dy);
    x.array() += d.values.array();
  }
  CHECK(max_abs_diff(y, oracle::maxpool(x, 2, 2)) <= 1e-5f);
  CHECK_THROWS_AS(maxpool_shape({1, 1, 1}, 2, 2), ShapeError);
}

TEST_CASE("dense op shape errors") {
  CHECK_THROWS_AS(dense_add(Tensor(1, 2, 2), Tensor(1, 2, 3)), ShapeError);
  CHECK_THROWS_AS(dense_mul(Tensor(1, 2, 2), Tensor(2, 2, 2)), ShapeError);
}
