#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "collafuse/denoiser.hpp"
#include "collafuse/diffusion.hpp"
#include "collafuse/optim.hpp"
#include "collafuse/rng.hpp"
#include "oracles.hpp"

using namespace collafuse;

TEST_CASE("time embedding basics") {
  ArrayX e = time_embedding(5, 32, 100);
  CHECK(e.size() == 32);
  CHECK(e.abs().maxCoeff() <= 1.0);
  ArrayX e2 = time_embedding(5, 32, 100);
  CHECK((e == e2).all());

  for (int dim : {8, 32, 64}) {
    ArrayX lo = time_embedding(1, dim, 10);
    ArrayX hi = time_embedding(10, dim, 10);
    CHECK(std::sqrt((lo - hi).square().sum()) > 0.1 * std::sqrt(static_cast<Scalar>(dim)));
  }

  CHECK_THROWS_AS(time_embedding(1, 7, 10), BadDim);
  CHECK_THROWS_AS(time_embedding(0, 8, 10), TimestepOutOfRange);
  CHECK_THROWS_AS(time_embedding(11, 8, 10), TimestepOutOfRange);
}

TEST_CASE("init is deterministic and label-free models have no label parameters") {
  DenoiserModel a = DenoiserModel::init(Arch::kMlp, {4}, 3, 8, 99);
  DenoiserModel b = DenoiserModel::init(Arch::kMlp, {4}, 3, 8, 99);
  REQUIRE(a.params().size() == b.params().size());
  for (size_t i = 0; i < a.params().size(); ++i)
    CHECK((a.params()[i].tensor.data() == b.params()[i].tensor.data()).all());

  DenoiserModel uncond = DenoiserModel::init(Arch::kMlp, {4}, 0, 8, 99);
  // first layer input width loses exactly the one-hot block
  CHECK(uncond.params()[0].tensor.shape()[0] == 4 + 8);
  CHECK(a.params()[0].tensor.shape()[0] == 4 + 8 + 3);
}

TEST_CASE("mlp parameter count matches the closed-form architecture count") {
  const Index d = 2, e = 8, l = 3, w = 128;
  DenoiserModel m = DenoiserModel::init(Arch::kMlp, {d}, static_cast<int>(l), static_cast<int>(e), 1);
  const Index in = d + e + l;
  const Index expect = (in * w + w) + 2 * (w * w + w) + (w * d + d);
  CHECK(m.param_count() == expect);
}

TEST_CASE("predict keeps shape and is a pure forward") {
  Rng rng(7);
  DenoiserModel m = DenoiserModel::init(Arch::kMlp, {3}, 2, 8, 11);
  Tensor x({4, 3}, rng.normal_array(12));
  std::vector<int> t = {1, 5, 9, 10};
  std::vector<int> y = {0, 1, 1, 0};
  Tensor out1 = m.predict(x, t, y, 10);
  Tensor out2 = m.predict(x, t, y, 10);
  CHECK(same_shape(out1.shape(), x.shape()));
  CHECK((out1.data() == out2.data()).all());

  CHECK_THROWS_AS(m.predict(Tensor({4, 2}, rng.normal_array(8)), t, y, 10), ShapeMismatch);
  CHECK_THROWS_AS(m.predict(x, std::vector<int>{1, 2}, y, 10), ShapeMismatch);
}

TEST_CASE("label handling: required, null-allowed, out of range") {
  Rng rng(8);
  DenoiserModel m = DenoiserModel::init(Arch::kMlp, {3}, 2, 8, 11);
  Tensor x({2, 3}, rng.normal_array(6));
  std::vector<int> t = {1, 2};
  CHECK_THROWS_AS(m.predict(x, t, {}, 10), LabelRequired);
  std::vector<int> null_y = {-1, 0};
  CHECK_THROWS_AS(m.predict(x, t, null_y, 10), LabelRequired);

  m.allow_null_label = true;
  Tensor out = m.predict(x, t, null_y, 10);
  CHECK(same_shape(out.shape(), x.shape()));
  Tensor out_empty = m.predict(x, t, {}, 10);
  CHECK(same_shape(out_empty.shape(), x.shape()));

  std::vector<int> bad = {0, 5};
  CHECK_THROWS_AS(m.predict(x, t, bad, 10), BadShape);
}

TEST_CASE("smallconv shape contract and validation") {
  Rng rng(12);
  DenoiserModel m = DenoiserModel::init(Arch::kSmallConv, {3, 8, 8}, 4, 16, 5);
  Tensor x({2, 3, 8, 8}, rng.normal_array(2 * 3 * 8 * 8));
  std::vector<int> t = {3, 7};
  std::vector<int> y = {1, 2};
  Tensor out = m.predict(x, t, y, 20);
  CHECK(same_shape(out.shape(), x.shape()));

  CHECK_THROWS_AS(DenoiserModel::init(Arch::kSmallConv, {3, 6, 6}, 0, 8, 1), BadShape);
  CHECK_THROWS_AS(DenoiserModel::init(Arch::kSmallConv, {8}, 0, 8, 1), BadShape);
}

TEST_CASE("every parameter receives gradient on a generic batch") {
  Rng rng(23);
  auto check_arch = [&](Arch arch, Shape in_shape) {
    DenoiserModel m = DenoiserModel::init(arch, in_shape, 3, 8, 321);
    Shape bshape = in_shape;
    bshape.insert(bshape.begin(), 4);
    Tensor x(bshape, rng.normal_array(numel(bshape)));
    Tensor target(bshape, rng.normal_array(numel(bshape)));
    std::vector<int> t = {1, 4, 7, 10};
    std::vector<int> y = {0, 1, 2, 0};
    Tape tape;
    Tensor loss = mse_loss(m.predict(x, t, y, 10), target);
    backward(loss);
    for (auto& p : m.params()) {
      REQUIRE_MESSAGE(p.tensor.grad() != nullptr, p.name);
      CHECK_MESSAGE(p.tensor.grad()->abs().maxCoeff() > 1e-12, p.name);
    }
  };
  check_arch(Arch::kMlp, {5});
  check_arch(Arch::kSmallConv, {2, 8, 8});
}

TEST_CASE("fresh models predict near-zero noise") {
  Rng rng(31);
  DenoiserModel m = DenoiserModel::init(Arch::kMlp, {4}, 0, 8, 17);
  Tensor x({8, 4}, rng.normal_array(32));
  std::vector<int> t(8, 3);
  Tensor out = m.predict(x, t, {}, 10);
  CHECK(out.data().abs().maxCoeff() < 0.1);
}

TEST_CASE("500 training steps halve the distance to the analytic predictor") {
  const int T = 50;
  Schedule sched = Schedule::linear(T, 0.01, 0.30);
  const Scalar mu_v = 0.5, var_v = 0.6;
  Rng rng(2718);

  DenoiserModel m = DenoiserModel::init(Arch::kMlp, {2}, 0, 16, 555);
  AdamState opt;
  opt.learning_rate = 1e-3;
  auto params = m.param_ptrs();

  Tensor mu = Tensor::full({2}, mu_v);
  Tensor mu_batch = Tensor::full({64, 2}, mu_v);

  // frozen evaluation set
  const Index eval_n = 64;
  std::vector<int> eval_t(eval_n);
  ArrayX ex(eval_n * 2);
  for (Index i = 0; i < eval_n; ++i) {
    eval_t[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(1, T));
    ex[2 * i] = mu_v + std::sqrt(var_v) * rng.normal();
    ex[2 * i + 1] = mu_v + std::sqrt(var_v) * rng.normal();
  }
  Tensor ex0({eval_n, 2}, ex);
  Tensor eval_eps({eval_n, 2}, rng.normal_array(eval_n * 2));
  Tensor eval_xt = forward_diffuse_rows(ex0, eval_t, eval_eps, sched);
  ArrayX oracle(eval_n * 2);
  for (Index i = 0; i < eval_n; ++i) {
    Tensor row({2}, eval_xt.data().segment(2 * i, 2));
    Tensor o = gaussian_oracle_eps(row, eval_t[static_cast<size_t>(i)], mu, var_v, sched);
    oracle.segment(2 * i, 2) = o.data();
  }
  Tensor oracle_t({eval_n, 2}, oracle);

  auto eval_mse = [&]() {
    Tensor pred = m.predict(eval_xt, eval_t, {}, T);
    return mse_loss(pred, oracle_t).value();
  };

  const Scalar before = eval_mse();
  const Index b = 32;
  for (int step = 0; step < 500; ++step) {
    ArrayX x0(b * 2);
    for (Index i = 0; i < b * 2; ++i) x0[i] = mu_v + std::sqrt(var_v) * rng.normal();
    std::vector<int> t(b);
    for (auto& ti : t) ti = static_cast<int>(rng.uniform_int(1, T));
    Tensor eps({b, 2}, rng.normal_array(b * 2));
    Tensor xt = forward_diffuse_rows(Tensor({b, 2}, x0), t, eps, sched);
    Tape tape;
    Tensor loss = mse_loss(m.predict(xt, t, {}, T), eps);
    backward(loss);
    optimizer_step(params, opt);
  }
  const Scalar after = eval_mse();
  CHECK(after < 0.5 * before);
}

TEST_CASE("conditioning sensitivity after training") {
  const int T = 20;
  Schedule sched = Schedule::linear(T, 0.02, 0.3);
  Rng rng(905);
  DenoiserModel m = DenoiserModel::init(Arch::kMlp, {2}, 2, 8, 77);
  AdamState opt;
  auto params = m.param_ptrs();
  // two labels with strongly separated means
  for (int step = 0; step < 300; ++step) {
    const Index b = 16;
    ArrayX x0(b * 2);
    std::vector<int> y(b), t(b);
    for (Index i = 0; i < b; ++i) {
      y[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, 1));
      const Scalar center = y[static_cast<size_t>(i)] == 0 ? -2.0 : 2.0;
      x0[2 * i] = center + 0.1 * rng.normal();
      x0[2 * i + 1] = center + 0.1 * rng.normal();
      t[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(1, T));
    }
    Tensor eps({b, 2}, rng.normal_array(b * 2));
    Tensor xt = forward_diffuse_rows(Tensor({b, 2}, x0), t, eps, sched);
    Tape tape;
    backward(mse_loss(m.predict(xt, t, y, T), eps));
    optimizer_step(params, opt);
  }
  Tensor x({1, 2}, rng.normal_array(2));
  std::vector<int> t = {10};
  std::vector<int> y0 = {0}, y1 = {1}, y0b = {0};
  Tensor p0 = m.predict(x, t, y0, T);
  Tensor p1 = m.predict(x, t, y1, T);
  Tensor p0b = m.predict(x, t, y0b, T);
  const Scalar across = (p0.data() - p1.data()).abs().mean();
  const Scalar within = (p0.data() - p0b.data()).abs().mean();
  CHECK(within == 0.0);
  CHECK(across > within);
}

TEST_CASE("checkpoints roundtrip byte-exact") {
  DenoiserModel m = DenoiserModel::init(Arch::kSmallConv, {1, 8, 8}, 5, 16, 42);
  m.allow_null_label = true;
  auto bytes = checkpoint_bytes(m);
  DenoiserModel back = checkpoint_from_bytes(bytes);
  auto bytes2 = checkpoint_bytes(back);
  REQUIRE(bytes.size() == bytes2.size());
  CHECK(std::equal(bytes.begin(), bytes.end(), bytes2.begin()));
  CHECK(back.arch() == m.arch());
  CHECK(back.num_labels() == m.num_labels());
  CHECK(back.allow_null_label == m.allow_null_label);

  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(checkpoint_from_bytes(corrupt), BadMagic);
}
