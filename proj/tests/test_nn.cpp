// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "rhythmkit/nn/adam.hpp"
#include "rhythmkit/nn/checkpoint.hpp"
#include "rhythmkit/nn/gradcheck.hpp"
#include "rhythmkit/nn/gru.hpp"
#include "rhythmkit/nn/layers.hpp"
#include "rhythmkit/nn/tensor.hpp"
#include "rhythmkit/rng.hpp"
#include "rhythmkit/types.hpp"
#include "test_util.hpp"

using namespace rhythmkit;
using nn::Tensor;

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3});
  CHECK(t.numel() == 6);
  for (float v : t.data) CHECK(v == 0.0f);
  CHECK_THROWS_AS(Tensor<float>({2, 0}), ValidationError);
  CHECK_THROWS_AS(Tensor<float>({-1}), ValidationError);
  Tensor<double> d = t.cast<double>();
  CHECK(d.shape == t.shape);
}

TEST_CASE("convolution forward") {
  SUBCASE("1x1 identity kernel reproduces the input") {
    nn::Conv2d<double> conv(1, 1, 1, 1, 1, 1, 0, 0);
    std::vector<nn::ParamRef<double>> params;
    conv.collect_params("conv", params);
    params[0].value->data[0] = 1.0;  // weight
    Tensor<double> x({1, 4, 5});
    Rng rng(3);
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
    const Tensor<double> y = conv.forward(x, false);
    REQUIRE(y.shape == x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-12));
  }
  SUBCASE("3x3 all-ones kernel sums 3x3 patches") {
    nn::Conv2d<double> conv(1, 1, 3, 3, 1, 1, 0, 0);
    std::vector<nn::ParamRef<double>> params;
    conv.collect_params("conv", params);
    params[0].value->fill(1.0);
    Tensor<double> x({1, 5, 5});
    x.fill(1.0);
    const Tensor<double> y = conv.forward(x, false);
    REQUIRE(y.shape == std::vector<int>{1, 3, 3});
    for (double v : y.data) CHECK(v == doctest::Approx(9.0));
  }
  SUBCASE("kernel larger than the padded input rejected") {
    nn::Conv2d<double> conv(1, 1, 7, 7, 1, 1, 0, 0);
    Tensor<double> x({1, 5, 5});
    CHECK_THROWS_AS(conv.forward(x, false), ValidationError);
  }
  SUBCASE("output size follows floor((H+2p-k)/s)+1") {
    nn::Conv2d<double> conv(1, 2, 3, 3, 2, 2, 1, 1);
    CHECK(conv.output_shape({1, 5, 5}) == std::vector<int>{2, 3, 3});
    CHECK(conv.output_shape({1, 8, 6}) == std::vector<int>{2, 4, 3});
    CHECK_THROWS_AS(conv.output_shape({3, 5, 5}), ValidationError);
  }
  SUBCASE("initialization and forward are deterministic under the seed") {
    nn::Conv2d<float> a(2, 3, 3, 3, 1, 1, 1, 1);
    nn::Conv2d<float> b(2, 3, 3, 3, 1, 1, 1, 1);
    Rng ra(17), rb(17);
    a.init(ra);
    b.init(rb);
    Tensor<float> x({2, 4, 4});
    Rng rx(5);
    for (float& v : x.data) v = static_cast<float>(rx.uniform(-1.0, 1.0));
    const Tensor<float> ya = a.forward(x, false);
    const Tensor<float> yb = b.forward(x, false);
    CHECK(ya.data == yb.data);
  }
}

TEST_CASE("gated recurrent unit step") {
  SUBCASE("all-zero parameters and state give a zero step") {
    nn::GruCell<double> cell(2, 3);
    Tensor<double> x({2});
    x.data = {0.7, -1.2};
    Tensor<double> h({3});
    const Tensor<double> out = cell.step(x, h);
    for (double v : out.data) CHECK(v == 0.0);
  }
  SUBCASE("update gate forced shut keeps the previous state") {
    nn::GruCell<double> cell(3, 3);
    Rng rng(8);
    cell.init(rng);
    std::vector<nn::ParamRef<double>> params;
    cell.collect_params("gru", params);
    for (nn::ParamRef<double>& p : params)
      if (p.name == "gru.bz") p.value->fill(-50.0);
    Tensor<double> x({3});
    x.data = {0.4, -0.9, 0.2};
    Tensor<double> h({3});
    h.data = {0.3, -0.8, 0.5};
    const Tensor<double> out = cell.step(x, h);
    for (int i = 0; i < 3; ++i)
      CHECK(out.data[static_cast<std::size_t>(i)] ==
            doctest::Approx(h.data[static_cast<std::size_t>(i)]).epsilon(1e-9));
  }
  SUBCASE("dimension mismatches rejected") {
    nn::GruCell<double> cell(2, 3);
    Tensor<double> x({2});
    Tensor<double> h4({4});
    CHECK_THROWS_AS(cell.step(x, h4), ValidationError);
    Tensor<double> x3({3});
    Tensor<double> h({3});
    CHECK_THROWS_AS(cell.step(x3, h), ValidationError);
  }
  SUBCASE("hidden state stays inside the unit box") {
    nn::GruCell<double> cell(3, 5);
    Rng rng(21);
    cell.init(rng);
    std::vector<Tensor<double>> xs;
    for (int t = 0; t < 50; ++t) {
      Tensor<double> x({3});
      for (double& v : x.data) v = rng.uniform(-3.0, 3.0);
      xs.push_back(std::move(x));
    }
    const std::vector<Tensor<double>> hs = cell.forward_sequence(xs, false);
    for (const Tensor<double>& h : hs)
      for (double v : h.data) CHECK(std::abs(v) <= 1.0 + 1e-12);
  }
}

TEST_CASE("mean absolute error loss") {
  const std::vector<double> pred = {3.0, 5.0, 2.0};
  const std::vector<double> target = {1.0, 5.0, 4.0};
  CHECK(nn::l1_loss(pred, target) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
  const std::vector<double> g = nn::l1_loss_grad(pred, target);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(1.0 / 3.0));
  CHECK(g[1] == 0.0);  // tie uses the zero subgradient
  CHECK(g[2] == doctest::Approx(-1.0 / 3.0));
  CHECK_THROWS_AS(nn::l1_loss<double>({}, {}), ValidationError);
  CHECK_THROWS_AS(nn::l1_loss<double>({1.0}, {1.0, 2.0}), ValidationError);
}

TEST_CASE("rms feature normalization") {
  SUBCASE("output has unit root-mean-square for non-tiny inputs") {
    Tensor<double> x({5});
    x.data = {3.0, -1.0, 4.0, -1.5, 9.2};
    const Tensor<double> y = nn::rms_normalize(x);
    double ms = 0.0;
    for (double v : y.data) ms += v * v;
    CHECK(std::sqrt(ms / 5.0) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("positive rescaling of the input is cancelled") {
    Tensor<float> x({6});
    x.data = {120.0f, 0.0f, 7.25f, -3.5f, 44.0f, 1.0f};
    Tensor<float> big(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) big.data[i] = 1000.0f * x.data[i];
    const Tensor<float> ya = nn::rms_normalize(x);
    const Tensor<float> yb = nn::rms_normalize(big);
    for (std::size_t i = 0; i < x.numel(); ++i)
      CHECK(yb.data[i] == doctest::Approx(ya.data[i]).epsilon(1e-4));
  }
  SUBCASE("zero input stays finite and zero") {
    Tensor<double> x({4});
    const Tensor<double> y = nn::rms_normalize(x);
    for (double v : y.data) CHECK(v == 0.0);
  }
  SUBCASE("backward matches finite differences") {
    Rng rng(8181);
    Tensor<double> x({8});
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
    Tensor<double> gy({8});
    for (double& v : gy.data) v = rng.uniform(-1.0, 1.0);
    const Tensor<double> gx = nn::rms_normalize_backward(x, gy);
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      Tensor<double> xp = x, xm = x;
      xp.data[i] += h;
      xm.data[i] -= h;
      const Tensor<double> yp = nn::rms_normalize(xp);
      const Tensor<double> ym = nn::rms_normalize(xm);
      double fd = 0.0;  // d(gy·y)/dx_i
      for (std::size_t j = 0; j < x.numel(); ++j)
        fd += gy.data[j] * (yp.data[j] - ym.data[j]) / (2.0 * h);
      CHECK(gx.data[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  SUBCASE("shape mismatch and empty input rejected") {
    Tensor<double> x({3}), g({4});
    CHECK_THROWS_AS(nn::rms_normalize_backward(x, g), ValidationError);
    Tensor<double> empty({0});
    CHECK_THROWS_AS(nn::rms_normalize(empty), ValidationError);
  }
}

TEST_CASE("adam optimizer") {
  SUBCASE("zero gradient changes nothing") {
    Tensor<float> p({3});
    p.data = {1.0f, -2.0f, 0.5f};
    const Tensor<float> before = p;
    Tensor<float> g({3});
    nn::AdamState<float> state({3});
    nn::adam_update(p, g, state, 0.1);
    CHECK(p.data == before.data);
    for (float v : state.m.data) CHECK(v == 0.0f);
    for (float v : state.v.data) CHECK(v == 0.0f);
    CHECK(state.t == 1);
  }
  SUBCASE("first step moves by lr times the gradient sign (up to epsilon)") {
    Tensor<double> p({2});
    p.data = {1.0, 1.0};
    Tensor<double> g({2});
    g.data = {0.25, -0.5};
    nn::AdamState<double> state({2});
    nn::adam_update(p, g, state, 0.1);
    CHECK(p.data[0] == doctest::Approx(1.0 - 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-12));
    CHECK(p.data[1] == doctest::Approx(1.0 + 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch rejected") {
    Tensor<float> p({2});
    Tensor<float> g({3});
    nn::AdamState<float> state({2});
    CHECK_THROWS_AS(nn::adam_update(p, g, state, 0.1), ValidationError);
  }
  SUBCASE("updates are deterministic") {
    auto run = [] {
      Tensor<float> p({4});
      p.data = {0.1f, 0.2f, 0.3f, 0.4f};
      Tensor<float> g({4});
      g.data = {0.5f, -0.25f, 0.125f, 0.0f};
      nn::AdamState<float> state({4});
      for (int i = 0; i < 10; ++i) nn::adam_update(p, g, state, 0.01);
      return p.data;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("gradient checker") {
  SUBCASE("quadratic matches analytically") {
    Tensor<double> w({4});
    w.data = {0.3, -1.1, 0.7, 2.0};
    Tensor<double> grad({4});
    std::vector<nn::ParamRef<double>> params = {{"w", &w, &grad}};
    auto loss_only = [&w] {
      double s = 0.0;
      for (double v : w.data) s += v * v;
      return s;
    };
    auto loss_and_grad = [&w, &grad, &loss_only] {
      for (std::size_t i = 0; i < w.numel(); ++i) grad.data[i] = 2.0 * w.data[i];
      return loss_only();
    };
    Rng rng(1);
    const nn::GradCheckResult r = nn::grad_check(params, loss_and_grad, loss_only, 1e-9, rng);
    CHECK(r.pass);
    CHECK(r.checked == 4);
    CHECK(r.unreliable == 0);
    CHECK(r.max_rel_error < 1e-9);
  }
  SUBCASE("a kink is reported unreliable, not failed") {
    Tensor<double> w({1});
    w.data = {0.0};
    Tensor<double> grad({1});
    std::vector<nn::ParamRef<double>> params = {{"w", &w, &grad}};
    auto loss_only = [&w] { return std::abs(w.data[0]); };
    auto loss_and_grad = [&grad, &loss_only] {
      grad.data[0] = 0.0;
      return loss_only();
    };
    Rng rng(1);
    const nn::GradCheckResult r = nn::grad_check(params, loss_and_grad, loss_only, 1e-6, rng);
    CHECK(r.pass);
    CHECK(r.unreliable == 1);
    CHECK(r.checked == 0);
  }
}

namespace {

// Scalar-head chain over a short unit sequence: conv → relu → pool → gru →
// dense, with a smooth squared-error objective so finite differences stay
// reliable away from the relu kinks.
struct ChainHarness {
  nn::Conv2d<double> conv{2, 3, 3, 3, 1, 1, 1, 1};
  nn::ReLU<double> relu;
  nn::GlobalAvgPool<double> pool;
  nn::GruCell<double> gru{3, 4};
  nn::Dense<double> head{4, 1};
  std::vector<Tensor<double>> xs;
  std::vector<double> targets;
  std::vector<nn::ParamRef<double>> params;

  explicit ChainHarness(std::uint64_t seed) {
    Rng rng(seed);
    conv.init(rng);
    gru.init(rng);
    head.init(rng);
    conv.collect_params("conv", params);
    gru.collect_params("gru", params);
    head.collect_params("head", params);
    for (int t = 0; t < 3; ++t) {
      Tensor<double> x({2, 4, 3});
      for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
      xs.push_back(std::move(x));
      targets.push_back(rng.uniform(-1.0, 1.0));
    }
  }

  double run(bool with_grad) {
    const std::size_t units = xs.size();
    std::vector<Tensor<double>> feats;
    feats.reserve(units);
    for (const Tensor<double>& x : xs)
      feats.push_back(pool.forward(relu.forward(conv.forward(x, with_grad), with_grad), with_grad));
    const std::vector<Tensor<double>> hs = gru.forward_sequence(feats, with_grad);
    std::vector<double> preds(units);
    for (std::size_t t = 0; t < units; ++t) preds[t] = head.forward(hs[t], with_grad).data[0];

    double loss = 0.0;
    for (std::size_t t = 0; t < units; ++t) {
      const double d = preds[t] - targets[t];
      loss += d * d;
    }
    loss /= static_cast<double>(units);
    if (!with_grad) return loss;

    std::vector<Tensor<double>> grad_hs(units);
    for (std::size_t t = units; t-- > 0;) {
      Tensor<double> gp({1});
      gp.data[0] = 2.0 * (preds[t] - targets[t]) / static_cast<double>(units);
      grad_hs[t] = head.backward(gp);
    }
    const std::vector<Tensor<double>> grad_feats = gru.backward_sequence(grad_hs);
    for (std::size_t t = units; t-- > 0;)
      conv.backward(relu.backward(pool.backward(grad_feats[t])));
    return loss;
  }
};

}  // namespace

TEST_CASE("full chain gradients agree with finite differences") {
  ChainHarness chain(29);
  auto loss_and_grad = [&chain] {
    for (nn::ParamRef<double>& p : chain.params) p.grad->zero();
    return chain.run(true);
  };
  auto loss_only = [&chain] { return chain.run(false); };
  Rng rng(30);
  const nn::GradCheckResult r = nn::grad_check(chain.params, loss_and_grad, loss_only, 1e-4, rng);
  INFO("worst coordinate: ", r.worst_coordinate, " rel err ", r.max_rel_error);
  CHECK(r.pass);
  CHECK(r.checked > 20);
}

TEST_CASE("parameter checkpoints") {
  testutil::TmpDir dir;
  Tensor<float> w({2, 2});
  w.data = {1.0f, 2.5f, -3.0f, 4.25f};
  Tensor<float> b({2});
  b.data = {0.5f, -0.5f};
  Tensor<float> gw({2, 2}), gb({2});
  std::vector<nn::ParamRef<float>> params = {{"head.weight", &w, &gw}, {"head.bias", &b, &gb}};
  const std::map<std::string, std::string> meta = {{"epochs", "3"}, {"grid", "5x5"}};

  SUBCASE("round-trip preserves names, shapes, values and metadata") {
    const std::string path = dir.file("model.ckpt");
    nn::save_checkpoint(path, params, meta);
    const nn::Checkpoint ck = nn::load_checkpoint(path);
    REQUIRE(ck.params.size() == 2);
    REQUIRE(ck.params.count("head.weight") == 1);
    REQUIRE(ck.params.count("head.bias") == 1);
    CHECK(ck.params.at("head.weight").shape == std::vector<int>{2, 2});
    CHECK(ck.params.at("head.weight").data == w.data);
    CHECK(ck.params.at("head.bias").data == b.data);
    CHECK(ck.meta.at("epochs") == "3");
    CHECK(ck.meta.at("grid") == "5x5");
  }
  SUBCASE("bad magic rejected") {
    const std::string path = dir.file("junk.ckpt");
    testutil::write_text(path, "NOPE this is not a checkpoint");
    CHECK_THROWS_AS(nn::load_checkpoint(path), IoError);
  }
  SUBCASE("truncated payload rejected") {
    const std::string path = dir.file("model.ckpt");
    nn::save_checkpoint(path, params, meta);
    const std::string bytes = testutil::read_bytes(path);
    const std::string cut = dir.file("cut.ckpt");
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(nn::load_checkpoint(cut), IoError);
  }
  SUBCASE("missing file rejected") {
    CHECK_THROWS_AS(nn::load_checkpoint(dir.file("absent.ckpt")), IoError);
  }
}
