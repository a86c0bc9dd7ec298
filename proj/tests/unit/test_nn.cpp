#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ccreid/checkpoint.hpp"
#include "ccreid/model.hpp"
#include "ccreid/nn.hpp"
#include "ccreid/rng.hpp"

using namespace ccreid;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ccreid_nn_" + name)).string();
}

}  // namespace

TEST(GlobalAvgPool, Fixtures) {
  Tape<double> tape;
  auto c = global_avg_pool(tape, constant(Tensor<double>({3, 2, 4}, 1.25)));
  for (auto v : c.value().data()) EXPECT_EQ(v, 1.25);
  auto m = global_avg_pool(tape, constant(Tensor<double>({1, 2, 2}, {1, 2, 3, 4})));
  EXPECT_EQ(m.value(), Tensor<double>({1}, {2.5}));

  Tensor<double> r({2, 3, 3});
  SplitMix64 rng(1);
  for (auto& v : r.data()) v = rng.uniform();
  auto a = global_avg_pool(tape, constant(r));
  auto b = reduce(tape, ReduceKind::Mean, constant(r), std::vector<std::size_t>{1, 2});
  EXPECT_EQ(a.value(), b.value());
}

TEST(ParamStore, AliasesShareOneTensor) {
  ParamStore<double> store;
  store.add("a.weight", {2});
  store.alias("b.weight", "a.weight");
  auto w = store.get("b.weight");
  w.mutable_value()[0] = 3;
  EXPECT_EQ(store.get("a.weight").value()[0], 3);
  EXPECT_EQ(store.entries().size(), 1u);
  EXPECT_EQ(store.canonical_name("b.weight"), "a.weight");
  EXPECT_THROW(store.add("a.weight", {1}), std::invalid_argument);
  EXPECT_THROW(store.alias("c", "missing"), std::invalid_argument);
  EXPECT_THROW(store.get("missing"), std::out_of_range);
}

TEST(Sgd, Fixtures) {
  ParamStore<double> store;
  auto p = store.add("p", {1});
  p.mutable_value()[0] = 1.0;
  SgdState<double> sgd{0.1, 0.0, {}};
  {
    Tape<double> tape;
    tape.backward(sum(tape, p));
  }
  sgd_step(store, sgd);
  EXPECT_DOUBLE_EQ(p.value()[0], 0.9);

  store.zero_grad();
  {
    Tape<double> tape;
    tape.backward(sum(tape, scale(tape, p, 0.0)));
  }
  sgd_step(store, sgd);
  EXPECT_DOUBLE_EQ(p.value()[0], 0.9);
}

TEST(Sgd, MomentumRecurrence) {
  ParamStore<double> store;
  auto p = store.add("p", {1});
  SgdState<double> sgd{0.5, 0.9, {}};
  double v = 0, x = 0;
  for (int k = 0; k < 4; ++k) {
    store.zero_grad();
    Tape<double> tape;
    tape.backward(sum(tape, scale(tape, p, 2.0)));
    sgd_step(store, sgd);
    v = 0.9 * v + 2.0;
    x -= 0.5 * v;
    EXPECT_DOUBLE_EQ(p.value()[0], x);
  }
}

TEST(Sgd, MissingGradientNamesParameter) {
  ParamStore<double> store;
  store.add("lonely.weight", {2});
  SgdState<double> sgd;
  try {
    sgd_step(store, sgd);
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("lonely.weight"), std::string::npos);
  }
}

// A weight read by two paths through aliases must receive the summed
// gradient and be updated once. The oracle is an unshared twin whose two
// copies are updated with the manually summed gradient.
TEST(Sgd, SharedParameterMatchesTwinModelOracle) {
  Tensor<double> w0({2, 3});
  SplitMix64 rng(4);
  for (auto& v : w0.data()) v = rng.uniform(-1, 1);
  const Tensor<double> x1({3}, {0.3, -1.2, 0.5}), x2({3}, {1.1, 0.4, -0.7});

  ParamStore<double> shared;
  shared.add("s.weight", {2, 3});
  shared.alias("rgb.weight", "s.weight");
  shared.alias("ir.weight", "s.weight");
  shared.get("s.weight").mutable_value() = w0;
  {
    Tape<double> tape;
    auto a = matvec(tape, shared.get("rgb.weight"), constant(x1), Var<double>());
    auto b = matvec(tape, shared.get("ir.weight"), constant(x2), Var<double>());
    tape.backward(sum(tape, add(tape, mul(tape, a, a), b)));
  }
  SgdState<double> sgd{0.1, 0.9, {}};
  sgd_step(shared, sgd);

  ParamStore<double> twin;
  auto r = twin.add("rgb.weight", {2, 3});
  auto i = twin.add("ir.weight", {2, 3});
  r.mutable_value() = w0;
  i.mutable_value() = w0;
  {
    Tape<double> tape;
    auto a = matvec(tape, r, constant(x1), Var<double>());
    auto b = matvec(tape, i, constant(x2), Var<double>());
    tape.backward(sum(tape, add(tape, mul(tape, a, a), b)));
  }
  Tensor<double> expected = w0;
  for (std::size_t k = 0; k < w0.size(); ++k) expected[k] -= 0.1 * (r.grad()[k] + i.grad()[k]);
  for (std::size_t k = 0; k < w0.size(); ++k) {
    EXPECT_NEAR(shared.get("s.weight").value()[k], expected[k], 1e-15);
  }
}

TEST(Init, DeterministicXavierBounds) {
  auto build = [](ParamStore<double>& s) {
    Conv2dLayer<double>::create(s, "conv", 4, 8, 3, 1, 1);
    AffineLayer<double>::create(s, "fc", 64, 64);
    s.add("norm.gain", {8});
  };
  ParamStore<double> a, b;
  build(a);
  build(b);
  init_params(a, 42);
  init_params(b, 42);
  for (const auto& [name, p] : a.entries()) EXPECT_EQ(p.value(), b.get(name).value()) << name;

  for (auto v : a.get("conv.bias").value().data()) EXPECT_EQ(v, 0.0);
  for (auto v : a.get("fc.bias").value().data()) EXPECT_EQ(v, 0.0);
  for (auto v : a.get("norm.gain").value().data()) EXPECT_EQ(v, 1.0);

  const double conv_bound = std::sqrt(6.0 / (4 * 9 + 8 * 9));
  for (auto v : a.get("conv.weight").value().data()) EXPECT_LE(std::abs(v), conv_bound);

  // Mean of 4096 uniform(-b, b) draws: stddev of the mean is b/sqrt(3)/64.
  const auto fc = a.get("fc.weight").value().data();
  const double bound = std::sqrt(6.0 / 128);
  double mean = 0;
  for (auto v : fc) {
    EXPECT_LE(std::abs(v), bound);
    mean += v;
  }
  mean /= static_cast<double>(fc.size());
  const double stddev = bound / std::sqrt(3.0);
  EXPECT_LT(std::abs(mean), 3 * stddev / 64);
}

TEST(Checkpoint, RoundTripRestoresParametersAliasesAndVelocity) {
  ModelConfig cfg;
  cfg.backbone.stage_channels = {4, 6, 8};
  cfg.backbone.downsample_stages = {1, 2};
  cfg.backbone.shared_from_stage = 1;
  cfg.backbone.input_h = 32;
  cfg.backbone.input_w = 16;
  cfg.num_classes = 5;
  CrossModalNet<float> a(cfg), b(cfg);
  a.initialize(3);
  SgdState<float> sgd{0.05f, 0.9f, {}};
  for (const auto& [name, p] : a.params().entries()) {
    Tensor<float> v(p.shape());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = 0.001f * static_cast<float>(k % 7);
    sgd.velocity.emplace(name, v);
  }
  const auto path = temp_path("roundtrip.ckpt");
  write_checkpoint(path, make_checkpoint(a.params(), &sgd));
  SgdState<float> restored;
  restore_checkpoint(read_checkpoint(path), b.params(), &restored);
  for (const auto& [name, p] : a.params().entries()) {
    EXPECT_EQ(p.value(), b.params().get(name).value()) << name;
    EXPECT_EQ(sgd.velocity.at(name), restored.velocity.at(name)) << name;
  }
  EXPECT_EQ(restored.learning_rate, sgd.learning_rate);
  EXPECT_EQ(restored.momentum, sgd.momentum);
  EXPECT_EQ(a.params().aliases(), b.params().aliases());
  std::filesystem::remove(path);
}

TEST(Checkpoint, ErrorKinds) {
  ParamStore<float> store;
  store.add("w", {3});
  const auto path = temp_path("errors.ckpt");
  write_checkpoint(path, make_checkpoint<float>(store, nullptr));
  std::string bytes;
  {
    std::ifstream is(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  auto expect_kind = [&](const std::string& content, FormatError::Kind kind) {
    {
      std::ofstream os(path, std::ios::binary);
      os << content;
    }
    try {
      read_checkpoint(path);
      FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };
  expect_kind("XKPT" + bytes.substr(4), FormatError::Kind::BadMagic);
  auto versioned = bytes;
  versioned[4] = 7;
  expect_kind(versioned, FormatError::Kind::UnknownVersion);
  expect_kind(bytes.substr(0, bytes.size() - 3), FormatError::Kind::Truncated);

  ParamStore<float> bigger;
  bigger.add("w", {3});
  bigger.add("extra", {2});
  try {
    restore_checkpoint(make_checkpoint<float>(store, nullptr), bigger, static_cast<SgdState<float>*>(nullptr));
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::MissingTensor);
    EXPECT_NE(std::string(e.what()).find("extra"), std::string::npos);
  }
  std::filesystem::remove(path);
}
