#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ccreid/autograd.hpp"
#include "ccreid/gradcheck.hpp"
#include "ccreid/ops.hpp"
#include "ccreid/rng.hpp"
#include "ccreid/tensor_io.hpp"

using namespace ccreid;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  SplitMix64 rng(seed);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so abs and relu stay off their kinks.
Tensor<double> off_kink_tensor(Shape shape, std::uint64_t seed) {
  auto t = random_tensor(std::move(shape), seed, 0.2, 1.0);
  SplitMix64 rng(seed + 1);
  for (auto& v : t.data())
    if (rng.bernoulli(0.5)) v = -v;
  return t;
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
  Tensor<double> t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(Tensor<double>({2, 0}), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
}

TEST(Elementwise, Fixtures) {
  Tape<double> tape;
  auto a = constant(Tensor<double>({3}, {2, -5, 0}));
  auto y = abs(tape, a);
  EXPECT_EQ(y.value().data()[0], 2);
  EXPECT_EQ(y.value().data()[1], 5);
  EXPECT_EQ(y.value().data()[2], 0);

  auto s = sigmoid(tape, constant(Tensor<double>({1}, {0.0})));
  EXPECT_DOUBLE_EQ(s.value()[0], 0.5);

  auto x = constant(random_tensor({2, 3}, 4));
  auto z = sub(tape, x, x);
  for (auto v : z.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Elementwise, ShapeMismatchNamesBothShapes) {
  Tape<double> tape;
  auto a = constant(Tensor<double>({2, 3}));
  auto b = constant(Tensor<double>({3, 2}));
  try {
    add(tape, a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos);
    EXPECT_NE(msg.find("(3,2)"), std::string::npos);
  }
}

TEST(Elementwise, SubgradientsAtZero) {
  auto x = Var<double>::leaf(Tensor<double>({2}, {0.0, 0.0}), true);
  Tape<double> tape;
  auto y = sum(tape, add(tape, abs(tape, x), relu(tape, x)));
  tape.backward(y);
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
}

TEST(Elementwise, NaNPropagates) {
  Tape<double> tape(false);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto x = constant(Tensor<double>({3}, {nan, -1.0, 2.0}));
  for (auto* op : {&relu<double>, &abs<double>, &sigmoid<double>}) {
    EXPECT_TRUE(std::isnan((*op)(tape, x).value()[0]));
  }
  EXPECT_EQ(relu(tape, x).value()[1], 0.0);
  EXPECT_EQ(relu(tape, x).value()[2], 2.0);
}

TEST(Reduce, Fixtures) {
  Tape<double> tape;
  auto v = constant(Tensor<double>({4}, {1, 2, 3, 4}));
  EXPECT_DOUBLE_EQ(mean(tape, v).value().item(), 2.5);

  auto ones = constant(Tensor<double>({2, 3}, 1.0));
  auto s = reduce(tape, ReduceKind::Sum, ones, std::vector<std::size_t>{0});
  ASSERT_EQ(s.shape(), (Shape{3}));
  for (auto x : s.value().data()) EXPECT_EQ(x, 2.0);

  auto r = random_tensor({4, 4}, 11);
  double acc = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) acc += r[i * 4 + j];
  EXPECT_NEAR(mean(tape, constant(r)).value().item(), acc / 16, 1e-6);

  EXPECT_THROW(reduce(tape, ReduceKind::Sum, ones, std::vector<std::size_t>{2}), ShapeError);
  EXPECT_THROW(reduce(tape, ReduceKind::Sum, ones, std::vector<std::size_t>{0, 0}), ShapeError);
}

TEST(Crop, Fixtures) {
  Tape<double> tape;
  Tensor<double> m({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto c = crop(tape, constant(m), 1, 1, 2, 2);
  EXPECT_EQ(c.value(), Tensor<double>({1, 2, 2}, {5, 6, 8, 9}));
  EXPECT_EQ(crop(tape, constant(m), 0, 0, 3, 3).value(), m);
  try {
    crop(tape, constant(m), 2, 1, 2, 2);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("rows [2,4)"), std::string::npos);
  }
}

TEST(Crop, GradientMassIsConserved) {
  auto x = Var<double>::leaf(random_tensor({2, 5, 4}, 3), true);
  const auto up = random_tensor({2, 3, 2}, 5);
  Tape<double> tape;
  auto c = crop(tape, x, 1, 2, 3, 2);
  auto y = sum(tape, mul(tape, c, constant(up)));
  tape.backward(y);
  double up_sum = 0, grad_sum = 0;
  for (auto v : up.data()) up_sum += v;
  for (auto v : x.grad().data()) grad_sum += v;
  EXPECT_NEAR(grad_sum, up_sum, 1e-12);
}

TEST(PadZero, Fixtures) {
  Tape<double> tape;
  const auto x = random_tensor({2, 3, 4}, 8);
  EXPECT_EQ(pad_zero(tape, constant(x), 0).value(), x);
  auto p = pad_zero(tape, constant(Tensor<double>({1, 1, 1}, 7.0)), 1);
  ASSERT_EQ(p.shape(), (Shape{1, 3, 3}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(p.value()[i], i == 4 ? 7.0 : 0.0);
  auto q = pad_zero(tape, constant(x), 2);
  EXPECT_NEAR(sum(tape, q).value().item(), sum(tape, constant(x)).value().item(), 1e-12);
}

TEST(Matvec, Fixtures) {
  Tape<double> tape;
  auto x = constant(Tensor<double>({3}, {1, -2, 3}));
  Tensor<double> eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1;
  EXPECT_EQ(matvec(tape, constant(eye), x, constant(Tensor<double>({3}))).value(), x.value());
  auto y = matvec(tape, constant(Tensor<double>({1, 2}, {1, 1})),
                  constant(Tensor<double>({2}, {3, 4})), constant(Tensor<double>({1})));
  EXPECT_DOUBLE_EQ(y.value()[0], 7);
  EXPECT_THROW(matvec(tape, constant(eye), constant(Tensor<double>({2})), Var<double>()),
               ShapeError);
}

TEST(Softmax, Fixtures) {
  Tape<double> tape;
  auto u = softmax(tape, constant(Tensor<double>({4}, 1.5)));
  for (auto v : u.value().data()) EXPECT_NEAR(v, 0.25, 1e-12);
  auto p = softmax(tape, constant(Tensor<double>({2}, {0, std::log(3.0)})));
  EXPECT_NEAR(p.value()[0], 0.25, 1e-12);
  EXPECT_NEAR(p.value()[1], 0.75, 1e-12);

  const auto z = random_tensor({6}, 2, -3, 3);
  auto shifted = z;
  for (auto& v : shifted.data()) v += 1000;
  auto a = softmax(tape, constant(z)), b = softmax(tape, constant(shifted));
  double total = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(a.value()[i], b.value()[i], 1e-6);
    EXPECT_GT(a.value()[i], 0);
    total += a.value()[i];
  }
  EXPECT_NEAR(total, 1.0, 1e-6);
  EXPECT_THROW(softmax(tape, constant(Tensor<double>({2}, {0, NAN}))), NumericError);
}

TEST(Backward, Fixtures) {
  const auto x0 = random_tensor({3, 2}, 21);
  auto x = Var<double>::leaf(x0, true);
  {
    Tape<double> tape;
    tape.backward(sum(tape, x));
    for (auto g : x.grad().data()) EXPECT_EQ(g, 1.0);
  }
  x.zero_grad();
  {
    Tape<double> tape;
    tape.backward(sum(tape, mul(tape, x, x)));
    for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2 * x0[i]);
  }
  Tape<double> tape;
  EXPECT_THROW(tape.backward(mul(tape, x, x)), ShapeError);
}

TEST(Backward, AccumulatesUntilZeroed) {
  auto x = Var<double>::leaf(Tensor<double>({2}, {1, 2}), true);
  for (int k = 0; k < 2; ++k) {
    Tape<double> tape;
    tape.backward(sum(tape, x));
  }
  EXPECT_EQ(x.grad()[0], 2.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, NonRecordingTapeKeepsNoGraph) {
  auto x = Var<double>::leaf(Tensor<double>({2}, {1, 2}), true);
  Tape<double> tape(false);
  auto y = sum(tape, mul(tape, x, x));
  EXPECT_DOUBLE_EQ(y.value().item(), 5);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(FiniteDiff, LinearAndAbs) {
  auto f_sum = [](Tape<double>& t, const Var<double>& x) { return sum(t, x); };
  EXPECT_LT(finite_diff_check<double>(f_sum, random_tensor({5}, 1), 1e-6).max_rel_error, 1e-9);

  auto x = random_tensor({8}, 2, 1.1, 3.0);
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
  auto f_abs = [](Tape<double>& t, const Var<double>& v) { return sum(t, abs(t, v)); };
  EXPECT_LT(finite_diff_check<double>(f_abs, x, 1e-6).max_rel_error, 1e-6);
}

TEST(FiniteDiff, ReportsNonFiniteElement) {
  auto f = [](Tape<double>& t, const Var<double>& v) { return sum(t, mul(t, v, v)); };
  Tensor<double> x({2}, {0.0, 1e154});
  try {
    finite_diff_check<double>(f, x, 4e153);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("element 1"), std::string::npos) << e.what();
  }
}

// Every differentiable op, 64-bit, random points away from kinks.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  const double eps = 1e-6;
  const auto w = random_tensor({3, 2, 4}, seed + 100);
  auto weighted = [&](Tape<double>& t, const Var<double>& y) {
    return sum(t, mul(t, y, constant(w)));
  };
  const auto b = random_tensor({3, 2, 4}, seed + 200);
  const std::vector<std::pair<const char*, ScalarFn<double>>> cases = {
      {"add", [&](auto& t, auto& x) { return weighted(t, add(t, x, constant(b))); }},
      {"sub", [&](auto& t, auto& x) { return weighted(t, sub(t, constant(b), x)); }},
      {"mul", [&](auto& t, auto& x) { return weighted(t, mul(t, x, x)); }},
      {"abs", [&](auto& t, auto& x) { return weighted(t, abs(t, x)); }},
      {"relu", [&](auto& t, auto& x) { return weighted(t, relu(t, x)); }},
      {"sigmoid", [&](auto& t, auto& x) { return weighted(t, sigmoid(t, x)); }},
      {"scale", [&](auto& t, auto& x) { return weighted(t, scale(t, x, 0.7)); }},
      {"mean", [&](auto& t, auto& x) {
         auto m = reduce(t, ReduceKind::Mean, mul(t, x, x), std::vector<std::size_t>{1, 2});
         return sum(t, mul(t, m, constant(random_tensor({3}, seed + 7))));
       }},
      {"crop", [&](auto& t, auto& x) {
         return sum(t, mul(t, crop(t, x, 1, 1, 1, 3), constant(random_tensor({3, 1, 3}, seed))));
       }},
      {"pad_zero", [&](auto& t, auto& x) {
         auto p = pad_zero(t, x, 1);
         return sum(t, mul(t, p, constant(random_tensor({3, 4, 6}, seed + 3))));
       }},
      {"reshape", [&](auto& t, auto& x) {
         return sum(t, mul(t, reshape(t, x, Shape{24}), constant(random_tensor({24}, seed + 4))));
       }},
      {"stack", [&](auto& t, auto& x) {
         std::vector<Var<double>> parts{x, mul(t, x, x)};
         return sum(t, mul(t, stack<double>(t, parts), constant(random_tensor({2, 3, 2, 4}, seed))));
       }},
      {"matvec", [&](auto& t, auto& x) {
         auto flat = reshape(t, x, Shape{24});
         auto y = matvec(t, constant(random_tensor({5, 24}, seed + 5)), flat,
                         constant(random_tensor({5}, seed + 6)));
         return sum(t, mul(t, y, y));
       }},
      {"softmax", [&](auto& t, auto& x) {
         auto s = softmax(t, reshape(t, x, Shape{24}));
         return sum(t, mul(t, s, constant(random_tensor({24}, seed + 8))));
       }},
      {"conv2d", [&](auto& t, auto& x) {
         auto y = conv2d(t, x, constant(random_tensor({2, 3, 2, 3}, seed + 9)),
                         constant(random_tensor({2}, seed + 10)), 1, 1);
         return sum(t, mul(t, y, y));
       }},
      {"layer_norm", [&](auto& t, auto& x) {
         auto y = layer_norm(t, x, constant(random_tensor({3}, seed + 11, 0.5, 1.5)),
                             constant(random_tensor({3}, seed + 12)), 1e-5);
         return sum(t, mul(t, y, constant(w)));
       }},
  };
  const auto x = off_kink_tensor({3, 2, 4}, seed);
  for (const auto& [name, f] : cases) {
    const auto r = finite_diff_check<double>(f, x, eps);
    EXPECT_LT(r.max_rel_error, 1e-6) << name << " element " << r.worst_index << " analytic "
                                     << r.analytic << " numeric " << r.numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Values(1, 2, 3));

TEST(OpGradient, ConvWeightBiasAndInput) {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t stride = 1 + trial % 2, pad = trial;
    const auto x0 = random_tensor({2, 5, 4}, 300 + trial);
    auto x = Var<double>::leaf(x0, true);
    auto w = Var<double>::leaf(random_tensor({3, 2, 3, 3}, 400 + trial), true);
    auto b = Var<double>::leaf(random_tensor({3}, 500 + trial), true);
    auto loss = [&](Tape<double>& t) {
      auto y = conv2d(t, x, w, b, stride, pad);
      return sum(t, mul(t, y, y));
    };
    for (auto* p : {&x, &w, &b}) {
      EXPECT_LT(finite_diff_check_param<double>(loss, *p, 1e-6).max_rel_error, 1e-6);
    }
  }
}

TEST(OpGradient, LayerNormGainAndOffset) {
  auto x = Var<double>::leaf(random_tensor({3, 2, 2}, 1), true);
  auto g = Var<double>::leaf(random_tensor({3}, 2, 0.5, 1.5), true);
  auto o = Var<double>::leaf(random_tensor({3}, 3), true);
  const auto w = random_tensor({3, 2, 2}, 4);
  auto loss = [&](Tape<double>& t) {
    auto y = layer_norm(t, x, g, o, 1e-5);
    return sum(t, mul(t, mul(t, y, y), constant(w)));
  };
  for (auto* p : {&x, &g, &o}) {
    EXPECT_LT(finite_diff_check_param<double>(loss, *p, 1e-6).max_rel_error, 1e-6);
  }
}

TEST(LayerNorm, StandardizesWholeMap) {
  Tape<double> tape;
  const auto x = random_tensor({4, 3, 5}, 9, -2, 5);
  auto y = layer_norm(tape, constant(x), constant(Tensor<double>({4}, 1.0)),
                      constant(Tensor<double>({4})), 1e-12);
  double m = 0, v = 0;
  for (auto e : y.value().data()) m += e;
  m /= 60;
  for (auto e : y.value().data()) v += (e - m) * (e - m);
  EXPECT_NEAR(m, 0, 1e-12);
  EXPECT_NEAR(v / 60, 1, 1e-9);
  EXPECT_THROW(layer_norm(tape, constant(x), constant(Tensor<double>({3}, 1.0)),
                          constant(Tensor<double>({4})), 1e-5),
               ShapeError);
}

TEST(TensorIo, RoundTripIsBitExact) {
  Tensor<float> t({2, 3, 4});
  SplitMix64 rng(5);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-10, 10));
  std::stringstream ss;
  ByteWriter w(ss);
  write_tensor(w, t);
  ByteReader r(ss);
  EXPECT_EQ(read_tensor(r), t);
}

TEST(TensorIo, LayoutIsLittleEndian) {
  std::stringstream ss;
  ByteWriter w(ss);
  write_tensor(w, Tensor<float>({2}, {1.0f, -2.0f}));
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 1 + 1 + 4 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "CTNS");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 2);
  EXPECT_EQ(bytes.substr(10, 4), std::string("\x00\x00\x80\x3f", 4));
}

TEST(TensorIo, ErrorKinds) {
  auto expect_kind = [](const std::string& bytes, FormatError::Kind kind) {
    std::stringstream ss(bytes);
    ByteReader r(ss);
    try {
      read_tensor(r);
      FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };
  std::stringstream ss;
  ByteWriter w(ss);
  write_tensor(w, Tensor<float>({3}, {1, 2, 3}));
  const std::string good = ss.str();
  expect_kind("XTNS" + good.substr(4), FormatError::Kind::BadMagic);
  auto bad_version = good;
  bad_version[4] = 9;
  expect_kind(bad_version, FormatError::Kind::UnknownVersion);
  expect_kind(good.substr(0, good.size() - 2), FormatError::Kind::Truncated);
}
