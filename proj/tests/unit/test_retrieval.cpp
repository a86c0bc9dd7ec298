#include <gtest/gtest.h>

#include <cmath>

#include "ccreid/retrieval.hpp"
#include "ccreid/trainer.hpp"
#include "oracles.hpp"

using namespace ccreid;

namespace {

ScoreMatrix matrix(const std::vector<std::vector<double>>& rows, Polarity pol) {
  ScoreMatrix s{rows.size(), rows[0].size(), {}, pol};
  for (const auto& r : rows) s.values.insert(s.values.end(), r.begin(), r.end());
  return s;
}

std::vector<IdentitySample> tiny_samples(std::size_t count, Modality m, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<IdentitySample> out;
  for (std::size_t i = 0; i < count; ++i) {
    IdentitySample s{Tensor<float>({3, 8, 6}), static_cast<std::uint32_t>(i % 3), m};
    for (auto& v : s.image.data()) v = static_cast<float>(rng.uniform());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Cosine, Fixtures) {
  std::vector<std::vector<double>> q{{1, 0}, {1, 1}}, g{{2, 0}, {0, 3}, {-1, 0}};
  const auto s = score_simplified(q, g);
  EXPECT_EQ(s.polarity, Polarity::Similarity);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(s(0, 2), -1.0);
  EXPECT_NEAR(s(1, 0), 1.0 / std::sqrt(2.0), 1e-15);

  std::vector<std::vector<double>> scaled = g;
  for (auto& v : scaled[1]) v *= 5;
  const auto s5 = score_simplified(q, scaled);
  for (std::size_t p = 0; p < 2; ++p) EXPECT_DOUBLE_EQ(s5(p, 1), s(p, 1));
  EXPECT_DOUBLE_EQ(score_simplified(q, q)(1, 1), 1.0);

  std::vector<std::vector<double>> zero{{0, 0}};
  EXPECT_THROW(score_simplified(zero, g), std::invalid_argument);
  EXPECT_THROW(score_simplified(q, zero), std::invalid_argument);
  std::vector<std::vector<double>> wide{{1, 2, 3}};
  EXPECT_THROW(score_simplified(wide, g), ShapeError);
}

TEST(Metrics, Fixtures) {
  const std::vector<std::uint32_t> qid{7}, gid{7, 1, 7, 2};
  auto s = matrix({{0.9, 0.8, 0.7, 0.1}}, Polarity::Similarity);
  EXPECT_EQ(rank_gallery(s, 0), (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_NEAR(mean_ap(s, qid, gid), 5.0 / 6.0, 1e-15);
  EXPECT_EQ(cmc_curve(s, qid, gid), (std::vector<double>{1, 1, 1, 1}));

  auto d = matrix({{0.5, 0.1, 0.9, 0.2}}, Polarity::Difference);
  EXPECT_EQ(rank_gallery(d, 0), (std::vector<std::size_t>{1, 3, 0, 2}));
  EXPECT_EQ(cmc_curve(d, qid, gid), (std::vector<double>{0, 0, 1, 1}));
  EXPECT_NEAR(mean_ap(d, qid, gid), (1.0 / 3 + 2.0 / 4) / 2, 1e-15);

  // 2x3: first correct matches at ranks 1 and 2.
  auto two = matrix({{0.9, 0.2, 0.1}, {0.8, 0.7, 0.3}}, Polarity::Similarity);
  const std::vector<std::uint32_t> q2{1, 2}, g2{1, 2, 3};
  EXPECT_EQ(cmc_curve(two, q2, g2), (std::vector<double>{0.5, 1.0, 1.0}));
  EXPECT_NEAR(mean_ap(two, q2, g2), 0.75, 1e-15);
  auto perfect = matrix({{0.9, 0.8, 0.1}}, Polarity::Similarity);
  EXPECT_DOUBLE_EQ(mean_ap(perfect, std::vector<std::uint32_t>{4}, std::vector<std::uint32_t>{4, 4, 5}), 1.0);

  auto ties = matrix({{0.5, 0.5, 0.5, 0.5}}, Polarity::Similarity);
  EXPECT_EQ(rank_gallery(ties, 0), (std::vector<std::size_t>{0, 1, 2, 3}));

  EXPECT_THROW(cmc_curve(s, std::vector<std::uint32_t>{9}, gid), std::invalid_argument);
  EXPECT_THROW(mean_ap(s, qid, std::vector<std::uint32_t>{7, 1}), std::invalid_argument);
}

TEST(Metrics, MatchBruteForceOracle) {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t P = 6, G = 8;
    std::vector<std::vector<double>> rows(P, std::vector<double>(G));
    for (auto& r : rows)
      for (auto& v : r) v = static_cast<double>(rng.below(5));  // frequent ties
    std::vector<std::uint32_t> gid(G), qid(P);
    for (auto& g : gid) g = static_cast<std::uint32_t>(rng.below(4));
    for (auto& q : qid) q = gid[rng.below(G)];
    for (auto pol : {Polarity::Similarity, Polarity::Difference}) {
      const bool higher = pol == Polarity::Similarity;
      const auto s = matrix(rows, pol);
      const auto cmc = cmc_curve(s, qid, gid);
      const auto ref = oracle::cmc(rows, higher, qid, gid);
      for (std::size_t k = 0; k < G; ++k) EXPECT_NEAR(cmc[k], ref[k], 1e-12);
      EXPECT_NEAR(mean_ap(s, qid, gid), oracle::mean_ap(rows, higher, qid, gid), 1e-12);
    }
  }
}

TEST(Metrics, InvariantUnderStrictlyMonotoneTransforms) {
  SplitMix64 rng(13);
  std::vector<std::vector<double>> rows(5, std::vector<double>(7));
  for (auto& r : rows)
    for (auto& v : r) v = rng.uniform(0.01, 1);
  std::vector<std::uint32_t> gid{0, 1, 2, 3, 4, 0, 1}, qid{0, 1, 2, 3, 4};
  const auto base = matrix(rows, Polarity::Similarity);
  auto logs = rows, flipped = rows;
  for (auto& r : logs)
    for (auto& v : r) v = 3 * std::log(v) + 1;
  for (auto& r : flipped)
    for (auto& v : r) v = -v;
  for (const auto& s : {matrix(logs, Polarity::Similarity), matrix(flipped, Polarity::Difference)}) {
    EXPECT_EQ(cmc_curve(s, qid, gid), cmc_curve(base, qid, gid));
    EXPECT_DOUBLE_EQ(mean_ap(s, qid, gid), mean_ap(base, qid, gid));
  }
}

TEST(Evaluate, CostsAndFullScoresMatchPairwiseScoring) {
  CrossModalNet<float> net(tiny_model_config());
  net.initialize(5);
  const auto q = tiny_samples(4, Modality::IR, 1), g = tiny_samples(5, Modality::RGB, 2);

  const auto simp = evaluate<float>(net, q, g, EvalMode::Simplified);
  EXPECT_EQ(simp.cost, (EvalCost{9, 0}));
  EXPECT_EQ(simp.scores.polarity, Polarity::Similarity);
  EXPECT_EQ(simp.cmc.size(), 5u);

  const auto full = evaluate<float>(net, q, g, EvalMode::Full);
  EXPECT_EQ(full.cost, (EvalCost{9, 20}));
  EXPECT_EQ(full.scores.polarity, Polarity::Difference);
  for (std::size_t p = 0; p < q.size(); ++p)
    for (std::size_t j = 0; j < g.size(); ++j) {
      Tape<float> tape(false);
      const auto fi = net.embed(tape, q[p].image, Modality::IR);
      const auto fr = net.embed(tape, g[j].image, Modality::RGB);
      EXPECT_FLOAT_EQ(static_cast<float>(full.scores(p, j)), net.score(tape, fr, fi).d_pair.value().item());
      EXPECT_GT(full.scores(p, j), 0.0);
      EXPECT_LT(full.scores(p, j), 1.0);
    }

  EXPECT_THROW(evaluate<float>(net, q, q, EvalMode::Full), std::invalid_argument);
  EXPECT_EQ(parse_eval_mode("full"), EvalMode::Full);
  EXPECT_EQ(parse_eval_mode("simplified"), EvalMode::Simplified);
  EXPECT_THROW(parse_eval_mode("fast"), std::invalid_argument);
}
