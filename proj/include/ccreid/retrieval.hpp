#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccreid/datagen.hpp"
#include "ccreid/model.hpp"

namespace ccreid {

enum class Polarity : std::uint8_t { Similarity, Difference };

/// P x G scores, row-major. Polarity fixes the ranking direction.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  Polarity polarity = Polarity::Similarity;

  double operator()(std::size_t p, std::size_t g) const { return values[p * cols + g]; }
  double& operator()(std::size_t p, std::size_t g) { return values[p * cols + g]; }
};

struct EvalCost {
  std::size_t backbone_evals = 0;
  std::size_t ccn_evals = 0;
  friend bool operator==(const EvalCost&, const EvalCost&) = default;
};

enum class EvalMode : std::uint8_t { Simplified, Full };

const char* to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& s);

struct RetrievalResult {
  std::vector<double> cmc;  // cmc[k-1] = rate at rank k
  double map = 0;
  EvalCost cost;
  ScoreMatrix scores;
};

/// Cosine similarity of global features. Zero-norm rows are rejected.
ScoreMatrix score_simplified(std::span<const std::vector<double>> query,
                             std::span<const std::vector<double>> gallery);

/// D_pair for every (query, gallery) cell. Adds exactly P*G to cost.ccn_evals.
template <class Real>
ScoreMatrix score_full(const CrossModalNet<Real>& net,
                       std::span<const CommonFeature<Real>> query,
                       std::span<const CommonFeature<Real>> gallery, EvalCost& cost);

/// Gallery order for one query: best first, ties by ascending index.
std::vector<std::size_t> rank_gallery(const ScoreMatrix& scores, std::size_t query);

std::vector<double> cmc_curve(const ScoreMatrix& scores, std::span<const std::uint32_t> query_ids,
                              std::span<const std::uint32_t> gallery_ids);
double mean_ap(const ScoreMatrix& scores, std::span<const std::uint32_t> query_ids,
               std::span<const std::uint32_t> gallery_ids);

/// Embeds every image once (P+G backbone passes) and scores per mode.
template <class Real>
RetrievalResult evaluate(const CrossModalNet<Real>& net, std::span<const IdentitySample> queries,
                         std::span<const IdentitySample> gallery, EvalMode mode);

}  // namespace ccreid
