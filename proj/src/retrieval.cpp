#include "ccreid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ccreid {

const char* to_string(EvalMode mode) { return mode == EvalMode::Full ? "full" : "simplified"; }

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "full") return EvalMode::Full;
  if (s == "simplified") return EvalMode::Simplified;
  throw std::invalid_argument("unknown evaluation mode '" + s + "' (expected full or simplified)");
}

namespace {

double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> norms(std::span<const std::vector<double>> feats, const char* role,
                          std::size_t dim) {
  std::vector<double> out(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (feats[i].size() != dim) {
      throw ShapeError(std::string("score_simplified: ") + role + " feature " + std::to_string(i) +
                       " has dimension " + std::to_string(feats[i].size()) + ", expected " +
                       std::to_string(dim));
    }
    out[i] = norm(feats[i]);
    if (!(out[i] > 0)) {
      throw std::invalid_argument(std::string("score_simplified: ") + role + " feature " +
                                  std::to_string(i) + " has zero norm");
    }
  }
  return out;
}

void check_ids(const ScoreMatrix& s, std::span<const std::uint32_t> query_ids,
               std::span<const std::uint32_t> gallery_ids) {
  if (query_ids.size() != s.rows || gallery_ids.size() != s.cols) {
    throw std::invalid_argument("retrieval metrics: " + std::to_string(query_ids.size()) + "x" +
                                std::to_string(gallery_ids.size()) + " ids for a " +
                                std::to_string(s.rows) + "x" + std::to_string(s.cols) +
                                " score matrix");
  }
  for (std::size_t p = 0; p < s.rows; ++p) {
    if (std::find(gallery_ids.begin(), gallery_ids.end(), query_ids[p]) == gallery_ids.end()) {
      throw std::invalid_argument("query " + std::to_string(p) + " (identity " +
                                  std::to_string(query_ids[p]) +
                                  ") has no relevant gallery item");
    }
  }
}

}  // namespace

ScoreMatrix score_simplified(std::span<const std::vector<double>> query,
                             std::span<const std::vector<double>> gallery) {
  if (query.empty() || gallery.empty()) throw std::invalid_argument("score_simplified: empty set");
  const std::size_t dim = query[0].size();
  const auto qn = norms(query, "query", dim);
  const auto gn = norms(gallery, "gallery", dim);
  ScoreMatrix s{query.size(), gallery.size(), std::vector<double>(query.size() * gallery.size()),
                Polarity::Similarity};
  for (std::size_t p = 0; p < s.rows; ++p) {
    for (std::size_t g = 0; g < s.cols; ++g) {
      double dot = 0;
      for (std::size_t k = 0; k < dim; ++k) dot += query[p][k] * gallery[g][k];
      s(p, g) = dot / (qn[p] * gn[g]);
    }
  }
  return s;
}

template <class Real>
ScoreMatrix score_full(const CrossModalNet<Real>& net, std::span<const CommonFeature<Real>> query,
                       std::span<const CommonFeature<Real>> gallery, EvalCost& cost) {
  const std::size_t P = query.size(), G = gallery.size();
  ScoreMatrix s{P, G, std::vector<double>(P * G), Polarity::Difference};
  // Kernel sets depend on one image only; sample them once per image.
  const auto& cfg = net.config().sampling;
  std::vector<KernelSet<Real>> kq(P), kg(G);
  {
    Tape<Real> tape(false);
    for (std::size_t p = 0; p < P; ++p) kq[p] = sample_kernels(tape, query[p], cfg);
    for (std::size_t g = 0; g < G; ++g) kg[g] = sample_kernels(tape, gallery[g], cfg);
  }
  const auto cells = static_cast<std::ptrdiff_t>(P * G);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t c = 0; c < cells; ++c) {
    const auto p = static_cast<std::size_t>(c) / G, g = static_cast<std::size_t>(c) % G;
    Tape<Real> tape(false);
    // Gallery and query take the RGB/IR roles by modality.
    const bool query_is_rgb = query[p].modality == Modality::RGB;
    const auto& fr = query_is_rgb ? query[p] : gallery[g];
    const auto& kr = query_is_rgb ? kq[p] : kg[g];
    const auto& fi = query_is_rgb ? gallery[g] : query[p];
    const auto& ki = query_is_rgb ? kg[g] : kq[p];
    const auto score = score_sampled_pair(tape, fr, kr, fi, ki, net.head());
    s.values[static_cast<std::size_t>(c)] = static_cast<double>(score.d_pair.value().item());
  }
  cost.ccn_evals += P * G;
  return s;
}

std::vector<std::size_t> rank_gallery(const ScoreMatrix& scores, std::size_t query) {
  std::vector<std::size_t> order(scores.cols);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool higher_first = scores.polarity == Polarity::Similarity;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores(query, a), sb = scores(query, b);
    return higher_first ? sa > sb : sa < sb;
  });
  return order;
}

std::vector<double> cmc_curve(const ScoreMatrix& scores, std::span<const std::uint32_t> query_ids,
                              std::span<const std::uint32_t> gallery_ids) {
  check_ids(scores, query_ids, gallery_ids);
  std::vector<double> hits(scores.cols, 0.0);
  for (std::size_t p = 0; p < scores.rows; ++p) {
    const auto order = rank_gallery(scores, p);
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (gallery_ids[order[k]] == query_ids[p]) {
        hits[k] += 1;
        break;
      }
    }
  }
  std::vector<double> cmc(scores.cols);
  double acc = 0;
  for (std::size_t k = 0; k < cmc.size(); ++k) {
    acc += hits[k];
    cmc[k] = acc / static_cast<double>(scores.rows);
  }
  return cmc;
}

double mean_ap(const ScoreMatrix& scores, std::span<const std::uint32_t> query_ids,
               std::span<const std::uint32_t> gallery_ids) {
  check_ids(scores, query_ids, gallery_ids);
  double total = 0;
  for (std::size_t p = 0; p < scores.rows; ++p) {
    const auto order = rank_gallery(scores, p);
    double found = 0, ap = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (gallery_ids[order[k]] == query_ids[p]) {
        found += 1;
        ap += found / static_cast<double>(k + 1);
      }
    }
    total += ap / found;
  }
  return total / static_cast<double>(scores.rows);
}

template <class Real>
RetrievalResult evaluate(const CrossModalNet<Real>& net, std::span<const IdentitySample> queries,
                         std::span<const IdentitySample> gallery, EvalMode mode) {
  if (queries.empty() || gallery.empty()) throw std::invalid_argument("evaluate: empty query or gallery set");
  const Modality qm = queries[0].modality;
  for (const auto& q : queries) {
    if (q.modality != qm) throw std::invalid_argument("evaluate: queries mix modalities");
  }
  for (const auto& g : gallery) {
    if (g.modality == qm) {
      throw std::invalid_argument("evaluate: gallery shares the query modality " +
                                  std::string(to_string(qm)));
    }
  }

  const std::size_t P = queries.size(), G = gallery.size();
  std::vector<CommonFeature<Real>> feats(P + G);
  const auto n = static_cast<std::ptrdiff_t>(P + G);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& sample = k < P ? queries[k] : gallery[k - P];
    Tape<Real> tape(false);
    feats[k] = net.embed(tape, sample.image.template cast<Real>(), sample.modality);
  }

  RetrievalResult result;
  result.cost.backbone_evals = P + G;
  std::span<const CommonFeature<Real>> fq(feats.data(), P), fg(feats.data() + P, G);
  if (mode == EvalMode::Simplified) {
    auto globals = [](std::span<const CommonFeature<Real>> fs) {
      std::vector<std::vector<double>> out;
      Tape<Real> tape(false);
      for (const auto& f : fs) {
        const auto g = global_feature(tape, f).value();
        out.emplace_back(g.data().begin(), g.data().end());
      }
      return out;
    };
    const auto gq = globals(fq), gg = globals(fg);
    result.scores = score_simplified(gq, gg);
  } else {
    result.scores = score_full(net, fq, fg, result.cost);
  }

  std::vector<std::uint32_t> qid(P), gid(G);
  for (std::size_t p = 0; p < P; ++p) qid[p] = queries[p].identity;
  for (std::size_t g = 0; g < G; ++g) gid[g] = gallery[g].identity;
  result.cmc = cmc_curve(result.scores, qid, gid);
  result.map = mean_ap(result.scores, qid, gid);
  return result;
}

template ScoreMatrix score_full<float>(const CrossModalNet<float>&,
                                       std::span<const CommonFeature<float>>,
                                       std::span<const CommonFeature<float>>, EvalCost&);
template ScoreMatrix score_full<double>(const CrossModalNet<double>&,
                                        std::span<const CommonFeature<double>>,
                                        std::span<const CommonFeature<double>>, EvalCost&);
template RetrievalResult evaluate<float>(const CrossModalNet<float>&,
                                         std::span<const IdentitySample>,
                                         std::span<const IdentitySample>, EvalMode);
template RetrievalResult evaluate<double>(const CrossModalNet<double>&,
                                          std::span<const IdentitySample>,
                                          std::span<const IdentitySample>, EvalMode);

}  // namespace ccreid
