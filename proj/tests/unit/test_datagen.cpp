#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ccreid/datagen.hpp"

using namespace ccreid;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ccreid_test_" + name)).string();
}

double nearest_centroid_accuracy(const std::vector<IdentitySample>& data, Modality query_mod,
                                 Modality centroid_mod, std::size_t fit_per_id) {
  const std::size_t dim = data.front().image.size();
  std::map<std::uint32_t, std::vector<double>> centroids;
  std::map<std::pair<std::uint32_t, Modality>, std::size_t> seen;
  for (const auto& s : data) {
    if (s.modality != centroid_mod || seen[{s.identity, s.modality}]++ >= fit_per_id) continue;
    auto& c = centroids[s.identity];
    c.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) c[i] += s.image[i] / static_cast<double>(fit_per_id);
  }
  seen.clear();
  std::size_t hits = 0, total = 0;
  for (const auto& s : data) {
    if (seen[{s.identity, s.modality}]++ < fit_per_id || s.modality != query_mod) continue;
    double best = 1e300;
    std::uint32_t arg = 0;
    for (const auto& [id, c] : centroids) {
      double d = 0;
      for (std::size_t i = 0; i < dim; ++i) d += (s.image[i] - c[i]) * (s.image[i] - c[i]);
      if (d < best) {
        best = d;
        arg = id;
      }
    }
    hits += arg == s.identity;
    ++total;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

TEST(Genome, DeterministicDistinctAndInRange) {
  EXPECT_EQ(generate_identity(7, 3), generate_identity(7, 3));
  EXPECT_NE(generate_identity(7, 3), generate_identity(8, 3));
  std::set<std::tuple<double, double, double>> keys;
  for (std::uint32_t id = 0; id < 1000; ++id) {
    const auto g = generate_identity(7, id);
    EXPECT_EQ(g.id, id);
    keys.insert({g.base_hue, g.torso_h, g.texture_phase});
    EXPECT_GE(g.head_h, 8); EXPECT_LE(g.head_h, 13);
    EXPECT_GE(g.head_w, 7); EXPECT_LE(g.head_w, 11);
    EXPECT_GE(g.torso_h, 16); EXPECT_LE(g.torso_h, 24);
    EXPECT_GE(g.torso_w, 14); EXPECT_LE(g.torso_w, 24);
    EXPECT_GE(g.leg_w, 4); EXPECT_LE(g.leg_w, 7);
    EXPECT_GE(g.leg_gap, 1); EXPECT_LE(g.leg_gap, 5);
    EXPECT_GE(g.torso_freq, 1.5); EXPECT_LE(g.torso_freq, 4.5);
    EXPECT_GE(g.legs_freq, 1.0); EXPECT_LE(g.legs_freq, 4.0);
    EXPECT_GE(g.base_hue, 0); EXPECT_LT(g.base_hue, 1);
    EXPECT_GE(g.texture_phase, 0); EXPECT_LT(g.texture_phase, 2 * 3.14159266);
  }
  EXPECT_EQ(keys.size(), 1000u);
}

TEST(Render, ShapeRangeAndDeterminism) {
  const auto g = generate_identity(7, 5);
  for (auto m : {Modality::RGB, Modality::IR}) {
    const auto a = render(g, m, nuisance_seed(7, 5, m, 0));
    const auto b = render(g, m, nuisance_seed(7, 5, m, 0));
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.image.shape(), (Shape{3, 64, 32}));
    EXPECT_EQ(a.identity, 5u);
    EXPECT_EQ(a.modality, m);
    for (float v : a.image.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    EXPECT_NE(a.image, render(g, m, nuisance_seed(7, 5, m, 1)).image);
  }
  const auto ir = render(g, Modality::IR, 11);
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 32; ++x) {
      EXPECT_EQ(ir.image.at(0, y, x), ir.image.at(1, y, x));
      EXPECT_EQ(ir.image.at(0, y, x), ir.image.at(2, y, x));
    }
}

TEST(Render, ModalitiesDiffer) {
  for (std::uint32_t id = 0; id < 20; ++id) {
    const auto g = generate_identity(7, id);
    const auto rgb = render(g, Modality::RGB, nuisance_seed(7, id, Modality::RGB, 0));
    const auto ir = render(g, Modality::IR, nuisance_seed(7, id, Modality::IR, 0));
    double gap = 0;
    for (std::size_t i = 0; i < rgb.image.size(); ++i) gap += std::abs(rgb.image[i] - ir.image[i]);
    EXPECT_GT(gap / static_cast<double>(rgb.image.size()), 0.05) << "id " << id;
  }
}

TEST(Dataset, LayoutAndPixelProbe) {
  const auto data = generate_dataset({7, 0, 32, 20});
  ASSERT_EQ(data.size(), 32u * 2 * 20);
  DatasetIndex index(data);
  EXPECT_EQ(index.identities().size(), 32u);
  for (auto id : index.identities()) {
    EXPECT_EQ(index.samples_of(id, Modality::RGB).size(), 20u);
    EXPECT_EQ(index.samples_of(id, Modality::IR).size(), 20u);
  }
  EXPECT_TRUE(index.samples_of(999, Modality::RGB).empty());

  const double chance = 1.0 / 32;
  EXPECT_GT(nearest_centroid_accuracy(data, Modality::RGB, Modality::RGB, 10), 5 * chance);
  EXPECT_GT(nearest_centroid_accuracy(data, Modality::IR, Modality::IR, 10), 5 * chance);
  EXPECT_LT(nearest_centroid_accuracy(data, Modality::RGB, Modality::IR, 10), 2 * chance);
  EXPECT_LT(nearest_centroid_accuracy(data, Modality::IR, Modality::RGB, 10), 2 * chance);
}

TEST(Augment, IdentityMirrorAndCrop) {
  const auto s = render(generate_identity(1, 2), Modality::RGB, 3);
  SplitMix64 rng(4);
  EXPECT_EQ(augment(s, 0, 64, 32, 0.0, rng).image, s.image);
  EXPECT_EQ(mirror(mirror(s.image)), s.image);
  EXPECT_EQ(augment(s, 0, 64, 32, 1.0, rng).image, mirror(s.image));
  EXPECT_EQ(mirror(s.image).at(1, 5, 0), s.image.at(1, 5, 31));

  const auto a = augment(s, 4, 64, 32, 0.5, rng);
  EXPECT_EQ(a.image.shape(), s.image.shape());
  EXPECT_EQ(a.identity, s.identity);
  EXPECT_EQ(a.modality, s.modality);
  EXPECT_THROW(augment(s, 0, 65, 32, 0.0, rng), ShapeError);
}

TEST(Batch, ContractHoldsOverManyDraws) {
  const auto data = generate_dataset({7, 0, 10, 3});
  DatasetIndex index(data);
  SplitMix64 rng(9);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + t % 7, r = t % 4;
    const auto b = make_batch(index, n, r, rng);
    ASSERT_EQ(b.identities.size(), n);
    EXPECT_EQ(std::set<std::uint32_t>(b.identities.begin(), b.identities.end()).size(), n);
    EXPECT_EQ(b.image_count(), 2 * n);
    EXPECT_EQ(b.positives, n);
    EXPECT_EQ(b.negatives, r * n);
    ASSERT_EQ(b.pairs.size(), n + r * n);
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_EQ(data[b.rgb_samples[k]].identity, b.identities[k]);
      EXPECT_EQ(data[b.rgb_samples[k]].modality, Modality::RGB);
      EXPECT_EQ(data[b.ir_samples[k]].identity, b.identities[k]);
      EXPECT_EQ(data[b.ir_samples[k]].modality, Modality::IR);
    }
    std::set<std::pair<std::size_t, std::size_t>> neg;
    for (std::size_t p = 0; p < b.pairs.size(); ++p) {
      const auto& e = b.pairs[p];
      const bool same = b.identities[e.rgb_slot] == b.identities[e.ir_slot];
      EXPECT_EQ(e.label == PairLabel::Same, same);
      EXPECT_EQ(p < n, same);
      if (!same) neg.insert({e.rgb_slot, e.ir_slot});
    }
    if (r * n <= n * (n - 1)) EXPECT_EQ(neg.size(), r * n);
  }
  EXPECT_THROW(make_batch(index, 11, 1, rng), DataError);
  EXPECT_THROW(make_batch(index, 0, 1, rng), DataError);
  EXPECT_THROW(make_batch(index, 1, 1, rng), DataError);
}

TEST(DatasetIo, RoundTripAndErrors) {
  const auto data = generate_dataset({3, 5, 2, 2});
  const auto path = temp_path("ds.bin");
  write_dataset(path, data);
  const auto back = read_dataset(path);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].identity, data[i].identity);
    EXPECT_EQ(back[i].modality, data[i].modality);
    EXPECT_EQ(back[i].image, data[i].image);
  }

  write_dataset(path, std::vector<IdentitySample>{});
  EXPECT_TRUE(read_dataset(path).empty());

  auto expect_kind = [&](const std::string& bytes, FormatError::Kind kind) {
    std::ofstream(path, std::ios::binary) << bytes;
    try {
      read_dataset(path);
      ADD_FAILURE() << "no error for kind " << to_string(kind);
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };
  expect_kind("XXXX", FormatError::Kind::BadMagic);
  expect_kind(std::string("CMDS\x09", 5), FormatError::Kind::UnknownVersion);
  expect_kind(std::string("CMDS\x01\x02\x00\x00\x00", 9), FormatError::Kind::Truncated);
  expect_kind(std::string("CMDS\x01\x01\x00\x00\x00\x00\x00\x00\x00\x05", 14),
              FormatError::Kind::MalformedHeader);
  std::remove(path.c_str());
  EXPECT_THROW(read_dataset(temp_path("does_not_exist")), std::runtime_error);
}
