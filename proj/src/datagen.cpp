#include "ccreid/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "ccreid/tensor_io.hpp"

namespace ccreid {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kMaxShift = 3;
constexpr double kTop = 3.0;
constexpr double kFeetRow = 61.0;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (auto& ch : rgb) ch += m;
  return rgb;
}

double gaussian(SplitMix64& rng) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

// Squared-off sine in [0, 1].
double stripe(double phase) { return 0.5 + 0.5 * std::tanh(3.0 * std::sin(phase)); }

enum class Material { Background, Head, Torso, Legs };

struct Hit {
  Material material = Material::Background;
  double texture = 0;  // pattern value in [0, 1]
};

Hit locate(const IdentityGenome& g, double px, double py) {
  const double cx = kImageWidth / 2.0;
  const double head_cy = kTop + g.head_h / 2.0;
  const double hx = (px - cx) / (g.head_w / 2.0);
  const double hy = (py - head_cy) / (g.head_h / 2.0);
  if (hx * hx + hy * hy <= 1.0) return {Material::Head, 0};

  const double torso_top = kTop + g.head_h + 1.0;
  const double torso_left = cx - g.torso_w / 2.0;
  if (py >= torso_top && py < torso_top + g.torso_h && std::abs(px - cx) < g.torso_w / 2.0) {
    const double u = (py - torso_top) / g.torso_h;
    const double v = (px - torso_left) / g.torso_w;
    double t = 0;
    switch (g.torso_pattern) {
      case Pattern::HorizontalStripes: t = stripe(kTwoPi * g.torso_freq * u + g.texture_phase); break;
      case Pattern::VerticalStripes: t = stripe(kTwoPi * g.torso_freq * v + g.texture_phase); break;
      case Pattern::Checker:
        t = 0.5 + 0.5 * std::tanh(3.0 * std::sin(kTwoPi * g.torso_freq * u + g.texture_phase) *
                                  std::sin(kTwoPi * g.torso_freq * v));
        break;
    }
    return {Material::Torso, t};
  }

  const double legs_top = torso_top + g.torso_h;
  const double off = std::abs(px - cx);
  if (py >= legs_top && py < kFeetRow && off >= g.leg_gap / 2.0 &&
      off < g.leg_gap / 2.0 + g.leg_w) {
    const double u = (py - legs_top) / (kFeetRow - legs_top);
    return {Material::Legs, stripe(kTwoPi * g.legs_freq * u + 0.5 * g.texture_phase)};
  }
  return {};
}

}  // namespace

IdentityGenome generate_identity(std::uint64_t global_seed, std::uint32_t id) {
  SplitMix64 rng(global_seed ^ id);
  IdentityGenome g;
  g.id = id;
  g.head_h = rng.uniform(8, 13);
  g.head_w = rng.uniform(7, 11);
  g.torso_h = rng.uniform(16, 24);
  g.torso_w = rng.uniform(14, 24);
  g.leg_w = rng.uniform(4, 7);
  g.leg_gap = rng.uniform(1, 5);
  g.torso_freq = rng.uniform(1.5, 4.5);
  g.legs_freq = rng.uniform(1.0, 4.0);
  g.base_hue = rng.uniform();
  g.texture_phase = rng.uniform(0, kTwoPi);
  g.torso_pattern = static_cast<Pattern>(rng.below(3));
  return g;
}

std::uint64_t nuisance_seed(std::uint64_t global_seed, std::uint32_t id, Modality modality,
                            std::uint32_t index) {
  std::uint64_t s = mix_seed(global_seed, 0x6e756973616e6365ULL);  // "nuisance"
  s = mix_seed(s, id);
  s = mix_seed(s, static_cast<std::uint64_t>(modality));
  return mix_seed(s, index);
}

IdentitySample render(const IdentityGenome& genome, Modality modality, std::uint64_t nuisance) {
  SplitMix64 rng(nuisance);
  const int shift_x = static_cast<int>(rng.below(2 * kMaxShift + 1)) - kMaxShift;
  const int shift_y = static_cast<int>(rng.below(2 * kMaxShift + 1)) - kMaxShift;
  const double brightness = rng.uniform(0.9, 1.1);

  std::array<double, 3> background{};
  if (modality == Modality::RGB) {
    for (auto& c : background) c = 0.80 + rng.uniform(-0.05, 0.05);
  } else {
    background.fill(0.12 + rng.uniform(-0.04, 0.04));
  }
  const double noise_sigma = modality == Modality::RGB ? 0.015 : 0.04;
  const auto skin = std::array<double, 3>{0.86, 0.68, 0.55};

  IdentitySample out;
  out.identity = genome.id;
  out.modality = modality;
  out.image = Tensor<float>({kImageChannels, kImageHeight, kImageWidth});

  for (std::size_t y = 0; y < kImageHeight; ++y) {
    for (std::size_t x = 0; x < kImageWidth; ++x) {
      const double px = static_cast<double>(x) + 0.5 - shift_x;
      const double py = static_cast<double>(y) + 0.5 - shift_y;
      const Hit hit = locate(genome, px, py);
      std::array<double, 3> value{};
      if (modality == Modality::RGB) {
        switch (hit.material) {
          case Material::Background: value = background; break;
          case Material::Head: value = skin; break;
          case Material::Torso:
            value = hsv_to_rgb(genome.base_hue, 0.75, 0.25 + 0.6 * hit.texture);
            break;
          case Material::Legs:
            value = hsv_to_rgb(genome.base_hue + 0.37, 0.6, 0.2 + 0.5 * hit.texture);
            break;
        }
        for (auto& c : value) c = c * brightness + noise_sigma * gaussian(rng);
      } else {
        double v = background[0];
        switch (hit.material) {
          case Material::Background: break;
          case Material::Head: v = 0.92; break;
          case Material::Torso: v = 0.45 + 0.4 * hit.texture; break;
          case Material::Legs: v = 0.35 + 0.4 * hit.texture; break;
        }
        v = v * brightness + noise_sigma * gaussian(rng);
        value.fill(v);
      }
      for (std::size_t c = 0; c < kImageChannels; ++c) {
        out.image.at(c, y, x) = static_cast<float>(std::clamp(value[c], 0.0, 1.0));
      }
    }
  }
  return out;
}

std::vector<IdentitySample> generate_dataset(const DatasetSpec& spec) {
  std::vector<IdentitySample> samples;
  samples.reserve(static_cast<std::size_t>(spec.ids) * spec.per_modality * 2);
  for (std::uint32_t k = 0; k < spec.ids; ++k) {
    const std::uint32_t id = spec.first_id + k;
    const auto genome = generate_identity(spec.seed, id);
    for (auto m : {Modality::RGB, Modality::IR}) {
      for (std::uint32_t i = 0; i < spec.per_modality; ++i) {
        samples.push_back(render(genome, m, nuisance_seed(spec.seed, id, m, i)));
      }
    }
  }
  return samples;
}

Tensor<float> mirror(const Tensor<float>& image) {
  if (image.rank() != 3) throw ShapeError("mirror: expected (C,H,W), got " + shape_string(image.shape()));
  Tensor<float> out(image.shape());
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) out.at(c, y, x) = image.at(c, y, W - 1 - x);
  return out;
}

IdentitySample augment(const IdentitySample& x, std::size_t pad, std::size_t out_h,
                       std::size_t out_w, double flip_prob, SplitMix64& rng) {
  const auto& img = x.image;
  if (img.rank() != 3) throw ShapeError("augment: expected (C,H,W), got " + shape_string(img.shape()));
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const std::size_t ph = H + 2 * pad, pw = W + 2 * pad;
  if (out_h == 0 || out_w == 0 || out_h > ph || out_w > pw) {
    throw ShapeError("augment: crop " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " larger than padded image " + std::to_string(ph) + "x" + std::to_string(pw));
  }
  const std::size_t top = static_cast<std::size_t>(rng.below(ph - out_h + 1));
  const std::size_t left = static_cast<std::size_t>(rng.below(pw - out_w + 1));
  const bool flip = rng.bernoulli(flip_prob);

  IdentitySample out{Tensor<float>({C, out_h, out_w}), x.identity, x.modality};
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto sy = static_cast<std::ptrdiff_t>(top + y) - static_cast<std::ptrdiff_t>(pad);
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const auto sx = static_cast<std::ptrdiff_t>(left + xx) - static_cast<std::ptrdiff_t>(pad);
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
        out.image.at(c, y, xx) = img.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
      }
    }
  }
  if (flip) out.image = mirror(out.image);
  return out;
}

DatasetIndex::DatasetIndex(std::span<const IdentitySample> samples) : count_(samples.size()) {
  std::set<std::uint32_t> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    ids.insert(s.identity);
    (s.modality == Modality::RGB ? rgb_ : ir_)[s.identity].push_back(i);
  }
  ids_.assign(ids.begin(), ids.end());
}

const std::vector<std::size_t>& DatasetIndex::samples_of(std::uint32_t id, Modality m) const {
  static const std::vector<std::size_t> kNone;
  const auto& table = m == Modality::RGB ? rgb_ : ir_;
  auto it = table.find(id);
  return it == table.end() ? kNone : it->second;
}

PairBatch make_batch(const DatasetIndex& index, std::size_t n, std::size_t r, SplitMix64& rng) {
  if (n == 0) throw DataError("make_batch: N must be positive");
  if (n < 2 && r > 0) throw DataError("make_batch: negative pairs need at least 2 identities");
  std::vector<std::uint32_t> usable;
  for (auto id : index.identities()) {
    if (!index.samples_of(id, Modality::RGB).empty() && !index.samples_of(id, Modality::IR).empty()) {
      usable.push_back(id);
    }
  }
  if (usable.size() < n) {
    throw DataError("make_batch: need " + std::to_string(n) +
                    " identities with both modalities, dataset has " +
                    std::to_string(usable.size()));
  }

  // Partial Fisher-Yates for N distinct identities.
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(usable.size() - k));
    std::swap(usable[k], usable[j]);
  }

  PairBatch batch;
  for (std::size_t k = 0; k < n; ++k) {
    const auto id = usable[k];
    const auto& rgb = index.samples_of(id, Modality::RGB);
    const auto& ir = index.samples_of(id, Modality::IR);
    batch.identities.push_back(id);
    batch.rgb_samples.push_back(rgb[rng.below(rgb.size())]);
    batch.ir_samples.push_back(ir[rng.below(ir.size())]);
    batch.pairs.push_back({k, k, PairLabel::Same});
  }
  batch.positives = n;

  const std::size_t wanted = r * n;
  const std::size_t pool = n * (n - 1);
  std::set<std::pair<std::size_t, std::size_t>> used;
  while (batch.negatives < wanted) {
    const std::size_t a = static_cast<std::size_t>(rng.below(n));
    std::size_t b = static_cast<std::size_t>(rng.below(n - 1));
    if (b >= a) ++b;
    if (used.size() < pool && !used.insert({a, b}).second) continue;
    batch.pairs.push_back({a, b, PairLabel::Different});
    ++batch.negatives;
  }
  return batch;
}

void write_dataset(const std::string& path, std::span<const IdentitySample> samples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  ByteWriter w(os);
  w.bytes("CMDS");
  w.u8(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    w.u32(s.identity);
    w.u8(static_cast<std::uint8_t>(s.modality));
    write_tensor(w, s.image);
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<IdentitySample> read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  ByteReader r(is);
  r.expect_magic("CMDS", "dataset");
  const auto version = r.u8();
  if (version != kDatasetVersion) {
    throw FormatError(FormatError::Kind::UnknownVersion, 4,
                      "unknown dataset version " + std::to_string(version));
  }
  const auto count = r.u32();
  std::vector<IdentitySample> samples;
  samples.reserve(std::min<std::uint32_t>(count, 1u << 20));
  for (std::uint32_t i = 0; i < count; ++i) {
    IdentitySample s;
    s.identity = r.u32();
    const auto at = r.offset();
    const auto m = r.u8();
    if (m > 1) {
      throw FormatError(FormatError::Kind::MalformedHeader, at,
                        "invalid modality byte " + std::to_string(m) + " at byte offset " +
                            std::to_string(at));
    }
    s.modality = static_cast<Modality>(m);
    const auto image_at = r.offset();
    s.image = read_tensor(r);
    if (s.image.rank() != 3) {
      throw FormatError(FormatError::Kind::MalformedHeader, image_at,
                        "dataset image at byte offset " + std::to_string(image_at) +
                            " is not (C,H,W)");
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace ccreid
