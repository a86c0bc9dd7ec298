#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ccreid/dscsn.hpp"
#include "ccreid/objectives.hpp"
#include "ccreid/rng.hpp"
#include "ccreid/tensor.hpp"

namespace ccreid {

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageHeight = 64;
inline constexpr std::size_t kImageWidth = 32;

enum class Pattern : std::uint8_t { HorizontalStripes = 0, VerticalStripes = 1, Checker = 2 };

/// Per-identity appearance parameters. Lengths are in pixels of the
/// 64x32 canvas; ranges are enforced by construction.
struct IdentityGenome {
  std::uint32_t id = 0;
  double head_h = 10;       // [8, 13]
  double head_w = 9;        // [7, 11]
  double torso_h = 20;      // [16, 24]
  double torso_w = 18;      // [14, 24]
  double leg_w = 5;         // [4, 7]
  double leg_gap = 3;       // [1, 5]
  double torso_freq = 3;    // cycles across the torso, [1.5, 4.5]
  double legs_freq = 2;     // cycles along the legs, [1.0, 4.0]
  double base_hue = 0;      // [0, 1)
  double texture_phase = 0; // [0, 2*pi)
  Pattern torso_pattern = Pattern::HorizontalStripes;

  friend bool operator==(const IdentityGenome&, const IdentityGenome&) = default;
};

/// Deterministic genome drawn from SplitMix64(global_seed ^ id).
IdentityGenome generate_identity(std::uint64_t global_seed, std::uint32_t id);

struct IdentitySample {
  Tensor<float> image;  // (3, H, W), values in [0, 1] before augmentation
  std::uint32_t identity = 0;
  Modality modality = Modality::RGB;
};

/// Seed of the `index`-th render of (id, modality).
std::uint64_t nuisance_seed(std::uint64_t global_seed, std::uint32_t id, Modality modality,
                            std::uint32_t index);

/// Draws a 3x64x32 figure. RGB uses the genome's hue palette; IR is a single
/// intensity response replicated over the channels with its own noise. The
/// nuisance seed drives +-3 px translation and +-10% brightness.
IdentitySample render(const IdentityGenome& genome, Modality modality, std::uint64_t nuisance);

struct DatasetSpec {
  std::uint64_t seed = 7;
  std::uint32_t first_id = 0;
  std::uint32_t ids = 40;
  std::uint32_t per_modality = 20;
};

/// Renders per_modality RGB and IR images for each id in [first_id, first_id+ids).
std::vector<IdentitySample> generate_dataset(const DatasetSpec& spec);

/// Horizontal mirror of a (C,H,W) image.
Tensor<float> mirror(const Tensor<float>& image);

/// Zero-pad by `pad`, take a uniformly placed (out_h, out_w) crop and mirror
/// with probability flip_prob.
IdentitySample augment(const IdentitySample& x, std::size_t pad, std::size_t out_h,
                       std::size_t out_w, double flip_prob, SplitMix64& rng);

/// Sample indices grouped by identity and modality.
class DatasetIndex {
 public:
  explicit DatasetIndex(std::span<const IdentitySample> samples);

  const std::vector<std::uint32_t>& identities() const noexcept { return ids_; }
  const std::vector<std::size_t>& samples_of(std::uint32_t id, Modality m) const;
  std::size_t sample_count() const noexcept { return count_; }

 private:
  std::vector<std::uint32_t> ids_;
  std::map<std::uint32_t, std::vector<std::size_t>> rgb_;
  std::map<std::uint32_t, std::vector<std::size_t>> ir_;
  std::size_t count_ = 0;
};

struct PairEntry {
  std::size_t rgb_slot = 0;
  std::size_t ir_slot = 0;
  PairLabel label = PairLabel::Same;
};

/// N identities with one RGB and one IR sample each (aligned by slot), N
/// positive pairs followed by r*N cross-identity negative pairs.
struct PairBatch {
  std::vector<std::uint32_t> identities;  // per slot
  std::vector<std::size_t> rgb_samples;   // dataset indices per slot
  std::vector<std::size_t> ir_samples;
  std::vector<PairEntry> pairs;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  std::size_t image_count() const noexcept { return rgb_samples.size() + ir_samples.size(); }
};

PairBatch make_batch(const DatasetIndex& index, std::size_t n, std::size_t r, SplitMix64& rng);

// Dataset file: "CMDS", version byte, u32 sample count, then per sample a
// u32 identity, a u8 modality (0 RGB, 1 IR) and a CTNS image block.
inline constexpr std::uint8_t kDatasetVersion = 1;

void write_dataset(const std::string& path, std::span<const IdentitySample> samples);
std::vector<IdentitySample> read_dataset(const std::string& path);

}  // namespace ccreid
