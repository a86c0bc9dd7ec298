#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccreid/retrieval.hpp"

namespace ccreid {

/// Flat run configuration. Defaults reproduce the reference training setting
/// scaled to the desk dataset.
struct RunConfig {
  BackboneConfig backbone;
  SamplingConfig sampling;

  double lambda = kDefaultLambda;
  double clamp = kDefaultLogClamp;

  std::uint64_t data_seed = 7;
  std::uint32_t train_ids = 32;
  std::uint32_t test_ids = 8;
  std::uint32_t per_modality = 20;
  std::size_t pad = 4;
  double flip_prob = 0.5;

  std::size_t epochs = 60;
  double lr = 0.1;
  std::size_t lr_drop_epoch = 0;  // 0: epochs / 2
  double momentum = 0.9;
  std::size_t n = 32;
  std::size_t r = 3;
  std::uint64_t train_seed = 1;
  std::size_t batches_per_epoch = 0;  // 0: ceil(train_ids * per_modality / n)
  std::size_t checkpoint_every = 0;   // 0: final checkpoint only

  EvalMode eval_mode = EvalMode::Simplified;

  std::string dataset_path;
  std::string checkpoint_path = "ccreid.ckpt";
  std::string report_path = "ccreid_report.txt";

  ModelConfig model_config() const { return {backbone, sampling, train_ids}; }
  std::size_t effective_lr_drop_epoch() const { return lr_drop_epoch ? lr_drop_epoch : epochs / 2; }
  std::size_t effective_batches_per_epoch() const {
    return batches_per_epoch ? batches_per_epoch : (std::size_t{train_ids} * per_modality + n - 1) / n;
  }
  /// Learning rate during 1-based `epoch`.
  double lr_at(std::size_t epoch) const { return epoch > effective_lr_drop_epoch() ? lr * 0.1 : lr; }
};

struct ConfigKey {
  std::string key;
  std::string help;
};

/// Every accepted key with a one-line description and its default.
std::vector<ConfigKey> config_keys();

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, bad values
/// and out-of-range values raise ConfigError naming the key and line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

std::string format_config(const RunConfig& config);
void save_config(const std::string& path, const RunConfig& config);

/// Throws ConfigError for cross-key inconsistencies (line 0).
void validate_config(const RunConfig& config);

}  // namespace ccreid
