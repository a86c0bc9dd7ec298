#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ccreid/checkpoint.hpp"
#include "ccreid/config.hpp"
#include "ccreid/datagen.hpp"
#include "ccreid/gradcheck.hpp"

namespace ccreid {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double pbce = 0;  // means over the epoch's batches
  double id = 0;
  double total = 0;
  double seconds = 0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

template <class Real>
struct BatchLoss {
  Var<Real> pbce;
  Var<Real> id;
  Var<Real> total;
};

/// Embeds the N aligned RGB/IR images, scores every pair of `batch` and
/// combines pbce + lambda * id. Class labels are the slot identities.
template <class Real>
BatchLoss<Real> batch_loss(Tape<Real>& tape, const CrossModalNet<Real>& net,
                           std::span<const Tensor<Real>> rgb, std::span<const Tensor<Real>> ir,
                           const PairBatch& batch, Real lambda, Real clamp);

struct Splits {
  std::vector<IdentitySample> train;
  std::vector<IdentitySample> test;
};

/// Reads paths.dataset when set, otherwise renders train_ids + test_ids identities.
std::vector<IdentitySample> load_or_generate(const RunConfig& config);
/// Ids below train_ids train; the next test_ids are held out.
Splits split_dataset(const RunConfig& config, std::vector<IdentitySample> samples);

/// IR test images as queries, RGB test images as gallery.
std::pair<std::vector<IdentitySample>, std::vector<IdentitySample>> query_gallery(
    std::span<const IdentitySample> test);

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  bool write_checkpoints = true;
};

/// SGD with momentum over batches of N identities. The rate drops x0.1 after
/// effective_lr_drop_epoch(). Aborts with NumericError on a non-finite loss.
TrainLog train(const RunConfig& config, CrossModalNet<float>& net, SgdState<float>& sgd,
               std::span<const IdentitySample> train_set, const TrainHooks& hooks = {});

struct ParamGradCheck {
  std::string name;
  GradCheckResult result;
};

/// Tiny backbone used by the end-to-end gradient checks: 3x8x6 input, two
/// stages of 2 and 3 channels, 2x2 kernels.
ModelConfig tiny_model_config();

struct TotalLossGradCheck {
  std::vector<ParamGradCheck> params;
  /// Smallest |x| over relu and non-zero abs inputs at the unperturbed point.
  double kink_margin = 0;
  double worst() const;
};

/// Analytic gradients of the total loss (computed in Real) against central
/// differences of the same loss evaluated in Ref, for every canonical
/// parameter of a freshly initialised model on a synthetic N-identity batch.
/// Both models hold bit-identical parameter values.
template <class Real, class Ref = Real>
TotalLossGradCheck check_total_loss_gradients(const ModelConfig& model, std::size_t n,
                                                       std::size_t r, std::uint64_t seed,
                                                       Ref eps);

/// Path of the periodic checkpoint after `epoch`.
std::string epoch_checkpoint_path(const std::string& base, std::size_t epoch);

}  // namespace ccreid
