#include "ccreid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace ccreid {

template <class Real>
BatchLoss<Real> batch_loss(Tape<Real>& tape, const CrossModalNet<Real>& net,
                           std::span<const Tensor<Real>> rgb, std::span<const Tensor<Real>> ir,
                           const PairBatch& batch, Real lambda, Real clamp) {
  const std::size_t n = batch.identities.size();
  if (rgb.size() != n || ir.size() != n) {
    throw std::invalid_argument("batch_loss: " + std::to_string(rgb.size()) + " RGB and " +
                                std::to_string(ir.size()) + " IR images for " +
                                std::to_string(n) + " slots");
  }
  const auto& cfg = net.config().sampling;
  std::vector<CommonFeature<Real>> fr, fi;
  std::vector<KernelSet<Real>> kr, ki;
  std::vector<Var<Real>> globals;
  std::vector<Modality> modalities;
  std::vector<std::size_t> labels;
  for (std::size_t s = 0; s < n; ++s) {
    if (batch.identities[s] >= net.config().num_classes) {
      throw DataError("batch_loss: identity " + std::to_string(batch.identities[s]) +
                      " has no classifier slot (" + std::to_string(net.config().num_classes) +
                      " classes)");
    }
    fr.push_back(net.embed(tape, constant(rgb[s]), Modality::RGB));
    fi.push_back(net.embed(tape, constant(ir[s]), Modality::IR));
    kr.push_back(sample_kernels(tape, fr.back(), cfg));
    ki.push_back(sample_kernels(tape, fi.back(), cfg));
  }
  for (std::size_t s = 0; s < n; ++s) {
    globals.push_back(global_feature(tape, fr[s]));
    modalities.push_back(Modality::RGB);
    labels.push_back(batch.identities[s]);
  }
  for (std::size_t s = 0; s < n; ++s) {
    globals.push_back(global_feature(tape, fi[s]));
    modalities.push_back(Modality::IR);
    labels.push_back(batch.identities[s]);
  }

  std::vector<Var<Real>> scores;
  std::vector<PairLabel> pair_labels;
  for (const auto& p : batch.pairs) {
    scores.push_back(
        score_sampled_pair(tape, fr[p.rgb_slot], kr[p.rgb_slot], fi[p.ir_slot], ki[p.ir_slot], net.head())
            .d_pair);
    pair_labels.push_back(p.label);
  }

  BatchLoss<Real> out;
  out.pbce = pbce_loss<Real>(tape, scores, pair_labels, clamp);
  out.id = id_loss<Real>(tape, globals, modalities, labels, net.classifier());
  out.total = total_loss(tape, out.pbce, out.id, lambda);
  return out;
}

std::vector<IdentitySample> load_or_generate(const RunConfig& config) {
  if (!config.dataset_path.empty()) return read_dataset(config.dataset_path);
  DatasetSpec spec;
  spec.seed = config.data_seed;
  spec.ids = config.train_ids + config.test_ids;
  spec.per_modality = config.per_modality;
  return generate_dataset(spec);
}

Splits split_dataset(const RunConfig& config, std::vector<IdentitySample> samples) {
  Splits out;
  for (auto& s : samples) {
    if (s.identity < config.train_ids) {
      out.train.push_back(std::move(s));
    } else if (s.identity < config.train_ids + config.test_ids) {
      out.test.push_back(std::move(s));
    }
  }
  if (out.train.empty()) throw DataError("dataset has no training identities below " + std::to_string(config.train_ids));
  if (out.test.empty()) throw DataError("dataset has no held-out identities");
  return out;
}

std::pair<std::vector<IdentitySample>, std::vector<IdentitySample>> query_gallery(
    std::span<const IdentitySample> test) {
  std::vector<IdentitySample> queries, gallery;
  for (const auto& s : test) (s.modality == Modality::IR ? queries : gallery).push_back(s);
  if (queries.empty() || gallery.empty()) throw DataError("held-out set lacks one modality");
  return {std::move(queries), std::move(gallery)};
}

std::string epoch_checkpoint_path(const std::string& base, std::size_t epoch) {
  return base + ".epoch" + std::to_string(epoch);
}

TrainLog train(const RunConfig& config, CrossModalNet<float>& net, SgdState<float>& sgd,
               std::span<const IdentitySample> train_set, const TrainHooks& hooks) {
  validate_config(config);
  const DatasetIndex index(train_set);
  const auto& bc = config.backbone;
  SplitMix64 sampler(mix_seed(config.train_seed, hash_name("sampler")));
  SplitMix64 augmenter(mix_seed(config.train_seed, hash_name("augment")));
  sgd.momentum = static_cast<float>(config.momentum);

  TrainLog log;
  const std::size_t batches = config.effective_batches_per_epoch();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    sgd.learning_rate = static_cast<float>(config.lr_at(epoch));
    EpochLog e;
    e.epoch = epoch;
    e.lr = config.lr_at(epoch);
    for (std::size_t b = 0; b < batches; ++b) {
      const PairBatch batch = make_batch(index, config.n, config.r, sampler);
      std::vector<Tensor<float>> rgb, ir;
      for (std::size_t s = 0; s < batch.identities.size(); ++s) {
        rgb.push_back(augment(train_set[batch.rgb_samples[s]], config.pad, bc.input_h, bc.input_w,
                              config.flip_prob, augmenter).image);
        ir.push_back(augment(train_set[batch.ir_samples[s]], config.pad, bc.input_h, bc.input_w,
                             config.flip_prob, augmenter).image);
      }
      Tape<float> tape;
      const auto loss = batch_loss<float>(tape, net, rgb, ir, batch, static_cast<float>(config.lambda),
                                          static_cast<float>(config.clamp));
      const float total = loss.total.value().item();
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b + 1));
      }
      tape.backward(loss.total);
      sgd_step(net.params(), sgd);
      net.params().zero_grad();
      e.pbce += loss.pbce.value().item();
      e.id += loss.id.value().item();
      e.total += total;
    }
    e.pbce /= static_cast<double>(batches);
    e.id /= static_cast<double>(batches);
    e.total /= static_cast<double>(batches);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(e);
    if (hooks.on_epoch) hooks.on_epoch(e);
    if (hooks.write_checkpoints && config.checkpoint_every && epoch % config.checkpoint_every == 0 &&
        epoch != config.epochs) {
      write_checkpoint(epoch_checkpoint_path(config.checkpoint_path, epoch), make_checkpoint(net.params(), &sgd));
    }
  }
  if (hooks.write_checkpoints && !config.checkpoint_path.empty()) {
    write_checkpoint(config.checkpoint_path, make_checkpoint(net.params(), &sgd));
  }
  return log;
}

ModelConfig tiny_model_config() {
  ModelConfig m;
  m.backbone.stage_channels = {2, 3};
  m.backbone.downsample_stages = {1};
  m.backbone.shared_from_stage = 1;
  m.backbone.input_h = 8;
  m.backbone.input_w = 6;
  m.sampling.h_k = 2;
  m.sampling.w_k = 2;
  m.num_classes = 3;
  return m;
}

double TotalLossGradCheck::worst() const {
  double w = 0;
  for (const auto& p : params) w = std::max(w, p.result.max_rel_error);
  return w;
}

template <class Real, class Ref>
TotalLossGradCheck check_total_loss_gradients(const ModelConfig& model, std::size_t n,
                                                       std::size_t r, std::uint64_t seed,
                                                       Ref eps) {
  if (n > model.num_classes) throw std::invalid_argument("check_total_loss_gradients: n exceeds num_classes");
  if (n < 2 && r > 0) throw std::invalid_argument("check_total_loss_gradients: negatives need n >= 2");
  if (!(eps > 0)) throw std::invalid_argument("check_total_loss_gradients: eps must be positive");
  CrossModalNet<Real> net(model);
  CrossModalNet<Ref> ref(model);
  net.initialize(seed);
  SplitMix64 rng(mix_seed(seed, hash_name("gradcheck")));
  // Non-zero biases keep the check away from the all-zero bias special case.
  for (const auto& [name, p] : net.params().entries()) {
    auto v = p;
    if (p.shape().size() == 1) {
      const double base = name.ends_with(".gain") ? 1.0 : 0.0;
      for (auto& x : v.mutable_value().data()) x = static_cast<Real>(base + rng.uniform(-0.1, 0.1));
    }
    ref.params().get(name).mutable_value() = v.value().template cast<Ref>();
  }

  const auto& bc = model.backbone;
  std::vector<Tensor<double>> rgb64, ir64;
  PairBatch batch;
  for (std::size_t s = 0; s < n; ++s) {
    Tensor<double> a({bc.input_channels, bc.input_h, bc.input_w}), b(a.shape());
    for (auto& x : a.data()) x = rng.uniform();
    for (auto& x : b.data()) x = rng.uniform();
    rgb64.push_back(std::move(a));
    ir64.push_back(std::move(b));
    batch.identities.push_back(static_cast<std::uint32_t>(s));
    batch.rgb_samples.push_back(s);
    batch.ir_samples.push_back(s);
    batch.pairs.push_back({s, s, PairLabel::Same});
  }
  batch.positives = n;
  for (std::size_t k = 0; k < r * n; ++k) {
    const std::size_t a = k % n;
    const std::size_t b = (a + 1 + k / n % (n - 1)) % n;
    batch.pairs.push_back({a, b, PairLabel::Different});
  }
  batch.negatives = r * n;

  auto inputs = [&]<class T>(std::type_identity<T>) {
    std::pair<std::vector<Tensor<T>>, std::vector<Tensor<T>>> out;
    for (std::size_t s = 0; s < n; ++s) {
      out.first.push_back(rgb64[s].template cast<T>());
      out.second.push_back(ir64[s].template cast<T>());
    }
    return out;
  };
  const auto [rgb, ir] = inputs(std::type_identity<Real>{});
  const auto [rgb_ref, ir_ref] = inputs(std::type_identity<Ref>{});

  {
    Tape<Real> tape;
    const auto loss = batch_loss<Real>(tape, net, rgb, ir, batch, Real(kDefaultLambda), Real(kDefaultLogClamp)).total;
    if (!loss.value().all_finite()) throw NumericError("check_total_loss_gradients: non-finite loss");
    tape.backward(loss);
  }
  auto eval = [&](Tape<Ref>& tape) {
    return batch_loss<Ref>(tape, ref, rgb_ref, ir_ref, batch, Ref(kDefaultLambda), Ref(kDefaultLogClamp))
        .total.value()
        .item();
  };
  auto eval_at = [&]() {
    Tape<Ref> tape(false);
    return eval(tape);
  };

  TotalLossGradCheck out;
  {
    Tape<Ref> tape(false);
    tape.track_kinks(true);
    eval(tape);
    out.kink_margin = static_cast<double>(tape.kink_margin());
  }
  for (const auto& [name, p] : net.params().entries()) {
    const Tensor<Real> analytic = p.has_grad() ? p.grad() : Tensor<Real>(p.shape());
    auto values = ref.params().get(name).mutable_value().data();
    GradCheckResult res;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Ref orig = values[i];
      values[i] = orig + eps;
      const Ref up = eval_at();
      values[i] = orig - eps;
      const Ref down = eval_at();
      values[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("check_total_loss_gradients: non-finite loss when perturbing " + name +
                           " element " + std::to_string(i));
      }
      const Ref numeric = (up - down) / (Ref(2) * eps);
      const Ref a = static_cast<Ref>(analytic[i]);
      const Ref denom = std::max({std::abs(a), std::abs(numeric), Ref(1e-8)});
      const double err = static_cast<double>(std::abs(a - numeric) / denom);
      if (res.checked == 0 || err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_index = i;
        res.analytic = static_cast<double>(a);
        res.numeric = static_cast<double>(numeric);
      }
      ++res.checked;
    }
    out.params.push_back({name, res});
  }
  return out;
}

template TotalLossGradCheck check_total_loss_gradients<double, long double>(
    const ModelConfig&, std::size_t, std::size_t, std::uint64_t, long double);
template TotalLossGradCheck check_total_loss_gradients<float, long double>(
    const ModelConfig&, std::size_t, std::size_t, std::uint64_t, long double);
template TotalLossGradCheck check_total_loss_gradients<double, double>(
    const ModelConfig&, std::size_t, std::size_t, std::uint64_t, double);
template TotalLossGradCheck check_total_loss_gradients<float, double>(
    const ModelConfig&, std::size_t, std::size_t, std::uint64_t, double);
template TotalLossGradCheck check_total_loss_gradients<float, float>(
    const ModelConfig&, std::size_t, std::size_t, std::uint64_t, float);
template BatchLoss<float> batch_loss<float>(Tape<float>&, const CrossModalNet<float>&,
                                            std::span<const Tensor<float>>,
                                            std::span<const Tensor<float>>, const PairBatch&,
                                            float, float);
template BatchLoss<double> batch_loss<double>(Tape<double>&, const CrossModalNet<double>&,
                                              std::span<const Tensor<double>>,
                                              std::span<const Tensor<double>>, const PairBatch&,
                                              double, double);
template BatchLoss<long double> batch_loss<long double>(Tape<long double>&,
                                                        const CrossModalNet<long double>&,
                                                        std::span<const Tensor<long double>>,
                                                        std::span<const Tensor<long double>>,
                                                        const PairBatch&, long double, long double);

}  // namespace ccreid
