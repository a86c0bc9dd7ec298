#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ccreid/nn.hpp"

namespace ccreid {

// Checkpoint file: "CKPT", version byte, u32 entry count, then per entry a
// u16 name length, the UTF-8 name and a CTNS block. An "ALIAS" section
// follows: u32 pair count, then (u16 len, alias, u16 len, canonical) pairs.
// Optimizer velocity is stored as entries named "sgd.velocity/<param>" and
// the optimizer hyperparameters as "sgd.hyper" = [learning_rate, momentum].

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointData {
  std::map<std::string, Tensor<float>> entries;
  std::vector<std::pair<std::string, std::string>> aliases;
};

template <class Real>
CheckpointData make_checkpoint(const ParamStore<Real>& store, const SgdState<Real>* sgd);

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

/// Copies parameter values (and velocity, when `sgd` is given) into an
/// already-built store. Missing or mis-shaped entries raise
/// FormatError::Kind::MissingTensor; alias mismatches MalformedHeader.
template <class Real>
void restore_checkpoint(const CheckpointData& data, ParamStore<Real>& store, SgdState<Real>* sgd);

}  // namespace ccreid
