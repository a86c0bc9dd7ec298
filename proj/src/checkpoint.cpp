#include "ccreid/checkpoint.hpp"

#include <fstream>

#include "ccreid/tensor_io.hpp"

namespace ccreid {

namespace {

constexpr std::string_view kMagic = "CKPT";
constexpr std::string_view kAliasMagic = "ALIAS";
constexpr std::string_view kVelocityPrefix = "sgd.velocity/";
constexpr std::string_view kHyperName = "sgd.hyper";

void write_name(ByteWriter& w, const std::string& s) {
  if (s.size() > 0xffff) throw std::invalid_argument("checkpoint name too long: " + s);
  w.u16(static_cast<std::uint16_t>(s.size()));
  w.bytes(s);
}

std::string read_name(ByteReader& r) {
  const auto n = r.u16();
  return r.bytes(n);
}

}  // namespace

template <class Real>
CheckpointData make_checkpoint(const ParamStore<Real>& store, const SgdState<Real>* sgd) {
  CheckpointData data;
  for (const auto& [name, v] : store.entries()) data.entries.emplace(name, v.value().template cast<float>());
  for (const auto& [alias, canonical] : store.aliases()) data.aliases.emplace_back(alias, canonical);
  if (sgd) {
    for (const auto& [name, vel] : sgd->velocity) {
      data.entries.emplace(std::string(kVelocityPrefix) + name, vel.template cast<float>());
    }
    data.entries.emplace(std::string(kHyperName),
                         Tensor<float>({2}, {static_cast<float>(sgd->learning_rate),
                                             static_cast<float>(sgd->momentum)}));
  }
  return data;
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  ByteWriter w(os);
  w.bytes(kMagic);
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(data.entries.size()));
  for (const auto& [name, t] : data.entries) {
    write_name(w, name);
    write_tensor(w, t);
  }
  w.bytes(kAliasMagic);
  w.u32(static_cast<std::uint32_t>(data.aliases.size()));
  for (const auto& [alias, canonical] : data.aliases) {
    write_name(w, alias);
    write_name(w, canonical);
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  ByteReader r(is);
  r.expect_magic(kMagic, "checkpoint");
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::UnknownVersion, 4,
                      "unknown checkpoint version " + std::to_string(version));
  }
  CheckpointData data;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto at = r.offset();
    auto name = read_name(r);
    auto t = read_tensor(r);
    if (!data.entries.emplace(std::move(name), std::move(t)).second) {
      throw FormatError(FormatError::Kind::MalformedHeader, at,
                        "duplicate checkpoint entry at byte offset " + std::to_string(at));
    }
  }
  r.expect_magic(kAliasMagic, "checkpoint alias section");
  const auto pairs = r.u32();
  for (std::uint32_t i = 0; i < pairs; ++i) {
    auto alias = read_name(r);
    auto canonical = read_name(r);
    data.aliases.emplace_back(std::move(alias), std::move(canonical));
  }
  return data;
}

template <class Real>
void restore_checkpoint(const CheckpointData& data, ParamStore<Real>& store, SgdState<Real>* sgd) {
  auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor<float>& {
    auto it = data.entries.find(name);
    if (it == data.entries.end()) {
      throw FormatError(FormatError::Kind::MissingTensor, 0, "checkpoint lacks tensor '" + name + "'");
    }
    if (it->second.shape() != shape) {
      throw FormatError(FormatError::Kind::MissingTensor, 0,
                        "checkpoint tensor '" + name + "' has shape " +
                            shape_string(it->second.shape()) + ", model expects " +
                            shape_string(shape));
    }
    return it->second;
  };

  std::map<std::string, std::string> saved_aliases(data.aliases.begin(), data.aliases.end());
  if (saved_aliases != store.aliases()) {
    throw FormatError(FormatError::Kind::MalformedHeader, 0,
                      "checkpoint parameter sharing does not match the model configuration");
  }

  for (const auto& [name, v] : store.entries()) {
    const auto& src = fetch(name, v.shape());
    auto param = v;
    param.mutable_value() = src.template cast<Real>();
  }
  if (sgd) {
    sgd->velocity.clear();
    for (const auto& [name, v] : store.entries()) {
      auto it = data.entries.find(std::string(kVelocityPrefix) + name);
      if (it != data.entries.end()) {
        sgd->velocity.emplace(name, fetch(it->first, v.shape()).template cast<Real>());
      }
    }
    if (auto it = data.entries.find(std::string(kHyperName)); it != data.entries.end()) {
      const auto& h = fetch(it->first, Shape{2});
      sgd->learning_rate = static_cast<Real>(h[0]);
      sgd->momentum = static_cast<Real>(h[1]);
    }
  }
}

template CheckpointData make_checkpoint<float>(const ParamStore<float>&, const SgdState<float>*);
template CheckpointData make_checkpoint<double>(const ParamStore<double>&,
                                                const SgdState<double>*);
template void restore_checkpoint<float>(const CheckpointData&, ParamStore<float>&,
                                        SgdState<float>*);
template void restore_checkpoint<double>(const CheckpointData&, ParamStore<double>&,
                                         SgdState<double>*);

}  // namespace ccreid
