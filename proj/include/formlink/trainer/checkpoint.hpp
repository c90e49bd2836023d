#pragma once

// Model checkpoints on top of the tensor container:
//   param/<name>, adam.m/<name>, adam.v/<name> tensors plus a manifest "meta"
//   with the model and training configs, completed epochs and the Adam step.
// Random streams are derived from (seed, epoch), so seed and epoch are the
// whole generator state.

#include <filesystem>
#include <memory>
#include <set>
#include <string>

#include "formlink/error.hpp"
#include "formlink/tensorcore/adam.hpp"
#include "formlink/tensorcore/checkpoint.hpp"
#include "formlink/trainer/model.hpp"
#include "formlink/trainer/train.hpp"

namespace formlink {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<Model> model;
  tc::AdamState adam;
  TrainConfig train;
  std::size_t epoch = 0;  // completed epochs
};

inline tc::TensorContainer checkpoint_container(const Model& model, const tc::AdamState& adam, const TrainConfig& train,
                                                std::size_t epoch) {
  tc::TensorContainer c;
  for (const auto& [name, p] : model.params) c.tensors.emplace_back("param/" + name, p.value);
  for (const auto& [name, m] : adam.m) c.tensors.emplace_back("adam.m/" + name, m);
  for (const auto& [name, v] : adam.v) c.tensors.emplace_back("adam.v/" + name, v);
  c.meta = {{"format", "formlink-checkpoint"},
            {"version", kCheckpointVersion},
            {"model", model.config().to_json()},
            {"train", train.to_json()},
            {"epoch", epoch},
            {"adam_step", adam.step},
            {"rng", {{"scheme", "per-epoch named streams"}, {"seed", train.seed}}}};
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model, const tc::AdamState& adam,
                            const TrainConfig& train, std::size_t epoch) {
  tc::save_container(path, checkpoint_container(model, adam, train, epoch));
}

inline Checkpoint checkpoint_from_container(const tc::TensorContainer& c, const std::string& source) {
  auto fail = [&](const std::string& what) { throw LoadError(source + ": " + what); };
  const auto& meta = c.meta;
  if (!meta.is_object() || meta.value("format", std::string()) != "formlink-checkpoint")
    fail("not a formlink checkpoint");
  if (meta.value("version", -1) != kCheckpointVersion)
    fail("unsupported checkpoint version " + meta.value("version", nlohmann::json()).dump());
  Checkpoint ck;
  try {
    ck.model = std::make_unique<Model>(ModelConfig::from_json(meta.at("model")));
    ck.train = TrainConfig::from_json(meta.at("train"));
    ck.epoch = meta.at("epoch").get<std::size_t>();
    ck.adam.step = meta.at("adam_step").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad manifest: ") + e.what());
  } catch (const ConfigError& e) {
    fail(std::string("bad model config: ") + e.what());
  }
  ck.model->init(0);  // shapes only; every value is overwritten below
  std::set<std::string> seen;
  for (const auto& [full, tensor] : c.tensors) {
    const auto slash = full.find('/');
    if (slash == std::string::npos) fail("unexpected tensor " + full);
    const std::string kind = full.substr(0, slash), name = full.substr(slash + 1);
    if (!ck.model->params.contains(name)) fail("unknown parameter " + name);
    const auto& shape = ck.model->params.get(name).value.shape();
    if (tensor.shape() != shape)
      fail("shape mismatch for " + full + ": checkpoint " + tc::shape_str(tensor.shape()) + ", model " +
           tc::shape_str(shape));
    if (kind == "param") {
      ck.model->params.get(name).value = tensor;
      seen.insert(name);
    } else if (kind == "adam.m") {
      ck.adam.m[name] = tensor;
    } else if (kind == "adam.v") {
      ck.adam.v[name] = tensor;
    } else {
      fail("unexpected tensor " + full);
    }
  }
  for (const auto& [name, _] : ck.model->params)
    if (!seen.count(name)) fail("missing parameter " + name);
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_container(tc::load_container(path), path.string());
}

}  // namespace formlink
