#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "formlink/dataset/types.hpp"
#include "formlink/features/layout.hpp"
#include "formlink/features/text_encoder.hpp"
#include "formlink/features/windows.hpp"
#include "formlink/grouper/bilstm.hpp"
#include "formlink/grouper/crf.hpp"
#include "formlink/linker/entity.hpp"
#include "formlink/linker/scoring.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

struct ModelConfig {
  WindowConfig window;            // window.length, window.stride
  std::size_t text_dim = 64;      // text.dim
  std::size_t vocab_buckets = 4096;  // text.vocab_buckets
  std::size_t text_heads = 4;
  std::size_t layout_dim = 128;   // layout.dim
  std::size_t lstm_layers = 2;
  std::size_t link_layers = 3;
  std::size_t link_heads = 4;
  std::size_t link_max_positions = 512;
  bool entity_positions = true;

  std::size_t feature_dim() const { return text_dim + layout_dim; }

  void validate() const {
    window.validate();
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw ConfigError(what);
    };
    need(text_dim > 0 && text_dim % text_heads == 0, "text.dim must be a positive multiple of the text head count");
    need(vocab_buckets > 0, "text.vocab_buckets must be positive");
    need(layout_dim > 0, "layout.dim must be positive");
    need(feature_dim() % 2 == 0, "text.dim + layout.dim must be even (BiLSTM halves)");
    need(feature_dim() % link_heads == 0, "text.dim + layout.dim must be divisible by the linker head count");
    need(lstm_layers > 0 && link_layers > 0, "layer counts must be positive");
    need(link_max_positions > 0, "linker position table must be non-empty");
  }

  nlohmann::json to_json() const {
    return {{"window_length", window.length}, {"window_stride", window.stride},   {"text_dim", text_dim},
            {"vocab_buckets", vocab_buckets}, {"text_heads", text_heads},         {"layout_dim", layout_dim},
            {"lstm_layers", lstm_layers},     {"link_layers", link_layers},       {"link_heads", link_heads},
            {"link_max_positions", link_max_positions}, {"entity_positions", entity_positions}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.window.length = j.at("window_length").get<std::size_t>();
    c.window.stride = j.at("window_stride").get<std::size_t>();
    c.text_dim = j.at("text_dim").get<std::size_t>();
    c.vocab_buckets = j.at("vocab_buckets").get<std::size_t>();
    c.text_heads = j.at("text_heads").get<std::size_t>();
    c.layout_dim = j.at("layout_dim").get<std::size_t>();
    c.lstm_layers = j.at("lstm_layers").get<std::size_t>();
    c.link_layers = j.at("link_layers").get<std::size_t>();
    c.link_heads = j.at("link_heads").get<std::size_t>();
    c.link_max_positions = j.at("link_max_positions").get<std::size_t>();
    c.entity_positions = j.at("entity_positions").get<bool>();
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Which head a parameter belongs to.
enum class ParamGroup { shared, grouping, linking };

inline ParamGroup param_group(const std::string& name) {
  if (name.rfind("lstm.", 0) == 0 || name.rfind("crf.", 0) == 0) return ParamGroup::grouping;
  if (name.rfind("link.", 0) == 0) return ParamGroup::linking;
  return ParamGroup::shared;
}

/// Full grouping + linking model. Components look their parameters up by name
/// in `params`, so the model is not copyable.
class Model {
 public:
  explicit Model(ModelConfig cfg)
      : cfg_((cfg.validate(), cfg)),
        text_(params, TextEncoderConfig{cfg_.text_dim, cfg_.vocab_buckets, cfg_.window.length, cfg_.text_heads}),
        layout_(cfg_.layout_dim),
        lstm_("lstm", cfg_.feature_dim(), cfg_.feature_dim() / 2, cfg_.lstm_layers),
        crf_(cfg_.feature_dim()),
        entity_(EntityEncoderConfig{cfg_.feature_dim(), cfg_.link_layers, cfg_.link_heads, cfg_.link_max_positions,
                                    cfg_.entity_positions}) {}

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Fresh parameters from the "init" stream of `seed`.
  void init(std::uint64_t seed) {
    tc::Rng rng = tc::make_stream(seed, "init");
    text_.init(rng);
    layout_.init(params, rng);
    lstm_.init(params, rng);
    crf_.init(params, rng);
    entity_.init(params, rng);
    init_relation(params, cfg_.feature_dim(), rng);
  }

  /// n x d word features [text ; layout].
  tc::Var features(tc::Tape& t, const Page& page) {
    if (page.words.empty()) throw ContractError("page " + page.id + " has no words");
    std::vector<std::string> tokens;
    tokens.reserve(page.words.size());
    for (const auto& w : page.words) tokens.push_back(w.text);
    tc::Var text = encode_text(t, tokens, text_, cfg_.window);
    tc::Var lay = layout_.forward(t, params, t.constant(geometry_matrix(page)));
    return concat_features(text, lay);
  }

  tc::Var emissions(tc::Tape& t, tc::Var feats) { return crf_.emissions(t, params, lstm_.forward(t, params, feats)); }

  tc::Var crf_loss(tc::Tape& t, tc::Var emissions, const TagSequence& gold) {
    return crf_.loss(t, params, emissions, gold);
  }

  TagSequence decode(const tc::Tensor& emissions) const { return crf_.decode(params, emissions); }

  /// E x E link scores, S[i][j] = P(i -> j), over the given spans.
  tc::Var link_scores(tc::Tape& t, tc::Var feats, const std::vector<EntitySpan>& spans) {
    tc::Var f = entity_.encode_all(t, params, feats, spans);
    return formlink::link_scores(f, t.param(params.get("link.M")));
  }

  const ModelConfig& config() const noexcept { return cfg_; }

  tc::ParamStore params;

 private:
  ModelConfig cfg_;
  HashedTransformerEncoder text_;
  LayoutProjection layout_;
  BiLstm lstm_;
  CrfHead crf_;
  EntityEncoder entity_;
};

}  // namespace formlink
