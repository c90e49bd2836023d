#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"
#include "formlink/linker/transformer.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

struct EntityEncoderConfig {
  std::size_t dim = 192;
  std::size_t layers = 3;
  std::size_t heads = 4;
  std::size_t max_positions = 512;  // longer spans reuse the last position vector
  bool use_positions = true;
};

/// Entity feature: [alpha; f_i..f_j; beta] through a transformer stack, read
/// out at the alpha position. Parameters under "link.*".
class EntityEncoder {
 public:
  EntityEncoder() = default;
  explicit EntityEncoder(EntityEncoderConfig cfg) : cfg_(cfg) {
    if (cfg.layers == 0) throw ConfigError("entity encoder needs at least one layer");
    for (std::size_t l = 0; l < cfg.layers; ++l)
      layers_.emplace_back("link.layer" + std::to_string(l), cfg.dim, cfg.heads, 4 * cfg.dim);
  }

  void init(tc::ParamStore& ps, tc::Rng& rng) const {
    ps.add("link.alpha", tc::normal_tensor({1, cfg_.dim}, 0.02, rng));
    ps.add("link.beta", tc::normal_tensor({1, cfg_.dim}, 0.02, rng));
    if (cfg_.use_positions) ps.add("link.pos", tc::normal_tensor({cfg_.max_positions, cfg_.dim}, 0.02, rng));
    for (const auto& l : layers_) l.init(ps, rng);
  }

  /// features: n x dim page features -> 1 x dim entity feature.
  tc::Var encode(tc::Tape& t, tc::ParamStore& ps, tc::Var features, EntitySpan span,
                 AttentionTrace* trace = nullptr) const {
    const tc::Tensor& fv = features.value();
    if (fv.rank() != 2 || fv.cols() != cfg_.dim)
      throw ContractError("encode_entity: expected n x " + std::to_string(cfg_.dim) + " features, got " +
                          tc::shape_str(features.shape()));
    if (span.begin >= span.end) throw ContractError("encode_entity: empty span");
    if (span.end > fv.rows())
      throw ContractError("encode_entity: span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                          ") outside " + std::to_string(fv.rows()) + " words");
    tc::Var x = tc::concat_rows({t.param(ps.get("link.alpha")), tc::slice_rows(features, span.begin, span.end),
                                 t.param(ps.get("link.beta"))});
    if (cfg_.use_positions) {
      std::vector<std::size_t> pos(span.size() + 2);
      for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = std::min(i, cfg_.max_positions - 1);
      x = tc::add(x, tc::embedding(t.param(ps.get("link.pos")), std::move(pos)));
    }
    for (const auto& l : layers_) {
      if (trace) trace->layers.emplace_back();
      x = l.forward(t, ps, x, trace ? &trace->layers.back() : nullptr);
    }
    return tc::slice_rows(x, 0, 1);
  }

  /// One row per span, in span order.
  tc::Var encode_all(tc::Tape& t, tc::ParamStore& ps, tc::Var features, const std::vector<EntitySpan>& spans) const {
    if (spans.empty()) throw ContractError("encode_entity: no entities");
    std::vector<tc::Var> rows;
    rows.reserve(spans.size());
    for (const auto& s : spans) rows.push_back(encode(t, ps, features, s));
    return rows.size() == 1 ? rows.front() : tc::concat_rows(rows);
  }

  const EntityEncoderConfig& config() const noexcept { return cfg_; }

 private:
  EntityEncoderConfig cfg_;
  std::vector<TransformerLayer> layers_;
};

}  // namespace formlink
