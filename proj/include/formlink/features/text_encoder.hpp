#pragma once

#include <cctype>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "formlink/error.hpp"
#include "formlink/features/windows.hpp"
#include "formlink/linker/transformer.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

/// Contextual encoder applied to one window of word tokens.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  /// tokens.size() x dim() features, one row per token.
  virtual tc::Var encode(tc::Tape& tape, std::span<const std::string> tokens) = 0;
};

inline std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Vocabulary bucket of a token: FNV-1a 64 of the lowercased token, modulo buckets.
inline std::size_t token_bucket(const std::string& token, std::size_t buckets) {
  return static_cast<std::size_t>(tc::fnv1a64(lowercase(token)) % buckets);
}

struct TextEncoderConfig {
  std::size_t dim = 64;
  std::size_t vocab_buckets = 4096;
  std::size_t max_positions = 512;  // window length
  std::size_t heads = 4;
};

/// Hashed token embeddings plus learned absolute positions, followed by one
/// transformer layer over the window.
class HashedTransformerEncoder final : public TextEncoder {
 public:
  HashedTransformerEncoder(tc::ParamStore& ps, TextEncoderConfig cfg)
      : ps_(&ps), cfg_(cfg), layer_("text.layer0", cfg.dim, cfg.heads, 4 * cfg.dim) {}

  void init(tc::Rng& rng) {
    ps_->add("text.tok_emb", tc::normal_tensor({cfg_.vocab_buckets, cfg_.dim}, 0.02, rng));
    ps_->add("text.pos_emb", tc::normal_tensor({cfg_.max_positions, cfg_.dim}, 0.02, rng));
    layer_.init(*ps_, rng);
  }

  std::size_t dim() const override { return cfg_.dim; }

  tc::Var encode(tc::Tape& t, std::span<const std::string> tokens) override {
    if (tokens.empty()) throw ContractError("text encoder: empty window");
    if (tokens.size() > cfg_.max_positions)
      throw ContractError("text encoder: window of " + std::to_string(tokens.size()) + " tokens exceeds " +
                          std::to_string(cfg_.max_positions) + " positions");
    std::vector<std::size_t> ids, pos;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      ids.push_back(token_bucket(tokens[i], cfg_.vocab_buckets));
      pos.push_back(i);
    }
    tc::Var x = tc::add(tc::embedding(t.param(ps_->get("text.tok_emb")), std::move(ids)),
                        tc::embedding(t.param(ps_->get("text.pos_emb")), std::move(pos)));
    return layer_.forward(t, *ps_, x);
  }

  const TextEncoderConfig& config() const noexcept { return cfg_; }

 private:
  tc::ParamStore* ps_;
  TextEncoderConfig cfg_;
  TransformerLayer layer_;
};

/// Per-word textual features: every word takes its row from the window chosen
/// by select_span. Each selected window is encoded once; unselected windows
/// are never encoded.
inline tc::Var encode_text(tc::Tape& t, std::span<const std::string> words, TextEncoder& encoder,
                           const WindowConfig& cfg) {
  const std::size_t n = words.size();
  if (n == 0) throw ContractError("encode_text: empty word sequence");
  const auto spans = make_spans(n, cfg);
  std::vector<std::size_t> choice(n);
  std::map<std::size_t, std::size_t> offset;  // window index -> first row in the stacked outputs
  for (std::size_t i = 0; i < n; ++i) {
    choice[i] = select_span(i, spans, cfg);
    offset.emplace(choice[i], 0);
  }
  if (offset.size() == 1 && spans[offset.begin()->first].start == 0 && spans[offset.begin()->first].end == n) {
    return encoder.encode(t, words);
  }
  std::vector<tc::Var> outputs;
  std::size_t rows = 0;
  for (auto& [j, off] : offset) {
    const auto& w = spans[j];
    tc::Var out;
    try {
      out = encoder.encode(t, words.subspan(w.start, w.end - w.start));
    } catch (const std::exception& e) {
      throw EncoderError("encoder failed on words [" + std::to_string(w.start) + ", " + std::to_string(w.end) +
                         "): " + e.what());
    }
    if (out.value().rank() != 2 || out.value().rows() != w.end - w.start || out.value().cols() != encoder.dim())
      throw EncoderError("encoder returned shape " + tc::shape_str(out.shape()) + " for words [" +
                         std::to_string(w.start) + ", " + std::to_string(w.end) + ")");
    off = rows;
    rows += w.end - w.start;
    outputs.push_back(out);
  }
  std::vector<std::size_t> gather(n);
  for (std::size_t i = 0; i < n; ++i) gather[i] = offset[choice[i]] + (i - spans[choice[i]].start);
  return tc::embedding(tc::concat_rows(outputs), std::move(gather));
}

}  // namespace formlink
