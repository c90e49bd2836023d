#pragma once

// Pre-norm transformer encoder layer:
//   x <- x + MHA(LN1(x));  x <- x + W2 relu(W1 LN2(x) + b1) + b2
// Parameters live in a ParamStore under "<prefix>.*"; the layer object only
// knows its dimensions and prefix.

#include <cmath>
#include <string>
#include <vector>

#include "formlink/error.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

/// Attention probabilities recorded per layer and head (each k x k).
struct AttentionTrace {
  std::vector<std::vector<tc::Tensor>> layers;
};

class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(std::string prefix, std::size_t dim, std::size_t heads, std::size_t ff_dim)
      : prefix_(std::move(prefix)), dim_(dim), heads_(heads), ff_dim_(ff_dim) {
    if (dim == 0 || heads == 0 || dim % heads != 0)
      throw ConfigError("transformer: width " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                        " heads");
  }

  void init(tc::ParamStore& ps, tc::Rng& rng) const {
    const std::size_t d = dim_;
    ps.add(name("ln1.gain"), tc::Tensor({d}, 1.0));
    ps.add(name("ln1.bias"), tc::Tensor({d}, 0.0));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) ps.add(name(w), tc::linear_init({d, d}, d, rng));
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) ps.add(name(b), tc::linear_init({d}, d, rng));
    ps.add(name("ln2.gain"), tc::Tensor({d}, 1.0));
    ps.add(name("ln2.bias"), tc::Tensor({d}, 0.0));
    ps.add(name("ff.w1"), tc::linear_init({d, ff_dim_}, d, rng));
    ps.add(name("ff.b1"), tc::linear_init({ff_dim_}, d, rng));
    ps.add(name("ff.w2"), tc::linear_init({ff_dim_, d}, ff_dim_, rng));
    ps.add(name("ff.b2"), tc::linear_init({d}, ff_dim_, rng));
  }

  /// x: k x dim -> k x dim. Full (unmasked) self-attention over the k rows.
  tc::Var forward(tc::Tape& t, tc::ParamStore& ps, tc::Var x, std::vector<tc::Tensor>* attn_out = nullptr) const {
    using namespace tc;
    if (x.value().rank() != 2 || x.value().cols() != dim_)
      throw ContractError("transformer " + prefix_ + ": expected k x " + std::to_string(dim_) + " input, got " +
                          shape_str(x.shape()));
    auto p = [&](const char* n) { return t.param(ps.get(name(n))); };
    Var h = layer_norm(x, p("ln1.gain"), p("ln1.bias"));
    Var q = add_bias(matmul(h, p("attn.wq")), p("attn.bq"));
    Var k = add_bias(matmul(h, p("attn.wk")), p("attn.bk"));
    Var v = add_bias(matmul(h, p("attn.wv")), p("attn.bv"));
    const std::size_t dh = dim_ / heads_;
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    for (std::size_t hd = 0; hd < heads_; ++hd) {
      Var qh = heads_ == 1 ? q : slice_cols(q, hd * dh, (hd + 1) * dh);
      Var kh = heads_ == 1 ? k : slice_cols(k, hd * dh, (hd + 1) * dh);
      Var vh = heads_ == 1 ? v : slice_cols(v, hd * dh, (hd + 1) * dh);
      Var a = softmax(scale(matmul(qh, transpose(kh)), inv));
      if (attn_out) attn_out->push_back(a.value());
      outs.push_back(matmul(a, vh));
    }
    Var o = outs.size() == 1 ? outs.front() : concat(outs);
    x = add(x, add_bias(matmul(o, p("attn.wo")), p("attn.bo")));
    Var h2 = layer_norm(x, p("ln2.gain"), p("ln2.bias"));
    Var ff = add_bias(matmul(relu(add_bias(matmul(h2, p("ff.w1")), p("ff.b1"))), p("ff.w2")), p("ff.b2"));
    return add(x, ff);
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t heads() const noexcept { return heads_; }
  const std::string& prefix() const noexcept { return prefix_; }

 private:
  std::string name(const char* leaf) const { return prefix_ + "." + leaf; }

  std::string prefix_;
  std::size_t dim_ = 0, heads_ = 1, ff_dim_ = 0;
};

}  // namespace formlink
