#pragma once

// Stacked bidirectional LSTM. Gate layout in the 4h-wide pre-activation is
// [input | forget | cell | output]:
//   i = sigmoid(a_i)  f = sigmoid(a_f)  g = tanh(a_g)  o = sigmoid(a_o)
//   c_t = f * c_{t-1} + i * g           h_t = o * tanh(c_t)
// with a = x_t Wx + h_{t-1} Wh + b and zero initial state.

#include <string>
#include <vector>

#include "formlink/error.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

class BiLstm {
 public:
  BiLstm() = default;
  /// hidden is the per-direction width; output rows are 2 * hidden wide.
  BiLstm(std::string prefix, std::size_t in_dim, std::size_t hidden, std::size_t layers)
      : prefix_(std::move(prefix)), in_dim_(in_dim), hidden_(hidden), layers_(layers) {
    if (in_dim == 0 || hidden == 0 || layers == 0) throw ConfigError("bilstm: dimensions must be positive");
  }

  void init(tc::ParamStore& ps, tc::Rng& rng) const {
    for (std::size_t l = 0; l < layers_; ++l)
      for (const char* dir : {"fwd", "bwd"}) {
        const std::size_t in = l == 0 ? in_dim_ : 2 * hidden_;
        ps.add(name(l, dir, "wx"), tc::linear_init({in, 4 * hidden_}, hidden_, rng));
        ps.add(name(l, dir, "wh"), tc::linear_init({hidden_, 4 * hidden_}, hidden_, rng));
        ps.add(name(l, dir, "b"), tc::linear_init({4 * hidden_}, hidden_, rng));
      }
  }

  /// x: n x in_dim -> n x 2*hidden, forward states in the leading columns.
  tc::Var forward(tc::Tape& t, tc::ParamStore& ps, tc::Var x) const {
    if (x.value().rank() != 2 || x.value().cols() != in_dim_)
      throw ContractError("bilstm: expected n x " + std::to_string(in_dim_) + " input, got " + tc::shape_str(x.shape()));
    for (std::size_t l = 0; l < layers_; ++l) {
      tc::Var f = run(t, ps, x, l, "fwd", false);
      tc::Var b = run(t, ps, x, l, "bwd", true);
      x = tc::concat({f, b});
    }
    return x;
  }

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t layers() const noexcept { return layers_; }
  std::size_t out_dim() const noexcept { return 2 * hidden_; }

  std::string name(std::size_t layer, const char* dir, const char* leaf) const {
    return prefix_ + ".l" + std::to_string(layer) + "." + dir + "." + leaf;
  }

 private:
  /// One direction of one layer; rows of the result are in sequence order.
  tc::Var run(tc::Tape& t, tc::ParamStore& ps, tc::Var x, std::size_t l, const char* dir, bool reverse) const {
    using namespace tc;
    const std::size_t n = x.value().rows(), h = hidden_;
    Var pre = add_bias(matmul(x, t.param(ps.get(name(l, dir, "wx")))), t.param(ps.get(name(l, dir, "b"))));
    Var wh = t.param(ps.get(name(l, dir, "wh")));
    Var hs = t.constant(Tensor({1, h}));
    Var cs = t.constant(Tensor({1, h}));
    std::vector<Var> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t pos = reverse ? n - 1 - k : k;
      Var a = add(slice_rows(pre, pos, pos + 1), matmul(hs, wh));
      Var i = sigmoid(slice_cols(a, 0, h));
      Var f = sigmoid(slice_cols(a, h, 2 * h));
      Var g = tanh(slice_cols(a, 2 * h, 3 * h));
      Var o = sigmoid(slice_cols(a, 3 * h, 4 * h));
      cs = add(mul(f, cs), mul(i, g));
      hs = mul(o, tanh(cs));
      out[pos] = hs;
    }
    return concat_rows(out);
  }

  std::string prefix_;
  std::size_t in_dim_ = 0, hidden_ = 0, layers_ = 0;
};

}  // namespace formlink
