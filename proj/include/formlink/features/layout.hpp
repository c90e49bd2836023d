#pragma once

#include <array>
#include <string>
#include <vector>

#include "formlink/dataset/geometry.hpp"
#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

/// relu(geo W + b) with W: 4 x dim, b: dim, under "layout.*".
class LayoutProjection {
 public:
  explicit LayoutProjection(std::size_t dim = 128) : dim_(dim) {
    if (dim == 0) throw ConfigError("layout.dim must be positive");
  }

  void init(tc::ParamStore& ps, tc::Rng& rng) const {
    ps.add("layout.w", tc::linear_init({4, dim_}, 4, rng));
    ps.add("layout.b", tc::linear_init({dim_}, 4, rng));
  }

  /// geo: n x 4 normalized coordinates -> n x dim.
  tc::Var forward(tc::Tape& t, tc::ParamStore& ps, tc::Var geo) const {
    if (geo.value().rank() != 2 || geo.value().cols() != 4)
      throw ContractError("project_coords: expected n x 4 coordinates, got " + tc::shape_str(geo.shape()));
    return tc::relu(tc::add_bias(tc::matmul(geo, t.param(ps.get("layout.w"))), t.param(ps.get("layout.b"))));
  }

  std::size_t dim() const noexcept { return dim_; }

 private:
  std::size_t dim_;
};

/// n x 4 matrix of page-normalized word boxes.
inline tc::Tensor geometry_matrix(const Page& page) {
  if (page.words.empty()) throw ContractError("geometry_matrix: page " + page.id + " has no words");
  tc::Tensor g({page.words.size(), 4});
  for (std::size_t i = 0; i < page.words.size(); ++i) {
    auto n = normalize_box(page.words[i].box, page.width, page.height);
    for (std::size_t c = 0; c < 4; ++c) g.at(i, c) = n[c];
  }
  return g;
}

/// Row-wise [text ; layout].
inline tc::Var concat_features(tc::Var text, tc::Var layout) {
  if (text.value().rank() != 2 || layout.value().rank() != 2 || text.value().rows() != layout.value().rows())
    throw ContractError("concat_features: row mismatch between text " + tc::shape_str(text.shape()) + " and layout " +
                        tc::shape_str(layout.shape()));
  return tc::concat({text, layout});
}

}  // namespace formlink
