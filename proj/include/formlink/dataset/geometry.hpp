#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <vector>

#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"

namespace formlink {

/// Box scaled by page size into [0,1]^4 (clamped).
inline std::array<double, 4> normalize_box(const Box& b, int width, int height) {
  if (width <= 0 || height <= 0)
    throw ContractError("normalize_box: page dimensions must be positive, got " + std::to_string(width) + "x" +
                        std::to_string(height));
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  const double w = width, h = height;
  return {clamp01(b.x1 / w), clamp01(b.y1 / h), clamp01(b.x2 / w), clamp01(b.y2 / h)};
}

/// Median of box heights (mean of the two middle values for even counts).
inline double median_height(std::span<const Box> boxes) {
  if (boxes.empty()) return 0.0;
  std::vector<int> h;
  h.reserve(boxes.size());
  for (const auto& b : boxes) h.push_back(b.height());
  std::sort(h.begin(), h.end());
  const std::size_t n = h.size();
  return n % 2 ? h[n / 2] : 0.5 * (h[n / 2 - 1] + h[n / 2]);
}

/// Geometric reading order for unannotated input.
///
/// Boxes are visited by vertical center (ties by index). A box joins the open
/// row when its center lies within tau = median_height / 2 of the row's first
/// box; otherwise it opens a new row. Rows go top to bottom, boxes inside a row
/// left to right by x1, ties by original index.
inline std::vector<std::size_t> reading_order(std::span<const Box> boxes) {
  const std::size_t n = boxes.size();
  std::vector<std::size_t> by_y(n);
  std::iota(by_y.begin(), by_y.end(), 0);
  std::sort(by_y.begin(), by_y.end(), [&](std::size_t a, std::size_t b) {
    const double ya = boxes[a].center_y(), yb = boxes[b].center_y();
    return ya != yb ? ya < yb : a < b;
  });
  const double tau = 0.5 * median_height(boxes);
  std::vector<std::size_t> order;
  order.reserve(n);
  std::size_t row_start = 0;
  double anchor = 0.0;
  auto flush = [&](std::size_t row_end) {
    std::stable_sort(by_y.begin() + static_cast<std::ptrdiff_t>(row_start),
                     by_y.begin() + static_cast<std::ptrdiff_t>(row_end), [&](std::size_t a, std::size_t b) {
                       return boxes[a].x1 != boxes[b].x1 ? boxes[a].x1 < boxes[b].x1 : a < b;
                     });
    order.insert(order.end(), by_y.begin() + static_cast<std::ptrdiff_t>(row_start),
                 by_y.begin() + static_cast<std::ptrdiff_t>(row_end));
  };
  for (std::size_t k = 0; k < n; ++k) {
    const double cy = boxes[by_y[k]].center_y();
    if (k == 0) {
      anchor = cy;
    } else if (cy - anchor > tau) {
      flush(k);
      row_start = k;
      anchor = cy;
    }
  }
  if (n) flush(n);
  return order;
}

}  // namespace formlink
