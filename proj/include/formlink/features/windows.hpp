#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "formlink/error.hpp"

namespace formlink {

struct WindowConfig {
  std::size_t length = 512;  // words per window
  std::size_t stride = 256;

  bool operator==(const WindowConfig&) const = default;

  void validate() const {
    if (stride < 1 || stride > length)
      throw ConfigError("window: need 1 <= stride <= length, got stride " + std::to_string(stride) + ", length " +
                        std::to_string(length));
  }
};

/// [start, end) word range of one window.
struct WindowSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  bool contains(std::size_t i) const noexcept { return start <= i && i < end; }
  auto operator<=>(const WindowSpan&) const = default;
};

/// Windows starting at 0, stride, 2*stride, ... while start < n, each clipped to n.
inline std::vector<WindowSpan> make_spans(std::size_t n, const WindowConfig& cfg) {
  cfg.validate();
  std::vector<WindowSpan> spans;
  for (std::size_t s = 0; s < n; s += cfg.stride) {
    WindowSpan w{s, std::min(s + cfg.length, n)};
    if (!spans.empty() && spans.back() == w) continue;
    spans.push_back(w);
  }
  return spans;
}

/// Index of the window that puts word i furthest from both window edges:
/// argmin over containing windows of max(i - start, end - 1 - i), lowest index on ties.
inline std::size_t select_span(std::size_t i, const std::vector<WindowSpan>& spans, const WindowConfig& cfg) {
  // Windows containing i have start in (i - length, i], i.e. indices in [lo, hi].
  const std::size_t hi = std::min(i / cfg.stride, spans.empty() ? 0 : spans.size() - 1);
  const std::size_t lo = i + 1 > cfg.length ? (i + 1 - cfg.length + cfg.stride - 1) / cfg.stride : 0;
  std::size_t best = spans.size();
  std::size_t best_cost = 0;
  for (std::size_t j = lo; j <= hi && j < spans.size(); ++j) {
    if (!spans[j].contains(i)) continue;
    const std::size_t cost = std::max(i - spans[j].start, spans[j].end - 1 - i);
    if (best == spans.size() || cost < best_cost) {
      best = j;
      best_cost = cost;
    }
  }
  if (best == spans.size()) throw ContractError("select_span: no window contains word " + std::to_string(i));
  return best;
}

}  // namespace formlink
