#pragma once

#include <vector>

#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"

namespace formlink {

/// Entity spans from a tag sequence. Valid (S | B I* E)* parses exactly;
/// anything else is repaired: I or E without an open span opens one, B or S
/// closes the open span first, and a span still open at the end is closed
/// at the last word.
inline std::vector<EntitySpan> tags_to_spans(const TagSequence& tags) {
  std::vector<EntitySpan> out;
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::size_t open = none;
  for (std::size_t t = 0; t < tags.size(); ++t) {
    switch (tags[t]) {
      case Tag::B:
        if (open != none) out.push_back({open, t});
        open = t;
        break;
      case Tag::S:
        if (open != none) out.push_back({open, t});
        open = none;
        out.push_back({t, t + 1});
        break;
      case Tag::I:
        if (open == none) open = t;
        break;
      case Tag::E:
        out.push_back({open == none ? t : open, t + 1});
        open = none;
        break;
    }
  }
  if (open != none) out.push_back({open, tags.size()});
  return out;
}

/// Running micro-average of per-word tag matches.
struct GroupingTally {
  std::size_t correct = 0;
  std::size_t total = 0;

  void add(const TagSequence& gold, const TagSequence& pred) {
    if (gold.size() != pred.size())
      throw ContractError("grouping accuracy: gold has " + std::to_string(gold.size()) + " tags, prediction has " +
                          std::to_string(pred.size()));
    for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
    total += gold.size();
  }
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

inline double grouping_accuracy(const TagSequence& gold, const TagSequence& pred) {
  GroupingTally t;
  t.add(gold, pred);
  return t.accuracy();
}

}  // namespace formlink
