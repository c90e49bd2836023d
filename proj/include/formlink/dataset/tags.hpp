#pragma once

#include <algorithm>
#include <cctype>
#include <set>
#include <string>
#include <vector>

#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"

namespace formlink {

/// BIES tags for a partition of [0, n_words) into contiguous entity ranges.
/// Single-word entities get S; longer ones B, I..., E.
inline TagSequence tags_from_entities(std::vector<EntitySpan> spans, std::size_t n_words) {
  std::sort(spans.begin(), spans.end());
  TagSequence tags(n_words, Tag::S);
  std::size_t next = 0;
  for (const auto& s : spans) {
    if (s.begin >= s.end) throw ContractError("tags_from_entities: empty entity range at " + std::to_string(s.begin));
    if (s.begin < next) throw ContractError("tags_from_entities: overlapping entity ranges at word " + std::to_string(s.begin));
    if (s.begin > next) throw ContractError("tags_from_entities: words " + std::to_string(next) + ".." +
                                            std::to_string(s.begin) + " belong to no entity");
    if (s.end > n_words) throw ContractError("tags_from_entities: entity range exceeds word count");
    if (s.size() == 1) {
      tags[s.begin] = Tag::S;
    } else {
      tags[s.begin] = Tag::B;
      for (std::size_t i = s.begin + 1; i + 1 < s.end; ++i) tags[i] = Tag::I;
      tags[s.end - 1] = Tag::E;
    }
    next = s.end;
  }
  if (next != n_words) throw ContractError("tags_from_entities: trailing words belong to no entity");
  return tags;
}

inline bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

/// Every Page invariant, as human-readable violations (empty when valid).
/// Blank word text is tolerated when `allow_blank_words` is set (raw FUNSD has a few).
inline std::vector<std::string> page_violations(const Page& page, bool allow_blank_words = false) {
  std::vector<std::string> v;
  if (page.width <= 0 || page.height <= 0) v.push_back("non-positive page dimensions");
  if (page.gold_tags.size() != page.words.size()) v.push_back("gold_tags length differs from word count");
  std::set<int> ids;
  for (const auto& e : page.entities)
    if (!ids.insert(e.id).second) v.push_back("duplicate entity id " + std::to_string(e.id));
  for (std::size_t i = 0; i < page.words.size(); ++i) {
    const auto& w = page.words[i];
    if (!w.box.valid()) v.push_back("word " + std::to_string(i) + " has an inverted box");
    if (!allow_blank_words && is_blank(w.text)) v.push_back("word " + std::to_string(i) + " has blank text");
    if (!ids.count(w.entity_id)) v.push_back("word " + std::to_string(i) + " refers to unknown entity");
  }
  for (const auto& e : page.entities) {
    if (e.words.begin >= e.words.end || e.words.end > page.words.size()) {
      v.push_back("entity " + std::to_string(e.id) + " has an invalid word range");
      continue;
    }
    for (std::size_t i = e.words.begin; i < e.words.end; ++i)
      if (page.words[i].entity_id != e.id) v.push_back("entity " + std::to_string(e.id) + " range is not contiguous");
    std::set<int> seen;
    for (int t : e.out_links) {
      if (t == e.id) v.push_back("entity " + std::to_string(e.id) + " links to itself");
      if (!seen.insert(t).second) v.push_back("entity " + std::to_string(e.id) + " has a duplicate link");
      if (!ids.count(t)) v.push_back("entity " + std::to_string(e.id) + " links to unknown entity " + std::to_string(t));
    }
  }
  if (v.empty()) {
    try {
      if (tags_from_entities(page.spans(), page.words.size()) != page.gold_tags) v.push_back("gold_tags disagree with entities");
    } catch (const ContractError& e) {
      v.push_back(e.what());
    }
  }
  return v;
}

}  // namespace formlink
