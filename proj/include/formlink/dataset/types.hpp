#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "formlink/error.hpp"

namespace formlink {

/// BIES segmentation tags. Indices are fixed: checkpoints and CRF parameters depend on them.
enum class Tag : std::uint8_t { B = 0, I = 1, E = 2, S = 3 };
inline constexpr std::size_t kNumTags = 4;
inline constexpr std::array<std::string_view, kNumTags> kTagNames{"B", "I", "E", "S"};

using TagSequence = std::vector<Tag>;

inline std::string_view tag_name(Tag t) { return kTagNames[static_cast<std::size_t>(t)]; }
inline Tag tag_from_index(std::size_t i) {
  if (i >= kNumTags) throw ContractError("tag index " + std::to_string(i) + " out of range");
  return static_cast<Tag>(i);
}
inline std::size_t tag_index(Tag t) { return static_cast<std::size_t>(t); }
inline Tag tag_from_name(std::string_view s) {
  for (std::size_t i = 0; i < kNumTags; ++i)
    if (kTagNames[i] == s) return static_cast<Tag>(i);
  throw ContractError("unknown tag name '" + std::string(s) + "'");
}

/// Half-open range [begin, end) of word indices forming one entity.
struct EntitySpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  auto operator<=>(const EntitySpan&) const = default;
};

enum class Category { question, answer, header, other };

inline std::string_view category_name(Category c) {
  switch (c) {
    case Category::question: return "question";
    case Category::answer: return "answer";
    case Category::header: return "header";
    case Category::other: return "other";
  }
  return "other";
}

inline std::optional<Category> category_from_name(std::string_view s) {
  for (Category c : {Category::question, Category::answer, Category::header, Category::other})
    if (category_name(c) == s) return c;
  return std::nullopt;
}

/// Pixel box (x1, y1) top-left to (x2, y2) bottom-right.
struct Box {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  int width() const noexcept { return x2 - x1; }
  int height() const noexcept { return y2 - y1; }
  double center_y() const noexcept { return 0.5 * (y1 + y2); }
  bool valid() const noexcept { return x1 <= x2 && y1 <= y2; }
  bool operator==(const Box&) const = default;
};

inline Box box_union(const Box& a, const Box& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

struct WordBox {
  std::string text;
  Box box;
  int entity_id = -1;
  bool operator==(const WordBox&) const = default;
};

struct Entity {
  int id = 0;
  Category category = Category::other;
  EntitySpan words;          // contiguous range in Page::words
  std::vector<int> out_links;  // target entity ids
  bool operator==(const Entity&) const = default;
};

struct Page {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<WordBox> words;
  std::vector<Entity> entities;
  TagSequence gold_tags;

  /// Position of an entity id in `entities`, if present.
  std::optional<std::size_t> entity_index(int entity_id) const {
    for (std::size_t i = 0; i < entities.size(); ++i)
      if (entities[i].id == entity_id) return i;
    return std::nullopt;
  }

  /// All gold links as (source id, target id), in entity order.
  std::vector<std::pair<int, int>> links() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& e : entities)
      for (int t : e.out_links) out.emplace_back(e.id, t);
    return out;
  }

  std::vector<EntitySpan> spans() const {
    std::vector<EntitySpan> out;
    for (const auto& e : entities) out.push_back(e.words);
    return out;
  }

  bool operator==(const Page&) const = default;
};

enum class Split { train, test };

inline std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

/// Things the loader tolerated instead of failing on.
struct LoadStats {
  std::size_t dropped_empty_entities = 0;
  std::size_t dropped_links = 0;
  std::size_t blank_words = 0;
  bool operator==(const LoadStats&) const = default;
};

struct DatasetTotals {
  std::size_t pages = 0, words = 0, entities = 0, links = 0;
  bool operator==(const DatasetTotals&) const = default;
};

struct Dataset {
  std::vector<Page> pages;
  Split split = Split::train;
  LoadStats stats;

  DatasetTotals totals() const {
    DatasetTotals t;
    t.pages = pages.size();
    for (const auto& p : pages) {
      t.words += p.words.size();
      t.entities += p.entities.size();
      t.links += p.links().size();
    }
    return t;
  }
};

}  // namespace formlink
