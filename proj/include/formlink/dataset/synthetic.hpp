#pragma once

// Artificial key/value form pages for desk-scale experiments.
//
// Each page is a jittered two-column grid with K rows. Row r holds a key
// entity (1-3 words, last word ending in ':') in the left column and a value
// entity (1-4 words) in the right column, linked key -> value. Entities are
// stored row by row (key then value), which is also the word order.

#include <cstdint>
#include <string>
#include <vector>

#include "formlink/dataset/tags.hpp"
#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"
#include "formlink/tensorcore/random.hpp"

namespace formlink {

struct SynthConfig {
  std::size_t pages = 8;
  std::size_t pairs_per_page = 6;
  std::size_t key_vocab = 40;
  std::size_t value_vocab = 200;
  int jitter = 4;  // max pixel displacement of an entity
  int width = 1000;
  int height = 1000;
};

namespace synth_detail {

inline constexpr int kMargin = 40;
inline constexpr int kWordHeight = 20;
inline constexpr int kCharWidth = 9;
inline constexpr int kWordGap = 8;
inline constexpr std::size_t kMaxWordChars = 8;
inline constexpr int kRowGap = 4;

inline int word_width(const std::string& w) { return kCharWidth * static_cast<int>(w.size()) + 6; }

/// Deterministic pronounceable pseudo-word for a vocabulary slot.
inline std::string pseudo_word(std::size_t index, std::size_t salt) {
  static constexpr const char* kCons = "bcdfghklmnprstvz";
  static constexpr const char* kVow = "aeiou";
  std::uint64_t h = tc::fnv1a64(std::to_string(salt) + ":" + std::to_string(index));
  const std::size_t syllables = 1 + h % 3;
  h /= 3;
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kCons[h % 16];
    h /= 16;
    w += kVow[h % 5];
    h /= 5;
  }
  return w + std::to_string(index % 10);
}

inline int max_entity_width(std::size_t words, bool key) {
  const int w = kCharWidth * static_cast<int>(kMaxWordChars + (key ? 1 : 0)) + 6;
  return static_cast<int>(words) * w + static_cast<int>(words - 1) * kWordGap;
}

}  // namespace synth_detail

/// Throws ConfigError when the grid cannot hold the requested pairs.
inline void check_synth_config(const SynthConfig& c) {
  using namespace synth_detail;
  if (c.pages == 0) throw ConfigError("synth: pages must be >= 1");
  if (c.pairs_per_page == 0) throw ConfigError("synth: pairs_per_page must be >= 1");
  if (c.key_vocab == 0 || c.value_vocab == 0) throw ConfigError("synth: vocabularies must be non-empty");
  if (c.jitter < 0) throw ConfigError("synth: jitter must be >= 0");
  const int usable_h = c.height - 2 * kMargin;
  const int pitch = usable_h / static_cast<int>(c.pairs_per_page);
  if (usable_h <= 0 || pitch < kWordHeight + 2 * c.jitter + kRowGap)
    throw ConfigError("synth: " + std::to_string(c.pairs_per_page) + " pairs do not fit a page of height " +
                      std::to_string(c.height) + " with jitter " + std::to_string(c.jitter));
  const int col_w = (c.width - 3 * kMargin) / 2;
  if (col_w < max_entity_width(4, false) + 2 * c.jitter || col_w < max_entity_width(3, true) + 2 * c.jitter)
    throw ConfigError("synth: page width " + std::to_string(c.width) + " too narrow for two columns");
}

inline Dataset gen_synthetic(const SynthConfig& cfg, std::uint64_t seed, Split split = Split::train) {
  using namespace synth_detail;
  check_synth_config(cfg);
  std::vector<std::string> keys, values;
  for (std::size_t i = 0; i < cfg.key_vocab; ++i) keys.push_back(pseudo_word(i, 1));
  for (std::size_t i = 0; i < cfg.value_vocab; ++i) values.push_back(pseudo_word(i, 2));

  tc::Rng rng = tc::make_stream(seed, split == Split::train ? "synth/train" : "synth/test");
  auto uniform_int = [&](int lo, int hi) { return lo + static_cast<int>(tc::uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1))); };

  const int pitch = (cfg.height - 2 * kMargin) / static_cast<int>(cfg.pairs_per_page);
  const int col_w = (cfg.width - 3 * kMargin) / 2;
  const int col_x[2] = {kMargin, 2 * kMargin + col_w};

  Dataset ds;
  ds.split = split;
  for (std::size_t p = 0; p < cfg.pages; ++p) {
    Page page;
    page.id = std::string(split_name(split)) + "_" + std::to_string(p);
    page.width = cfg.width;
    page.height = cfg.height;
    for (std::size_t r = 0; r < cfg.pairs_per_page; ++r) {
      const int row_top = kMargin + static_cast<int>(r) * pitch + (pitch - kWordHeight) / 2;
      for (int col = 0; col < 2; ++col) {
        const bool key = col == 0;
        const std::size_t n = key ? 1 + tc::uniform_index(rng, 3) : 1 + tc::uniform_index(rng, 4);
        Entity e;
        e.id = static_cast<int>(2 * r) + col;
        e.category = key ? Category::question : Category::answer;
        if (key) e.out_links.push_back(e.id + 1);
        e.words.begin = page.words.size();
        int x = col_x[col] + cfg.jitter + uniform_int(-cfg.jitter, cfg.jitter);
        const int y = row_top + uniform_int(-cfg.jitter, cfg.jitter);
        for (std::size_t w = 0; w < n; ++w) {
          std::string text = key ? keys[tc::uniform_index(rng, keys.size())] : values[tc::uniform_index(rng, values.size())];
          if (key && w + 1 == n) text += ':';
          const int ww = word_width(text);
          page.words.push_back({text, Box{x, y, x + ww, y + kWordHeight}, e.id});
          x += ww + kWordGap;
        }
        e.words.end = page.words.size();
        page.entities.push_back(std::move(e));
      }
    }
    page.gold_tags = tags_from_entities(page.spans(), page.words.size());
    ds.pages.push_back(std::move(page));
  }
  return ds;
}

}  // namespace formlink
