#pragma once

// FUNSD annotation I/O. Layout on disk:
//   <root>/training_data/annotations/<page>.json
//   <root>/testing_data/annotations/<page>.json
// Each file holds {"form": [entity, ...]} where an entity is
//   {"id", "text", "label", "box": [x1,y1,x2,y2], "words": [{"text","box"}], "linking": [[from,to], ...]}.
// Optional top-level "width"/"height" give the page size; otherwise it is read
// from images/<page>.png when present, else taken from the box extents.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "formlink/dataset/tags.hpp"
#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"

namespace formlink {

namespace fs = std::filesystem;

inline std::string split_dir(Split s) { return s == Split::train ? "training_data" : "testing_data"; }

/// Width and height from a PNG IHDR chunk, without decoding pixels.
inline std::optional<std::pair<int, int>> png_dimensions(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  std::array<unsigned char, 24> h{};
  if (!is.read(reinterpret_cast<char*>(h.data()), h.size())) return std::nullopt;
  static constexpr std::array<unsigned char, 8> sig{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (!std::equal(sig.begin(), sig.end(), h.begin())) return std::nullopt;
  auto be32 = [&](std::size_t o) {
    return static_cast<int>((std::uint32_t{h[o]} << 24) | (std::uint32_t{h[o + 1]} << 16) | (std::uint32_t{h[o + 2]} << 8) |
                            std::uint32_t{h[o + 3]});
  };
  return std::make_pair(be32(16), be32(20));
}

namespace detail {

inline Box parse_box(const nlohmann::json& j, const std::string& file, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw ParseError(file, where + ": box must be [x1,y1,x2,y2]");
  Box b;
  try {
    b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  } catch (const nlohmann::json::exception&) {
    throw ParseError(file, where + ": box coordinates must be integers");
  }
  if (!b.valid()) throw ParseError(file, where + ": inverted box");
  return b;
}

}  // namespace detail

/// Builds a Page from one parsed annotation record. Words are flattened in
/// entity order; gold tags follow from entity membership.
inline Page parse_funsd_page(const nlohmann::json& doc, const std::string& page_id, const std::string& file,
                             LoadStats& stats, std::optional<std::pair<int, int>> dims = std::nullopt) {
  if (!doc.is_object() || !doc.contains("form") || !doc["form"].is_array())
    throw ParseError(file, "missing top-level \"form\" list");
  Page page;
  page.id = page_id;
  std::set<int> seen_ids;
  std::vector<std::pair<int, int>> raw_links;
  for (std::size_t k = 0; k < doc["form"].size(); ++k) {
    const auto& ej = doc["form"][k];
    const std::string where = "entity #" + std::to_string(k);
    if (!ej.is_object()) throw ParseError(file, where + ": not an object");
    for (const char* key : {"id", "box", "words"})
      if (!ej.contains(key)) throw ParseError(file, where + ": missing \"" + key + "\"");
    Entity e;
    try {
      e.id = ej.at("id").get<int>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(file, where + ": id must be an integer");
    }
    if (!seen_ids.insert(e.id).second) throw ParseError(file, where + ": duplicate id " + std::to_string(e.id));
    detail::parse_box(ej["box"], file, where);
    const std::string label = ej.value("label", std::string("other"));
    auto cat = category_from_name(label);
    if (!cat) throw ParseError(file, where + ": unknown label '" + label + "'");
    e.category = *cat;
    if (ej.contains("linking")) {
      if (!ej["linking"].is_array()) throw ParseError(file, where + ": linking must be a list");
      for (const auto& l : ej["linking"]) {
        if (!l.is_array() || l.size() != 2 || !l[0].is_number_integer() || !l[1].is_number_integer())
          throw ParseError(file, where + ": linking entries must be [from_id, to_id]");
        raw_links.emplace_back(l[0].get<int>(), l[1].get<int>());
      }
    }
    const auto& wj = ej["words"];
    if (!wj.is_array()) throw ParseError(file, where + ": words must be a list");
    if (wj.empty()) {
      ++stats.dropped_empty_entities;
      continue;
    }
    e.words.begin = page.words.size();
    for (std::size_t w = 0; w < wj.size(); ++w) {
      const std::string wwhere = where + " word #" + std::to_string(w);
      if (!wj[w].is_object() || !wj[w].contains("box")) throw ParseError(file, wwhere + ": missing \"box\"");
      WordBox wb;
      wb.text = wj[w].value("text", std::string());
      wb.box = detail::parse_box(wj[w]["box"], file, wwhere);
      wb.entity_id = e.id;
      if (is_blank(wb.text)) ++stats.blank_words;
      page.words.push_back(std::move(wb));
    }
    e.words.end = page.words.size();
    page.entities.push_back(std::move(e));
  }

  // FUNSD lists each link under both endpoints; keep one directed copy.
  std::set<std::pair<int, int>> links;
  for (const auto& l : raw_links) {
    if (l.first == l.second || !page.entity_index(l.first) || !page.entity_index(l.second)) {
      ++stats.dropped_links;
      continue;
    }
    links.insert(l);
  }
  for (const auto& [from, to] : links) page.entities[*page.entity_index(from)].out_links.push_back(to);

  if (doc.contains("width") && doc.contains("height")) {
    page.width = doc["width"].get<int>();
    page.height = doc["height"].get<int>();
  } else if (dims) {
    std::tie(page.width, page.height) = *dims;
  } else {
    page.width = page.height = 1;
    for (const auto& w : page.words) {
      page.width = std::max(page.width, w.box.x2);
      page.height = std::max(page.height, w.box.y2);
    }
  }
  page.gold_tags = tags_from_entities(page.spans(), page.words.size());
  auto v = page_violations(page, /*allow_blank_words=*/true);
  if (!v.empty()) throw ParseError(file, v.front());
  return page;
}

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path.string(), "cannot open");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

/// Loads one FUNSD split. Pages come out in file-name order. With allow_empty
/// an annotation directory without files yields an empty dataset.
inline Dataset load_funsd(const fs::path& root, Split split, bool allow_empty = false) {
  const fs::path ann = root / split_dir(split) / "annotations";
  if (!fs::is_directory(ann)) throw LoadError("load_funsd: no annotation directory at " + ann.string());
  std::vector<fs::path> files;
  for (const auto& de : fs::directory_iterator(ann))
    if (de.is_regular_file() && de.path().extension() == ".json") files.push_back(de.path());
  if (files.empty() && !allow_empty) throw LoadError("load_funsd: no annotation files in " + ann.string());
  std::sort(files.begin(), files.end());
  Dataset ds;
  ds.split = split;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    auto dims = png_dimensions(root / split_dir(split) / "images" / (id + ".png"));
    ds.pages.push_back(parse_funsd_page(read_json_file(f), id, f.string(), ds.stats, dims));
  }
  return ds;
}

/// FUNSD-format record for a page. Links are listed under both endpoints, as
/// in the original annotations; page size is stored as width/height.
inline nlohmann::json page_to_funsd(const Page& page) {
  nlohmann::json form = nlohmann::json::array();
  for (const auto& e : page.entities) {
    nlohmann::json words = nlohmann::json::array();
    std::string text;
    Box ebox = page.words[e.words.begin].box;
    for (std::size_t i = e.words.begin; i < e.words.end; ++i) {
      const auto& w = page.words[i];
      words.push_back({{"text", w.text}, {"box", {w.box.x1, w.box.y1, w.box.x2, w.box.y2}}});
      text += (i > e.words.begin ? " " : "") + w.text;
      ebox = box_union(ebox, w.box);
    }
    nlohmann::json linking = nlohmann::json::array();
    for (const auto& [from, to] : page.links())
      if (from == e.id || to == e.id) linking.push_back({from, to});
    form.push_back({{"id", e.id},
                    {"text", text},
                    {"label", category_name(e.category)},
                    {"box", {ebox.x1, ebox.y1, ebox.x2, ebox.y2}},
                    {"words", words},
                    {"linking", linking}});
  }
  return {{"form", form}, {"width", page.width}, {"height", page.height}};
}

inline void write_funsd(const Dataset& ds, const fs::path& root) {
  const fs::path ann = root / split_dir(ds.split) / "annotations";
  std::error_code ec;
  fs::create_directories(ann, ec);
  if (ec) throw LoadError("cannot create " + ann.string() + ": " + ec.message());
  for (const auto& p : ds.pages) {
    const fs::path f = ann / (p.id + ".json");
    std::ofstream os(f, std::ios::trunc);
    if (!os) throw LoadError("cannot write " + f.string());
    os << page_to_funsd(p).dump(1) << '\n';
    if (!os) throw LoadError("write failed: " + f.string());
  }
}

}  // namespace formlink
