#pragma once

// Run configuration: a sectioned key = value file (INI syntax, ';' or '#'
// comments). Every key is listed in config_keys(); anything else is an error.
// Parsing collects every problem before failing.

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "formlink/dataset/synthetic.hpp"
#include "formlink/error.hpp"
#include "formlink/trainer/model.hpp"
#include "formlink/trainer/run.hpp"
#include "formlink/trainer/train.hpp"

namespace formlink {

struct RunConfig {
  std::uint64_t seed = 0;  // fans out to synth, init, shuffle, teacher-forcing and negative streams
  ModelConfig model;
  TrainConfig train;  // train.seed mirrors seed
  std::size_t checkpoint_every = 0;  // epochs; 0 writes the checkpoint only at the end
  SynthConfig synth;
  std::size_t synth_test_pages = 0;
  std::string data_root;  // FUNSD layout: training_data/, testing_data/
  std::string output_dir;

  void set_seed(std::uint64_t s) {
    seed = s;
    train.seed = s;
  }
};

/// Lists every problem that makes the values unusable (paths are not checked here).
inline std::vector<std::string> config_errors(const RunConfig& c) {
  std::vector<std::string> errs;
  auto collect = [&](const auto& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      errs.emplace_back(e.what());
    }
  };
  collect([&] { c.model.validate(); });
  collect([&] { c.train.validate(); });
  collect([&] { check_synth_config(c.synth); });
  return errs;
}

namespace run_config_detail {

template <class T>
bool parse_number(const std::string& s, T& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && b != e;
}

inline bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return out = true, true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return out = false, true;
  return false;
}

}  // namespace run_config_detail

struct ConfigKey {
  std::string name;  // section.key, or key for the top level
  std::string type;
  std::string help;
  std::function<bool(RunConfig&, const std::string&)> set;  // false on a malformed value
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using namespace run_config_detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto count = [&](std::string name, std::string help, std::function<std::size_t&(RunConfig&)> ref) {
      k.push_back({std::move(name), "integer", std::move(help),
                   [ref](RunConfig& c, const std::string& s) { return parse_number(s, ref(c)); },
                   [ref](RunConfig c) { return std::to_string(ref(c)); }});
    };
    auto real = [&](std::string name, std::string help, std::function<double&(RunConfig&)> ref) {
      k.push_back({std::move(name), "number", std::move(help),
                   [ref](RunConfig& c, const std::string& s) { return parse_number(s, ref(c)); },
                   [ref](RunConfig c) { return format_double(ref(c)); }});
    };
    auto text = [&](std::string name, std::string help, std::function<std::string&(RunConfig&)> ref) {
      k.push_back({std::move(name), "path", std::move(help),
                   [ref](RunConfig& c, const std::string& s) { return ref(c) = s, true; },
                   [ref](RunConfig c) { return ref(c); }});
    };
    k.push_back({"seed", "integer", "master seed for every random stream",
                 [](RunConfig& c, const std::string& s) {
                   std::uint64_t v = 0;
                   return parse_number(s, v) && (c.set_seed(v), true);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    text("data.root", "dataset root holding training_data/ and testing_data/", [](RunConfig& c) -> std::string& { return c.data_root; });
    text("output.dir", "directory for checkpoints, history and reports", [](RunConfig& c) -> std::string& { return c.output_dir; });
    count("window.length", "words per text-encoder window", [](RunConfig& c) -> std::size_t& { return c.model.window.length; });
    count("window.stride", "offset between window starts", [](RunConfig& c) -> std::size_t& { return c.model.window.stride; });
    count("text.dim", "contextual text feature width", [](RunConfig& c) -> std::size_t& { return c.model.text_dim; });
    count("text.vocab_buckets", "hashed token vocabulary size", [](RunConfig& c) -> std::size_t& { return c.model.vocab_buckets; });
    count("text.heads", "attention heads in the text encoder", [](RunConfig& c) -> std::size_t& { return c.model.text_heads; });
    count("layout.dim", "layout feature width", [](RunConfig& c) -> std::size_t& { return c.model.layout_dim; });
    count("grouper.lstm_layers", "stacked BiLSTM layers", [](RunConfig& c) -> std::size_t& { return c.model.lstm_layers; });
    count("linker.layers", "entity transformer layers", [](RunConfig& c) -> std::size_t& { return c.model.link_layers; });
    count("linker.heads", "entity transformer heads", [](RunConfig& c) -> std::size_t& { return c.model.link_heads; });
    count("linker.max_positions", "entity position table size", [](RunConfig& c) -> std::size_t& { return c.model.link_max_positions; });
    k.push_back({"linker.positions", "boolean", "add learned positions inside entities",
                 [](RunConfig& c, const std::string& s) { return parse_bool(s, c.model.entity_positions); },
                 [](const RunConfig& c) { return std::string(c.model.entity_positions ? "true" : "false"); }});
    k.push_back({"train.mode", "grouping_only | linking_only | joint", "training scenario",
                 [](RunConfig& c, const std::string& s) {
                   auto m = mode_from_name(s);
                   return m && (c.train.mode = *m, true);
                 },
                 [](const RunConfig& c) { return std::string(mode_name(c.train.mode)); }});
    count("train.epochs", "passes over the training split", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    real("train.lr", "Adam learning rate", [](RunConfig& c) -> double& { return c.train.lr; });
    count("train.batch_size", "pages per optimizer step", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    real("train.teacher_forcing", "probability of linking on gold spans in joint mode", [](RunConfig& c) -> double& { return c.train.teacher_forcing; });
    count("train.negatives", "negative sources per positive link", [](RunConfig& c) -> std::size_t& { return c.train.negatives; });
    count("train.eval_every", "epochs between training-set evaluations (0 = off)", [](RunConfig& c) -> std::size_t& { return c.train.eval_every; });
    count("train.checkpoint_every", "epochs between checkpoints (0 = end only)", [](RunConfig& c) -> std::size_t& { return c.checkpoint_every; });
    count("synth.pages", "training pages to generate", [](RunConfig& c) -> std::size_t& { return c.synth.pages; });
    count("synth.test_pages", "test pages to generate", [](RunConfig& c) -> std::size_t& { return c.synth_test_pages; });
    count("synth.pairs_per_page", "key-value pairs per page", [](RunConfig& c) -> std::size_t& { return c.synth.pairs_per_page; });
    count("synth.key_vocab", "distinct key words", [](RunConfig& c) -> std::size_t& { return c.synth.key_vocab; });
    count("synth.value_vocab", "distinct value words", [](RunConfig& c) -> std::size_t& { return c.synth.value_vocab; });
    k.push_back({"synth.jitter", "integer", "maximum pixel displacement of an entity",
                 [](RunConfig& c, const std::string& s) { return parse_number(s, c.synth.jitter); },
                 [](const RunConfig& c) { return std::to_string(c.synth.jitter); }});
    k.push_back({"synth.width", "integer", "page width in pixels",
                 [](RunConfig& c, const std::string& s) { return parse_number(s, c.synth.width); },
                 [](const RunConfig& c) { return std::to_string(c.synth.width); }});
    k.push_back({"synth.height", "integer", "page height in pixels",
                 [](RunConfig& c, const std::string& s) { return parse_number(s, c.synth.height); },
                 [](const RunConfig& c) { return std::to_string(c.synth.height); }});
    return k;
  }();
  return keys;
}

/// Parses config text. Throws ConfigError listing every unknown key,
/// malformed value and invalid setting found.
inline RunConfig parse_run_config(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(is);
  } catch (const CLI::Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  RunConfig cfg;
  std::vector<std::string> errs;
  std::set<std::string> seen;
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    std::string name;
    for (const auto& p : it.parents) name += p + ".";
    name += it.name;
    const auto& keys = config_keys();
    auto k = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& c) { return c.name == name; });
    if (k == keys.end()) {
      errs.push_back("unknown key '" + name + "'");
      continue;
    }
    if (!seen.insert(name).second) errs.push_back("key '" + name + "' appears in more than one place");
    if (it.inputs.size() != 1) {
      errs.push_back(name + ": expected one value (key repeated, or a value with spaces left unquoted)");
      continue;
    }
    if (!k->set(cfg, it.inputs[0])) errs.push_back(name + ": expected " + k->type + ", got '" + it.inputs[0] + "'");
  }
  if (errs.empty())
    for (auto& e : config_errors(cfg)) errs.push_back(std::move(e));
  if (!errs.empty()) {
    std::string msg = source + ": " + std::to_string(errs.size()) + " config error" + (errs.size() > 1 ? "s" : "");
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

/// Canonical text for a config; parses back to the same values.
inline std::string dump_run_config(const RunConfig& c) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    const std::string v = k.get(c);
    if (k.type == "path") {
      if (!v.empty()) os << key << " = \"" << v << "\"\n";
    } else {
      os << key << " = " << v << "\n";
    }
  }
  return os.str();
}

}  // namespace formlink
