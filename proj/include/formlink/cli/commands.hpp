#pragma once

// The four commands behind the formlink tool. Each returns a process exit
// code and writes human output to `out`, diagnostics to `err`.
//   0 success, 1 usage/config/load error, 2 partial failure (some predict
//   inputs skipped), 3 numeric abort during training.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "formlink/cli/run_config.hpp"
#include "formlink/dataset/funsd.hpp"
#include "formlink/dataset/geometry.hpp"
#include "formlink/dataset/synthetic.hpp"
#include "formlink/trainer/checkpoint.hpp"
#include "formlink/trainer/evaluate.hpp"
#include "formlink/trainer/run.hpp"

namespace formlink {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kPredictionSchemaVersion = 1;

inline const char* kCheckpointFile = "model.ckpt";
inline const char* kHistoryFile = "history.csv";
inline const char* kConfigFile = "config.ini";

namespace cli_detail {

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
inline void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw LoadError("cannot write " + tmp.string());
    os << bytes;
    if (!os) throw LoadError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void save_checkpoint_atomic(const fs::path& path, const Model& model, const tc::AdamState& adam,
                                   const TrainConfig& train, std::size_t epoch) {
  const fs::path tmp = path.string() + ".tmp";
  save_checkpoint(tmp, model, adam, train, epoch);
  fs::rename(tmp, path);
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw LoadError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void fail_all(const std::vector<std::string>& errs, const std::string& what) {
  if (errs.empty()) return;
  std::string msg = what + ": " + std::to_string(errs.size()) + " problem" + (errs.size() > 1 ? "s" : "");
  for (const auto& e : errs) msg += "\n  " + e;
  throw ConfigError(msg);
}

/// Runs a command body, mapping library errors to exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const EncoderError& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace cli_detail

/// Writes a synthetic dataset in FUNSD layout under out_dir and prints a summary.
inline int cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  return cli_detail::guarded(err, [&] {
    cli_detail::fail_all(config_errors(cfg), "synth");
    Dataset train = gen_synthetic(cfg.synth, cfg.seed, Split::train);
    SynthConfig test_cfg = cfg.synth;
    test_cfg.pages = cfg.synth_test_pages;
    Dataset test = cfg.synth_test_pages > 0 ? gen_synthetic(test_cfg, cfg.seed, Split::test) : Dataset{};
    test.split = Split::test;
    cli_detail::ensure_dir(out_dir);
    write_funsd(train, out_dir);
    write_funsd(test, out_dir);
    for (const Dataset* ds : {&train, &test}) {
      std::size_t entities = 0, links = 0;
      for (const auto& p : ds->pages) {
        entities += p.entities.size();
        links += p.links().size();
      }
      out << split_name(ds->split) << ": pages " << ds->pages.size() << ", entities " << entities << ", links "
          << links << '\n';
    }
    out << "wrote " << out_dir.string() << '\n';
    return kExitOk;
  });
}

struct TrainOptions {
  std::optional<fs::path> resume;  // checkpoint to continue from
};

/// Trains on data.root's training split. Writes output.dir/{model.ckpt,
/// history.csv, config.ini}. Every input is checked before anything is written.
inline int cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return cli_detail::guarded(err, [&] {
    std::vector<std::string> errs = config_errors(cfg);
    if (cfg.data_root.empty()) errs.push_back("data.root is not set");
    else if (!fs::is_directory(fs::path(cfg.data_root) / split_dir(Split::train) / "annotations"))
      errs.push_back("data.root: no " + split_dir(Split::train) + "/annotations under '" + cfg.data_root + "'");
    if (cfg.output_dir.empty()) errs.push_back("output.dir is not set");
    else if (fs::exists(cfg.output_dir) && !fs::is_directory(cfg.output_dir))
      errs.push_back("output.dir '" + cfg.output_dir + "' exists and is not a directory");
    if (opt.resume && !fs::is_regular_file(*opt.resume)) errs.push_back("resume checkpoint '" + opt.resume->string() + "' not found");
    cli_detail::fail_all(errs, "train");

    const Dataset ds = load_funsd(cfg.data_root, Split::train);
    std::unique_ptr<Model> model;
    tc::AdamState adam;
    std::size_t start = 0;
    if (opt.resume) {
      Checkpoint ck = load_checkpoint(*opt.resume);
      std::vector<std::string> mismatch;
      if (!(ck.model->config() == cfg.model)) mismatch.push_back("model dimensions differ from the config");
      if (ck.train.seed != cfg.seed) mismatch.push_back("seed differs from the config");
      if (ck.train.mode != cfg.train.mode) mismatch.push_back("train.mode differs from the config");
      if (ck.epoch > cfg.train.epochs) mismatch.push_back("checkpoint is past train.epochs");
      if (!mismatch.empty()) {
        std::string msg = opt.resume->string() + ": cannot resume";
        for (const auto& m : mismatch) msg += "\n  " + m;
        throw LoadError(msg);
      }
      model = std::move(ck.model);
      adam = std::move(ck.adam);
      start = ck.epoch;
    } else {
      model = std::make_unique<Model>(cfg.model);
      model->init(cfg.seed);
    }

    const fs::path dir = cfg.output_dir;
    cli_detail::ensure_dir(dir);
    cli_detail::write_atomic(dir / kConfigFile, dump_run_config(cfg));
    const fs::path hist_path = dir / kHistoryFile;
    const bool append = opt.resume && fs::exists(hist_path);
    std::ofstream hist(hist_path, append ? std::ios::app : std::ios::trunc);
    if (!hist) throw LoadError("cannot write " + hist_path.string());
    if (!append) hist << history_csv_header();

    out << "training " << ds.pages.size() << " pages, mode " << mode_name(cfg.train.mode) << ", epochs " << start + 1
        << ".." << cfg.train.epochs << '\n';
    auto on_epoch = [&](const EpochRecord& r) {
      hist << history_csv_row(r) << std::flush;
      out << "epoch " << r.epoch << "  l_crf " << cli_detail::fixed(r.stats.l_crf, 4) << "  l_neg "
          << cli_detail::fixed(r.stats.l_neg, 4) << "  total " << cli_detail::fixed(r.stats.total, 4);
      if (r.report)
        out << "  acc " << cli_detail::fixed(r.report->grouping_accuracy, 4) << "  Hit@1 "
            << cli_detail::fixed(100.0 * r.report->hit1, 2);
      out << '\n';
      if (cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0 && r.epoch < cfg.train.epochs)
        cli_detail::save_checkpoint_atomic(dir / kCheckpointFile, *model, adam, cfg.train, r.epoch);
    };
    train(*model, adam, ds, cfg.train, start, &ds, on_epoch);
    cli_detail::save_checkpoint_atomic(dir / kCheckpointFile, *model, adam, cfg.train, cfg.train.epochs);
    out << "wrote " << (dir / kCheckpointFile).string() << " and " << hist_path.string() << '\n';
    return kExitOk;
  });
}

/// Human-readable report using the mAP / mRank / Hit@k column names.
inline std::string format_report(const MetricReport& r) {
  std::ostringstream os;
  if (r.empty) {
    os << "empty evaluation set: no pages\n";
    return os.str();
  }
  os << "pages " << r.n_pages << "  queries " << r.n_queries << '\n';
  os << std::left << std::setw(19) << "grouping_accuracy" << std::setw(9) << "mAP" << std::setw(9) << "mRank"
     << std::setw(8) << "Hit@1" << std::setw(8) << "Hit@2" << "Hit@5" << '\n';
  os << std::setw(19) << cli_detail::fixed(r.grouping_accuracy, 4);
  if (r.n_queries == 0) {
    os << "(no gold-linked queries)\n";
  } else {
    os << std::setw(9) << cli_detail::fixed(r.map, 4) << std::setw(9) << cli_detail::fixed(r.mrank, 2) << std::setw(8)
       << cli_detail::fixed(100.0 * r.hit1, 2) << std::setw(8) << cli_detail::fixed(100.0 * r.hit2, 2)
       << cli_detail::fixed(100.0 * r.hit5, 2) << '\n';
  }
  return os.str();
}

struct EvalOptions {
  fs::path checkpoint;
  std::optional<RunConfig> config;  // dimensions must match the checkpoint
  std::optional<fs::path> data_root;
  Split split = Split::test;
  bool gold_segmentation = false;
  std::optional<fs::path> out_dir;
};

inline std::string eval_report_name(Split split, bool gold) {
  return "metrics_" + std::string(split_name(split)) + (gold ? "_goldseg" : "") + ".json";
}

/// Prints metrics for one split and writes them as JSON when an output
/// directory is known (--out, else output.dir of the config).
inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return cli_detail::guarded(err, [&] {
    std::vector<std::string> errs;
    if (!fs::is_regular_file(opt.checkpoint)) errs.push_back("checkpoint '" + opt.checkpoint.string() + "' not found");
    std::optional<fs::path> root = opt.data_root;
    if (!root && opt.config && !opt.config->data_root.empty()) root = opt.config->data_root;
    if (!root) errs.push_back("no dataset: pass --data or set data.root");
    else if (!fs::is_directory(*root / split_dir(opt.split) / "annotations"))
      errs.push_back("no " + split_dir(opt.split) + "/annotations under '" + root->string() + "'");
    cli_detail::fail_all(errs, "eval");

    Checkpoint ck = load_checkpoint(opt.checkpoint);
    if (opt.config && !(opt.config->model == ck.model->config()))
      throw LoadError(opt.checkpoint.string() + ": dimension mismatch between checkpoint " +
                      ck.model->config().to_json().dump() + " and config " + opt.config->model.to_json().dump());
    const Dataset ds = load_funsd(*root, opt.split, /*allow_empty=*/true);
    const MetricReport report = evaluate(*ck.model, ds, opt.gold_segmentation).report;
    out << "split " << split_name(opt.split) << "  segmentation " << (opt.gold_segmentation ? "gold" : "predicted")
        << '\n'
        << format_report(report);

    std::optional<fs::path> dir = opt.out_dir;
    if (!dir && opt.config && !opt.config->output_dir.empty()) dir = opt.config->output_dir;
    if (dir) {
      cli_detail::ensure_dir(*dir);
      const fs::path path = *dir / eval_report_name(opt.split, opt.gold_segmentation);
      cli_detail::write_atomic(path, to_json(report).dump(2) + "\n");
      out << "wrote " << path.string() << '\n';
    }
    return kExitOk;
  });
}

/// Page from a raw word list {"words": [{"text", "box"}...], "width"?, "height"?}.
/// Words are put into reading order; the page carries no gold annotation.
inline Page parse_word_list_page(const nlohmann::json& doc, const std::string& page_id, const std::string& file) {
  if (!doc.is_object() || !doc.contains("words") || !doc["words"].is_array())
    throw ParseError(file, "expected a FUNSD \"form\" list or a \"words\" list");
  std::vector<WordBox> raw;
  for (std::size_t w = 0; w < doc["words"].size(); ++w) {
    const auto& wj = doc["words"][w];
    const std::string where = "word #" + std::to_string(w);
    if (!wj.is_object() || !wj.contains("box")) throw ParseError(file, where + ": missing \"box\"");
    WordBox wb;
    if (wj.contains("text") && !wj["text"].is_string()) throw ParseError(file, where + ": text must be a string");
    wb.text = wj.value("text", std::string());
    wb.box = detail::parse_box(wj["box"], file, where);
    raw.push_back(std::move(wb));
  }
  std::vector<Box> boxes;
  for (const auto& w : raw) boxes.push_back(w.box);
  Page page;
  page.id = page_id;
  for (std::size_t i : reading_order(boxes)) page.words.push_back(raw[i]);
  if (doc.contains("width") && doc.contains("height") && doc["width"].is_number_integer() &&
      doc["height"].is_number_integer()) {
    page.width = doc["width"].get<int>();
    page.height = doc["height"].get<int>();
  } else {
    page.width = page.height = 1;
    for (const auto& w : page.words) {
      page.width = std::max(page.width, w.box.x2);
      page.height = std::max(page.height, w.box.y2);
    }
  }
  return page;
}

/// One input file as a page: FUNSD annotation when it has "form", raw word list otherwise.
inline Page read_predict_input(const fs::path& file) {
  const nlohmann::json doc = read_json_file(file);
  const std::string id = file.stem().string();
  Page page;
  if (doc.is_object() && doc.contains("form")) {
    LoadStats stats;
    page = parse_funsd_page(doc, id, file.string(), stats);
  } else {
    page = parse_word_list_page(doc, id, file.string());
  }
  if (page.words.empty()) throw ParseError(file.string(), "page has no words");
  return page;
}

inline nlohmann::ordered_json prediction_to_json(const Page& page, const PagePrediction& p) {
  nlohmann::ordered_json j;
  j["page_id"] = p.page_id;
  nlohmann::ordered_json tags = nlohmann::ordered_json::array();
  for (Tag t : p.tags) tags.push_back(std::string(tag_name(t)));
  j["tags"] = tags;
  nlohmann::ordered_json spans = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < p.spans.size(); ++i) {
    std::string text;
    for (std::size_t w = p.spans[i].begin; w < p.spans[i].end; ++w)
      text += (w > p.spans[i].begin ? " " : "") + page.words[w].text;
    spans.push_back({{"id", i}, {"begin", p.spans[i].begin}, {"end", p.spans[i].end}, {"text", text}});
  }
  j["spans"] = spans;
  if (p.accuracy) j["accuracy"] = *p.accuracy;
  nlohmann::ordered_json rankings = nlohmann::ordered_json::array();
  for (const auto& r : p.rankings) {
    nlohmann::ordered_json cands = nlohmann::ordered_json::array();
    for (const auto& c : r.candidates) cands.push_back({{"id", c.id}, {"score", c.score}});
    nlohmann::ordered_json row;
    row["target"] = r.target;
    row["candidates"] = cands;
    if (!r.gold.empty()) row["gold"] = r.gold;
    rankings.push_back(row);
  }
  j["rankings"] = rankings;
  return j;
}

struct PredictOptions {
  fs::path checkpoint;
  std::vector<fs::path> inputs;  // files or directories of .json files
  std::optional<fs::path> out_dir;  // writes predictions.json there; stdout otherwise
};

/// Tags, spans and candidate rankings for every readable input page. Span ids
/// are positions in the page's span list; rankings use predicted segmentation.
inline int cmd_predict(const PredictOptions& opt, std::ostream& out, std::ostream& err) {
  return cli_detail::guarded(err, [&] {
    std::vector<std::string> errs;
    if (!fs::is_regular_file(opt.checkpoint)) errs.push_back("checkpoint '" + opt.checkpoint.string() + "' not found");
    std::vector<fs::path> files;
    for (const auto& in : opt.inputs) {
      if (fs::is_directory(in)) {
        std::vector<fs::path> found;
        for (const auto& de : fs::directory_iterator(in))
          if (de.is_regular_file() && de.path().extension() == ".json") found.push_back(de.path());
        std::sort(found.begin(), found.end());
        files.insert(files.end(), found.begin(), found.end());
      } else if (fs::is_regular_file(in)) {
        files.push_back(in);
      } else {
        errs.push_back("input '" + in.string() + "' not found");
      }
    }
    if (opt.inputs.empty()) errs.push_back("no input pages given");
    cli_detail::fail_all(errs, "predict");

    Checkpoint ck = load_checkpoint(opt.checkpoint);
    nlohmann::ordered_json report;
    report["schema_version"] = kPredictionSchemaVersion;
    report["pages"] = nlohmann::ordered_json::array();
    report["skipped"] = nlohmann::ordered_json::array();
    for (const auto& f : files) {
      try {
        const Page page = read_predict_input(f);
        report["pages"].push_back(prediction_to_json(page, predict_page(*ck.model, page, false)));
      } catch (const LoadError& e) {
        err << "skipped " << f.string() << ": " << e.what() << '\n';
        report["skipped"].push_back({{"file", f.string()}, {"error", e.what()}});
      }
    }
    const std::string text = report.dump(1) + "\n";
    if (opt.out_dir) {
      cli_detail::ensure_dir(*opt.out_dir);
      cli_detail::write_atomic(*opt.out_dir / "predictions.json", text);
      out << "wrote " << (*opt.out_dir / "predictions.json").string() << " (" << report["pages"].size() << " pages, "
          << report["skipped"].size() << " skipped)\n";
    } else {
      out << text;
    }
    return report["skipped"].empty() ? kExitOk : kExitPartial;
  });
}

}  // namespace formlink
