#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "formlink/cli/commands.hpp"

using namespace formlink;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / "formlink_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d.parent_path());
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kTiny = R"(seed = 3
[text]
dim = 8
vocab_buckets = 64
heads = 2
[layout]
dim = 8
[grouper]
lstm_layers = 1
[linker]
layers = 1
heads = 2
max_positions = 8
[synth]
pages = 4
pairs_per_page = 3
test_pages = 2
[train]
epochs = 2
batch_size = 2
)";

RunConfig tiny(const fs::path& data, const fs::path& out) {
  RunConfig c = parse_run_config(kTiny, "tiny");
  c.data_root = data.string();
  c.output_dir = out.string();
  return c;
}

/// Tiny synthetic dataset and a 2-epoch model, built once.
struct Fixture {
  fs::path data, run;
  Fixture() {
    data = scratch("fixture_data");
    run = scratch("fixture_run");
    std::ostringstream o, e;
    REQUIRE(cmd_synth(tiny(data, run), data, o, e) == kExitOk);
    REQUIRE(cmd_train(tiny(data, run), {}, o, e) == kExitOk);
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("run config parsing") {
  SECTION("presets parse and dump back to the same values") {
    for (const char* name : {"synth_overfit.ini", "funsd.ini", "tiny.ini"}) {
      INFO(name);
      RunConfig c = load_run_config(fs::path(FORMLINK_SOURCE_DIR) / "configs" / name);
      RunConfig back = parse_run_config(dump_run_config(c), "dump");
      CHECK(dump_run_config(back) == dump_run_config(c));
    }
    RunConfig c = load_run_config(fs::path(FORMLINK_SOURCE_DIR) / "configs" / "synth_overfit.ini");
    CHECK(c.seed == 7);
    CHECK(c.train.seed == 7);
    CHECK(c.synth.pages == 8);
    CHECK(c.synth.pairs_per_page == 6);
    CHECK(c.train.mode == TrainMode::joint);
    CHECK(c.train.epochs == 200);
  }
  SECTION("defaults carry the reference hyperparameters") {
    RunConfig c = parse_run_config("", "empty");
    CHECK(c.model.window.length == 512);
    CHECK(c.model.window.stride == 256);
    CHECK(c.model.layout_dim == 128);
    CHECK(c.model.lstm_layers == 2);
    CHECK(c.model.link_layers == 3);
    CHECK(c.train.negatives == 50);
    CHECK(c.train.batch_size == 4);
  }
  SECTION("every problem is listed at once") {
    const std::string text = "colour = blue\n[train]\nepochs = many\nmode = Joint\n[windows]\nlength = 4\n";
    try {
      parse_run_config(text, "bad.ini");
      FAIL("no error");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK_THAT(msg, ContainsSubstring("4 config errors"));
      CHECK_THAT(msg, ContainsSubstring("unknown key 'colour'"));
      CHECK_THAT(msg, ContainsSubstring("unknown key 'windows.length'"));
      CHECK_THAT(msg, ContainsSubstring("train.epochs: expected integer"));
      CHECK_THAT(msg, ContainsSubstring("train.mode"));
    }
  }
  SECTION("invalid combinations are rejected") {
    CHECK_THROWS_WITH(parse_run_config("[window]\nlength = 4\nstride = 8\n", "w"), ContainsSubstring("stride"));
    CHECK_THROWS_WITH(parse_run_config("[train]\nteacher_forcing = 1.5\n", "t"), ContainsSubstring("teacher_forcing"));
    CHECK_THROWS_WITH(parse_run_config("[train]\nepochs = -1\n", "e"), ContainsSubstring("train.epochs"));
    CHECK_THROWS_WITH(parse_run_config("seed = 1\nseed = 2\n", "s"), ContainsSubstring("seed: expected one value (key repeated"));
  }
  SECTION("mode accepts exactly the three scenarios") {
    for (const char* m : {"grouping_only", "linking_only", "joint"})
      CHECK(parse_run_config(std::string("[train]\nmode = ") + m + "\n", "m").train.mode == *mode_from_name(m));
    for (const char* m : {"Joint", "grouping", "both", ""})
      CHECK_THROWS_AS(parse_run_config(std::string("[train]\nmode = ") + m + "\n", "m"), ConfigError);
  }
}

TEST_CASE("synth command") {
  RunConfig cfg = parse_run_config("seed = 7\n[synth]\npages = 8\npairs_per_page = 6\n", "synth");
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  std::ostringstream out, err;
  REQUIRE(cmd_synth(cfg, a, out, err) == kExitOk);
  CHECK_THAT(out.str(), ContainsSubstring("train: pages 8, entities 96, links 48"));
  CHECK_THAT(out.str(), ContainsSubstring("test: pages 0"));

  const Dataset loaded = load_funsd(a, Split::train);
  const Dataset direct = gen_synthetic(cfg.synth, 7, Split::train);
  REQUIRE(loaded.pages.size() == direct.pages.size());
  for (std::size_t i = 0; i < direct.pages.size(); ++i) CHECK(loaded.pages[i] == direct.pages[i]);

  REQUIRE(cmd_synth(cfg, b, out, err) == kExitOk);
  for (const auto& de : fs::directory_iterator(a / "training_data" / "annotations"))
    CHECK(slurp(de.path()) == slurp(b / "training_data" / "annotations" / de.path().filename()));
}

TEST_CASE("train command") {
  const auto& fx = fixture();
  std::ostringstream out, err;

  SECTION("outputs are written") {
    CHECK(fs::is_regular_file(fx.run / kCheckpointFile));
    CHECK(fs::is_regular_file(fx.run / kConfigFile));
    const std::string hist = slurp(fx.run / kHistoryFile);
    CHECK(hist.rfind(history_csv_header(), 0) == 0);
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 3);
  }
  SECTION("missing dataset fails before writing anything") {
    const fs::path out_dir = scratch("no_data_run");
    RunConfig cfg = tiny(scratch("does_not_exist"), out_dir);
    cfg.model.window.stride = 1000;
    CHECK(cmd_train(cfg, {}, out, err) == kExitError);
    CHECK_FALSE(fs::exists(out_dir));
    CHECK_THAT(err.str(), ContainsSubstring("2 problems"));
    CHECK_THAT(err.str(), ContainsSubstring("data.root"));
    CHECK_THAT(err.str(), ContainsSubstring("stride"));
  }
  SECTION("same config gives identical checkpoint bytes") {
    const fs::path again = scratch("train_again");
    REQUIRE(cmd_train(tiny(fx.data, again), {}, out, err) == kExitOk);
    CHECK(slurp(again / kCheckpointFile) == slurp(fx.run / kCheckpointFile));
    CHECK(slurp(again / kHistoryFile) == slurp(fx.run / kHistoryFile));
  }
  SECTION("resume matches an uninterrupted run") {
    const fs::path full = scratch("train_full"), first = scratch("train_first"), second = scratch("train_second");
    RunConfig four = tiny(fx.data, full);
    four.train.epochs = 4;
    REQUIRE(cmd_train(four, {}, out, err) == kExitOk);
    REQUIRE(cmd_train(tiny(fx.data, first), {}, out, err) == kExitOk);
    RunConfig rest = four;
    rest.output_dir = second.string();
    TrainOptions opt;
    opt.resume = first / kCheckpointFile;
    REQUIRE(cmd_train(rest, opt, out, err) == kExitOk);
    CHECK(slurp(second / kCheckpointFile) == slurp(full / kCheckpointFile));
  }
  SECTION("resume refuses a checkpoint with other dimensions") {
    RunConfig other = tiny(fx.data, scratch("train_other"));
    other.model.layout_dim = 16;
    TrainOptions opt;
    opt.resume = fx.run / kCheckpointFile;
    CHECK(cmd_train(other, opt, out, err) == kExitError);
    CHECK_THAT(err.str(), ContainsSubstring("model dimensions differ"));
  }
  SECTION("diverging run aborts with a numeric exit code") {
    RunConfig wild = tiny(fx.data, scratch("train_wild"));
    wild.train.lr = 1e250;
    wild.train.epochs = 5;
    CHECK(cmd_train(wild, {}, out, err) == kExitNumeric);
    CHECK_THAT(err.str(), ContainsSubstring("non-finite"));
    CHECK_FALSE(fs::exists(fs::path(wild.output_dir) / kCheckpointFile));
  }
}

TEST_CASE("eval command") {
  const auto& fx = fixture();
  std::ostringstream out, err;
  EvalOptions opt;
  opt.checkpoint = fx.run / kCheckpointFile;
  opt.data_root = fx.data;
  opt.out_dir = scratch("eval_out");

  SECTION("report uses the metric vocabulary and exact JSON keys") {
    opt.split = Split::train;
    opt.gold_segmentation = true;
    REQUIRE(cmd_eval(opt, out, err) == kExitOk);
    for (const char* col : {"grouping_accuracy", "mAP", "mRank", "Hit@1", "Hit@2", "Hit@5"})
      CHECK_THAT(out.str(), ContainsSubstring(col));
    auto j = nlohmann::json::parse(slurp(*opt.out_dir / eval_report_name(Split::train, true)));
    std::set<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
    CHECK(keys == std::set<std::string>{"grouping_accuracy", "map", "mrank", "hit1", "hit2", "hit5", "n_queries", "n_pages"});
    CHECK(j["n_pages"] == 4);
    CHECK(j["n_queries"] == 12);
  }
  SECTION("gold and predicted segmentation write separate reports") {
    REQUIRE(cmd_eval(opt, out, err) == kExitOk);
    opt.gold_segmentation = true;
    REQUIRE(cmd_eval(opt, out, err) == kExitOk);
    CHECK(fs::exists(*opt.out_dir / "metrics_test.json"));
    CHECK(fs::exists(*opt.out_dir / "metrics_test_goldseg.json"));
  }
  SECTION("empty test set gives an empty report and exit 0") {
    const fs::path data = scratch("eval_empty");
    RunConfig cfg = tiny(data, data);
    cfg.synth_test_pages = 0;
    REQUIRE(cmd_synth(cfg, data, out, err) == kExitOk);
    opt.data_root = data;
    REQUIRE(cmd_eval(opt, out, err) == kExitOk);
    CHECK_THAT(out.str(), ContainsSubstring("empty evaluation set"));
    auto j = nlohmann::json::parse(slurp(*opt.out_dir / "metrics_test.json"));
    CHECK(j["n_pages"] == 0);
    CHECK(j["map"].is_null());
  }
  SECTION("config dimensions must match the checkpoint") {
    RunConfig cfg = tiny(fx.data, *opt.out_dir);
    cfg.model.text_dim = 16;
    opt.config = cfg;
    CHECK(cmd_eval(opt, out, err) == kExitError);
    CHECK_THAT(err.str(), ContainsSubstring("dimension mismatch"));
  }
  SECTION("unreadable checkpoint is a load error") {
    const fs::path bad = scratch("eval_bad") / "bad.ckpt";
    fs::create_directories(bad.parent_path());
    std::ofstream(bad) << "not a checkpoint";
    opt.checkpoint = bad;
    CHECK(cmd_eval(opt, out, err) == kExitError);
  }
}

TEST_CASE("predict command") {
  const auto& fx = fixture();
  std::ostringstream out, err;
  const fs::path in = scratch("predict_in");
  fs::create_directories(in);
  fs::copy(fx.data / "testing_data" / "annotations", in);
  PredictOptions opt;
  opt.checkpoint = fx.run / kCheckpointFile;
  opt.inputs = {in};

  SECTION("report carries tags, spans, rankings and accuracy with resolvable ids") {
    REQUIRE(cmd_predict(opt, out, err) == kExitOk);
    auto j = nlohmann::json::parse(out.str());
    CHECK(j["schema_version"] == kPredictionSchemaVersion);
    REQUIRE(j["pages"].size() == 2);
    for (const auto& p : j["pages"]) {
      CHECK(p.contains("accuracy"));
      const std::size_t n_spans = p["spans"].size();
      std::size_t covered = 0;
      for (const auto& s : p["spans"]) covered += s["end"].get<std::size_t>() - s["begin"].get<std::size_t>();
      CHECK(covered == p["tags"].size());
      for (const auto& r : p["rankings"]) {
        CHECK(r["target"].get<std::size_t>() < n_spans);
        CHECK(r["candidates"].size() == n_spans - 1);
        for (const auto& c : r["candidates"]) CHECK(c["id"].get<std::size_t>() < n_spans);
        if (r.contains("gold"))
          for (const auto& g : r["gold"]) CHECK(g.get<std::size_t>() < n_spans);
      }
    }
  }
  SECTION("output bytes are deterministic") {
    std::ostringstream again;
    REQUIRE(cmd_predict(opt, out, err) == kExitOk);
    REQUIRE(cmd_predict(opt, again, err) == kExitOk);
    CHECK(out.str() == again.str());
  }
  SECTION("raw word lists are put in reading order and carry no accuracy") {
    const fs::path raw = in / "raw.json";
    std::ofstream(raw) << R"({"words": [
      {"text": "second", "box": [300, 100, 360, 120]},
      {"text": "third", "box": [100, 200, 160, 220]},
      {"text": "first", "box": [100, 101, 160, 121]}]})";
    opt.inputs = {raw};
    REQUIRE(cmd_predict(opt, out, err) == kExitOk);
    auto p = nlohmann::json::parse(out.str())["pages"][0];
    CHECK(p["page_id"] == "raw");
    CHECK_FALSE(p.contains("accuracy"));
    std::string text;
    for (const auto& s : p["spans"]) text += s["text"].get<std::string>() + " ";
    CHECK(text == "first second third ");
  }
  SECTION("single-word page has no ranking rows") {
    const fs::path one = in / "one.json";
    std::ofstream(one) << R"({"words": [{"text": "alone", "box": [10, 10, 60, 30]}]})";
    opt.inputs = {one};
    REQUIRE(cmd_predict(opt, out, err) == kExitOk);
    auto p = nlohmann::json::parse(out.str())["pages"][0];
    CHECK(p["spans"].size() == 1);
    CHECK(p["rankings"].empty());
  }
  SECTION("unparseable pages are skipped with a partial-failure exit code") {
    std::ofstream(in / "broken.json") << "{ not json";
    std::ofstream(in / "empty.json") << R"({"words": []})";
    opt.out_dir = scratch("predict_out");
    CHECK(cmd_predict(opt, out, err) == kExitPartial);
    auto j = nlohmann::json::parse(slurp(*opt.out_dir / "predictions.json"));
    CHECK(j["pages"].size() == 2);
    CHECK(j["skipped"].size() == 2);
    CHECK_THAT(err.str(), ContainsSubstring("broken.json"));
  }
}

TEST_CASE("formlink binary") {
  const std::string bin = FORMLINK_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int rc = std::system((bin + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  const auto& fx = fixture();
  CHECK(run("") != 0);
  CHECK(run("train --config " + std::string(FORMLINK_SOURCE_DIR) + "/configs/tiny.ini --mode both") == kExitError);
  CHECK(run("eval --checkpoint " + (fx.run / kCheckpointFile).string() + " --data " + fx.data.string() +
            " --split train --gold-segmentation") == kExitOk);
  CHECK(run("predict --checkpoint " + (fx.run / kCheckpointFile).string() + " " + fx.data.string() +
            "/testing_data/annotations") == kExitOk);
  const fs::path d = scratch("bin_synth");
  CHECK(run("synth --config " + std::string(FORMLINK_SOURCE_DIR) + "/configs/tiny.ini --seed 9 --out " + d.string()) ==
        kExitOk);
  CHECK(fs::exists(d / "training_data" / "annotations" / "train_0.json"));
}
