#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"
#include "formlink/grouper/spans.hpp"
#include "formlink/linker/scoring.hpp"
#include "formlink/metrics/metrics.hpp"
#include "formlink/tensorcore/adam.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/trainer/model.hpp"

namespace formlink {

enum class TrainMode { grouping_only, linking_only, joint };

inline std::string_view mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::grouping_only: return "grouping_only";
    case TrainMode::linking_only: return "linking_only";
    case TrainMode::joint: return "joint";
  }
  return "joint";
}

inline std::optional<TrainMode> mode_from_name(std::string_view s) {
  for (TrainMode m : {TrainMode::grouping_only, TrainMode::linking_only, TrainMode::joint})
    if (mode_name(m) == s) return m;
  return std::nullopt;
}

struct TrainConfig {
  TrainMode mode = TrainMode::joint;
  std::size_t epochs = 200;
  double lr = 1e-3;
  std::size_t batch_size = 4;  // pages
  double teacher_forcing = 0.5;
  std::size_t negatives = 50;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // epochs; 0 disables

  void validate() const {
    if (!(teacher_forcing >= 0.0 && teacher_forcing <= 1.0)) throw ConfigError("train.teacher_forcing must be in [0, 1]");
    if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
    if (negatives < 1) throw ConfigError("train.negatives must be at least 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  }

  nlohmann::json to_json() const {
    return {{"mode", mode_name(mode)}, {"epochs", epochs},        {"lr", lr},
            {"batch_size", batch_size}, {"teacher_forcing", teacher_forcing}, {"negatives", negatives},
            {"seed", seed},             {"eval_every", eval_every}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    auto m = mode_from_name(j.at("mode").get<std::string>());
    if (!m) throw LoadError("unknown training mode in checkpoint");
    c.mode = *m;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.teacher_forcing = j.at("teacher_forcing").get<double>();
    c.negatives = j.at("negatives").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_every = j.at("eval_every").get<std::size_t>();
    return c;
  }
};

/// Loss values and bookkeeping for one optimizer step (or one epoch, summed).
struct StepStats {
  double l_crf = 0.0;
  double l_neg = 0.0;
  double total = 0.0;
  std::size_t pages = 0;
  std::size_t gold_source = 0;       // pages whose links used gold spans
  std::size_t predicted_source = 0;  // pages whose links used decoded spans
  std::size_t links_used = 0;
  std::size_t links_unmatched = 0;   // gold links lost to a mismatched predicted span
  std::size_t links_no_negatives = 0;

  void merge(const StepStats& o) {
    l_crf += o.l_crf;
    l_neg += o.l_neg;
    total += o.total;
    pages += o.pages;
    gold_source += o.gold_source;
    predicted_source += o.predicted_source;
    links_used += o.links_used;
    links_unmatched += o.links_unmatched;
    links_no_negatives += o.links_no_negatives;
  }
};

/// Entity spans used for linking together with the gold links mapped onto them.
struct LinkView {
  std::vector<EntitySpan> spans;
  std::vector<int> ids;                                  // report id of each span
  std::vector<std::pair<std::size_t, std::size_t>> links;  // (source index, target index)
  std::size_t unmatched_links = 0;
};

inline LinkView gold_link_view(const Page& page) {
  LinkView v;
  v.spans = page.spans();
  for (const auto& e : page.entities) v.ids.push_back(e.id);
  for (const auto& [from, to] : page.links()) v.links.emplace_back(*page.entity_index(from), *page.entity_index(to));
  return v;
}

/// Predicted spans; gold links survive only when both endpoint spans were
/// reproduced exactly. Span i gets report id i.
inline LinkView predicted_link_view(const Page& page, const std::vector<EntitySpan>& predicted) {
  LinkView v;
  v.spans = predicted;
  std::map<EntitySpan, std::size_t> index;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    index.emplace(predicted[i], i);
    v.ids.push_back(static_cast<int>(i));
  }
  for (const auto& [from, to] : page.links()) {
    auto a = index.find(page.entities[*page.entity_index(from)].words);
    auto b = index.find(page.entities[*page.entity_index(to)].words);
    if (a == index.end() || b == index.end()) {
      ++v.unmatched_links;
      continue;
    }
    v.links.emplace_back(a->second, b->second);
  }
  return v;
}

/// Per-epoch random sub-streams. Everything derives from (seed, epoch), so a
/// run resumed at an epoch boundary replays the same draws.
struct EpochStreams {
  tc::Rng shuffle, teacher, negatives;
  EpochStreams(std::uint64_t seed, std::size_t epoch)
      : shuffle(tc::make_stream(seed, "shuffle", epoch)),
        teacher(tc::make_stream(seed, "teacher-forcing", epoch)),
        negatives(tc::make_stream(seed, "negatives", epoch)) {}
};

/// Loss terms of one page on tape `t`. Absent terms are null.
struct PageLoss {
  std::optional<tc::Var> crf;
  std::optional<tc::Var> neg;
};

inline PageLoss page_loss(Model& model, tc::Tape& t, const Page& page, const TrainConfig& cfg, EpochStreams& rs,
                          StepStats& stats) {
  PageLoss out;
  tc::Var feats = model.features(t, page);
  std::optional<tc::Var> em;
  if (cfg.mode != TrainMode::linking_only) {
    em = model.emissions(t, feats);
    out.crf = model.crf_loss(t, *em, page.gold_tags);
  }
  if (cfg.mode == TrainMode::grouping_only) return out;

  bool use_gold = true;
  if (cfg.mode == TrainMode::joint) use_gold = tc::uniform01(rs.teacher) < cfg.teacher_forcing;
  LinkView view;
  if (use_gold) {
    ++stats.gold_source;
    view = gold_link_view(page);
  } else {
    ++stats.predicted_source;
    view = predicted_link_view(page, tags_to_spans(model.decode(em->value())));
    stats.links_unmatched += view.unmatched_links;
  }
  if (view.links.empty() || view.spans.size() < 2) return out;

  std::map<std::size_t, std::set<std::size_t>> sources;
  for (const auto& [s, tg] : view.links) sources[tg].insert(s);
  tc::Var scores = model.link_scores(t, feats, view.spans);
  std::vector<tc::Var> terms;
  for (const auto& [s, tg] : view.links) {
    auto neg = sample_negatives(tg, sources[tg], view.spans.size(), cfg.negatives, rs.negatives);
    if (neg.empty()) {
      ++stats.links_no_negatives;
      continue;
    }
    terms.push_back(link_loss(scores, s, tg, neg));
    ++stats.links_used;
  }
  if (terms.empty()) return out;
  tc::Var sum = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) sum = tc::add(sum, terms[i]);
  out.neg = sum;
  return out;
}

/// One optimizer step over a batch. Losses are summed over pages; the step
/// total is exactly l_crf + l_neg.
inline StepStats train_step(Model& model, tc::AdamState& adam, const std::vector<const Page*>& batch,
                            const TrainConfig& cfg, EpochStreams& rs, std::size_t step_index = 0) {
  StepStats st;
  model.params.zero_grad();
  tc::Tape t;
  std::optional<tc::Var> crf_sum, neg_sum;
  auto acc = [](std::optional<tc::Var>& dst, const std::optional<tc::Var>& v) {
    if (v) dst = dst ? tc::add(*dst, *v) : *v;
  };
  for (const Page* p : batch) {
    try {
      PageLoss pl = page_loss(model, t, *p, cfg, rs, st);
      acc(crf_sum, pl.crf);
      acc(neg_sum, pl.neg);
    } catch (const NumericError& e) {
      throw NumericError("non-finite loss on page " + p->id + " at step " + std::to_string(step_index) + ": " +
                         e.what());
    }
    ++st.pages;
  }
  st.l_crf = crf_sum ? crf_sum->value()[0] : 0.0;
  st.l_neg = neg_sum ? neg_sum->value()[0] : 0.0;
  std::optional<tc::Var> total;
  acc(total, crf_sum);
  acc(total, neg_sum);
  st.total = total ? total->value()[0] : 0.0;
  if (!std::isfinite(st.total))
    throw NumericError("non-finite loss at step " + std::to_string(step_index));
  if (total) t.backward(*total);
  for (auto& [name, p] : model.params)
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for " + name + " at step " + std::to_string(step_index));
  tc::AdamConfig ac;
  ac.lr = cfg.lr;
  tc::adam_step(model.params, adam, ac);
  return st;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  StepStats stats;
  std::optional<MetricReport> report;
};

using TrainHistory = std::vector<EpochRecord>;

/// Seeded page order for an epoch: Fisher-Yates over page indices.
inline std::vector<std::size_t> epoch_order(std::size_t n, tc::Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[tc::uniform_index(rng, i)]);
  return order;
}

/// Runs one epoch (0-based index) over the dataset.
inline StepStats train_epoch(Model& model, tc::AdamState& adam, const Dataset& ds, const TrainConfig& cfg,
                             std::size_t epoch) {
  EpochStreams rs(cfg.seed, epoch);
  const auto order = epoch_order(ds.pages.size(), rs.shuffle);
  StepStats total;
  for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
    std::vector<const Page*> batch;
    for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) batch.push_back(&ds.pages[order[i]]);
    total.merge(train_step(model, adam, batch, cfg, rs, adam.step));
  }
  return total;
}

}  // namespace formlink
