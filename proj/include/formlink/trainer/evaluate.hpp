#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "formlink/grouper/spans.hpp"
#include "formlink/linker/scoring.hpp"
#include "formlink/metrics/metrics.hpp"
#include "formlink/trainer/train.hpp"

namespace formlink {

struct TargetRanking {
  int target = 0;
  std::vector<RankedCandidate> candidates;  // best first
  std::vector<int> gold;                    // empty when the page has no gold links
};

struct PagePrediction {
  std::string page_id;
  TagSequence tags;
  std::vector<EntitySpan> spans;  // decoded
  std::optional<double> accuracy;  // when gold tags are present
  std::vector<TargetRanking> rankings;
  std::size_t correct_tags = 0;
};

/// Grouping and ranking for one page. Link entities come from the gold
/// annotation when use_gold_segmentation is set, otherwise from the decoded
/// spans. Targets are the gold-linked entities when the page has gold links,
/// every entity otherwise.
inline PagePrediction predict_page(Model& model, const Page& page, bool use_gold_segmentation) {
  PagePrediction out;
  out.page_id = page.id;
  tc::Tape t;
  tc::Var feats = model.features(t, page);
  out.tags = model.decode(model.emissions(t, feats).value());
  out.spans = tags_to_spans(out.tags);
  if (page.gold_tags.size() == out.tags.size()) {
    for (std::size_t i = 0; i < out.tags.size(); ++i) out.correct_tags += out.tags[i] == page.gold_tags[i];
    out.accuracy = static_cast<double>(out.correct_tags) / static_cast<double>(out.tags.size());
  }
  const bool has_gold_entities = !page.entities.empty();
  LinkView view = use_gold_segmentation && has_gold_entities ? gold_link_view(page) : predicted_link_view(page, out.spans);
  if (view.spans.size() < 2) return out;
  const tc::Tensor scores = model.link_scores(t, feats, view.spans).value();

  std::map<std::size_t, std::set<std::size_t>> sources;
  for (const auto& [s, tg] : view.links) sources[tg].insert(s);
  std::vector<std::size_t> targets;
  if (page.links().empty()) {
    for (std::size_t j = 0; j < view.spans.size(); ++j) targets.push_back(j);
  } else {
    for (const auto& [tg, _] : sources) targets.push_back(tg);
  }
  for (std::size_t j : targets) {
    TargetRanking r;
    r.target = view.ids[j];
    std::vector<RankedCandidate> cands;
    for (std::size_t i = 0; i < view.spans.size(); ++i)
      if (i != j) cands.push_back({view.ids[i], scores.at(i, j)});
    r.candidates = rank_candidates(std::move(cands));
    for (std::size_t s : sources[j]) r.gold.push_back(view.ids[s]);
    out.rankings.push_back(std::move(r));
  }
  return out;
}

/// Thread count for evaluation: FORMLINK_THREADS when set, else the hardware count.
inline std::size_t eval_threads(std::size_t work) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FORMLINK_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::min(n, work));
}

struct EvalResult {
  MetricReport report;
  std::vector<PagePrediction> pages;  // dataset order
};

/// Metrics over a dataset. Pages are spread over threads; the model is only
/// read. Results are merged in dataset order, so output does not depend on the
/// thread count.
inline EvalResult evaluate(Model& model, const Dataset& ds, bool use_gold_segmentation, std::size_t threads = 0) {
  EvalResult res;
  res.pages.resize(ds.pages.size());
  if (ds.pages.empty()) return res;
  if (threads == 0) threads = eval_threads(ds.pages.size());
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](std::size_t k) {
    try {
      for (std::size_t i = k; i < ds.pages.size(); i += threads)
        res.pages[i] = predict_page(model, ds.pages[i], use_gold_segmentation);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(work, k);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  GroupingTally tally;
  std::vector<RankedQuery> queries;
  for (std::size_t i = 0; i < ds.pages.size(); ++i) {
    const auto& p = res.pages[i];
    if (p.accuracy) {
      tally.correct += p.correct_tags;
      tally.total += p.tags.size();
    }
    for (const auto& r : p.rankings) {
      if (r.gold.empty()) continue;
      RankedQuery q;
      q.target = r.target;
      for (const auto& c : r.candidates) q.candidates.push_back(c.id);
      q.gold.insert(r.gold.begin(), r.gold.end());
      queries.push_back(std::move(q));
    }
  }
  res.report = aggregate(queries);
  res.report.grouping_accuracy = tally.accuracy();
  res.report.n_pages = ds.pages.size();
  res.report.empty = false;
  return res;
}

}  // namespace formlink
