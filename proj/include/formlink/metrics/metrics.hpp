#pragma once

// Ranking metrics for link reconstruction (mAP, mRank) and detection (Hit@k).

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <json.hpp>

#include "formlink/error.hpp"

namespace formlink {

/// One target entity with its candidate sources ranked best first.
struct RankedQuery {
  int target = 0;
  std::vector<int> candidates;
  std::set<int> gold;

  /// 1-based ascending ranks of the gold candidates.
  std::vector<std::size_t> gold_ranks() const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (gold.count(candidates[i])) r.push_back(i + 1);
    if (r.size() != gold.size()) throw ContractError("ranked query: gold id missing from the candidate list");
    return r;
  }
};

/// Interpolated AP: p_i is the best precision at any rank reaching recall i/m,
/// AP the mean of p_1..p_m.
inline double average_precision(const RankedQuery& q) {
  const auto ranks = q.gold_ranks();
  const std::size_t m = ranks.size();
  if (m == 0) throw ContractError("average_precision: query has no gold answers");
  double best = 0.0, sum = 0.0;
  for (std::size_t k = m; k-- > 0;) {
    best = std::max(best, static_cast<double>(k + 1) / static_cast<double>(ranks[k]));
    sum += best;
  }
  return sum / static_cast<double>(m);
}

/// Wrong candidates ranked above right ones: sum_k (i_k - k).
inline std::size_t reverse_pairs(const RankedQuery& q) {
  const auto ranks = q.gold_ranks();
  if (ranks.empty()) throw ContractError("reverse_pairs: query has no gold answers");
  std::size_t s = 0;
  for (std::size_t k = 0; k < ranks.size(); ++k) s += ranks[k] - (k + 1);
  return s;
}

inline int hit_at_k(const RankedQuery& q, std::size_t k) {
  if (k == 0) throw ContractError("hit_at_k: k must be at least 1");
  for (std::size_t i = 0; i < std::min(k, q.candidates.size()); ++i)
    if (q.gold.count(q.candidates[i])) return 1;
  return 0;
}

struct MetricReport {
  double grouping_accuracy = 0.0;
  double map = 0.0;
  double mrank = 0.0;
  double hit1 = 0.0, hit2 = 0.0, hit5 = 0.0;  // fractions in [0, 1]
  std::size_t n_queries = 0;
  std::size_t n_excluded = 0;  // queries without gold answers
  std::size_t n_pages = 0;
  bool empty = true;
};

/// Means over queries with at least one gold answer.
inline MetricReport aggregate(const std::vector<RankedQuery>& queries) {
  MetricReport r;
  for (const auto& q : queries) {
    if (q.gold.empty()) {
      ++r.n_excluded;
      continue;
    }
    r.map += average_precision(q);
    r.mrank += static_cast<double>(reverse_pairs(q));
    r.hit1 += hit_at_k(q, 1);
    r.hit2 += hit_at_k(q, 2);
    r.hit5 += hit_at_k(q, 5);
    ++r.n_queries;
  }
  if (r.n_queries == 0) return r;
  const double n = static_cast<double>(r.n_queries);
  r.map /= n;
  r.mrank /= n;
  r.hit1 /= n;
  r.hit2 /= n;
  r.hit5 /= n;
  r.empty = false;
  return r;
}

/// Fixed key names; hit values are written as percentages. Values with
/// nothing to average over are null: every value of an empty report, and the
/// linking values when no query had a gold answer.
inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  const bool no_links = r.empty || r.n_queries == 0;
  auto put = [&](const char* key, double v, bool missing) { j[key] = missing ? nlohmann::ordered_json() : nlohmann::ordered_json(v); };
  put("grouping_accuracy", r.grouping_accuracy, r.empty);
  put("map", r.map, no_links);
  put("mrank", r.mrank, no_links);
  put("hit1", 100.0 * r.hit1, no_links);
  put("hit2", 100.0 * r.hit2, no_links);
  put("hit5", 100.0 * r.hit5, no_links);
  j["n_queries"] = r.n_queries;
  j["n_pages"] = r.n_pages;
  return j;
}

}  // namespace formlink
