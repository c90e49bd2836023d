#pragma once

// Asymmetric bilinear link scores P(I -> J) = F_I M F_J^T, source-side
// negative sampling and the softmax cross-entropy over one positive and its
// negatives.

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "formlink/error.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

inline void init_relation(tc::ParamStore& ps, std::size_t dim, tc::Rng& rng) {
  ps.add("link.M", tc::linear_init({dim, dim}, dim, rng));
}

/// fi, fj: 1 x d; m: d x d -> 1 x 1.
inline tc::Var score_link(tc::Var fi, tc::Var fj, tc::Var m) {
  const auto& a = fi.value();
  const auto& b = fj.value();
  const auto& mv = m.value();
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != 1 || b.rows() != 1 || mv.rank() != 2 || a.cols() != mv.rows() ||
      b.cols() != mv.cols())
    throw ContractError("score_link: incompatible shapes " + tc::shape_str(a.shape()) + ", " + tc::shape_str(mv.shape()) +
                        ", " + tc::shape_str(b.shape()));
  return tc::matmul(tc::matmul(fi, m), tc::transpose(fj));
}

/// All pairwise scores: S[i][j] = P(i -> j) for entity rows F (E x d).
inline tc::Var link_scores(tc::Var f, tc::Var m) {
  if (f.value().rank() != 2 || m.value().rank() != 2 || f.value().cols() != m.value().rows() ||
      m.value().rows() != m.value().cols())
    throw ContractError("link_scores: incompatible shapes " + tc::shape_str(f.shape()) + ", " + tc::shape_str(m.shape()));
  return tc::matmul(tc::matmul(f, m), tc::transpose(f));
}

/// Up to k entities drawn uniformly without replacement from [0, num_entities)
/// excluding the target and its gold sources. Partial Fisher-Yates over the
/// ascending eligible list.
inline std::vector<std::size_t> sample_negatives(std::size_t target, const std::set<std::size_t>& sources,
                                                 std::size_t num_entities, std::size_t k, tc::Rng& rng) {
  std::vector<std::size_t> pool;
  for (std::size_t e = 0; e < num_entities; ++e)
    if (e != target && sources.count(e) == 0) pool.push_back(e);
  const std::size_t take = std::min(k, pool.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + tc::uniform_index(rng, pool.size() - i)]);
  pool.resize(take);
  return pool;
}

/// scores: m x 1 column with the positive first -> scalar -log softmax(scores)[0].
inline tc::Var neg_sampling_loss(tc::Var scores) {
  const auto& v = scores.value();
  if (v.rank() != 2 || v.cols() != 1 || v.rows() < 2)
    throw ContractError("neg_sampling_loss: need a column with one positive and at least one negative, got " +
                        tc::shape_str(scores.shape()));
  return tc::reshape(tc::sub(tc::logsumexp(scores, 0), tc::slice_rows(scores, 0, 1)), {1});
}

/// Gathers [S[src][tgt], S[n][tgt] for n in negatives] from the score matrix
/// and applies neg_sampling_loss.
inline tc::Var link_loss(tc::Var s, std::size_t source, std::size_t target, const std::vector<std::size_t>& negatives) {
  std::vector<std::size_t> ids{source};
  ids.insert(ids.end(), negatives.begin(), negatives.end());
  tc::Var column = tc::transpose(tc::embedding(tc::transpose(s), {target}));  // E x 1: scores of every source into target
  return neg_sampling_loss(tc::embedding(column, std::move(ids)));
}

struct RankedCandidate {
  int id = 0;
  double score = 0.0;
};

/// Descending score, ascending id on ties.
inline std::vector<RankedCandidate> rank_candidates(std::vector<RankedCandidate> cands) {
  std::stable_sort(cands.begin(), cands.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return cands;
}

}  // namespace formlink
