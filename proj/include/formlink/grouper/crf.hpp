#pragma once

// Linear-chain CRF over the four BIES tags.
//   score(y) = start[y_1] + sum_t e_t[y_t] + sum_t T[y_t, y_{t+1}] + end[y_n]
//   p(y | h) = exp(score(y) - log Z)

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "formlink/dataset/types.hpp"
#include "formlink/error.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink {

namespace crf_detail {

inline constexpr std::size_t K = kNumTags;

inline double lse(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline void check_shapes(const tc::Tensor& e, const tc::Tensor& trans, const tc::Tensor& start, const tc::Tensor& end) {
  if (e.rank() != 2 || e.cols() != K || e.rows() == 0)
    throw ContractError("crf: emissions must be n x 4 with n >= 1, got " + tc::shape_str(e.shape()));
  if (trans.size() != K * K || start.size() != K || end.size() != K)
    throw ContractError("crf: expected 4x4 transitions and 4-vector start/end scores");
}

/// log alpha_t(y), alpha_1 = start + e_1.
inline std::vector<std::array<double, K>> forward_scores(const tc::Tensor& e, const tc::Tensor& trans,
                                                         const tc::Tensor& start) {
  const std::size_t n = e.rows();
  std::vector<std::array<double, K>> a(n);
  for (std::size_t y = 0; y < K; ++y) a[0][y] = start[y] + e.at(0, y);
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t y2 = 0; y2 < K; ++y2) {
      std::array<double, K> v;
      for (std::size_t y = 0; y < K; ++y) v[y] = a[t - 1][y] + trans[y * K + y2];
      a[t][y2] = lse(v.data(), K) + e.at(t, y2);
    }
  return a;
}

/// log beta_t(y): score of completing the path from tag y at t, excluding e_t.
inline std::vector<std::array<double, K>> backward_scores(const tc::Tensor& e, const tc::Tensor& trans,
                                                          const tc::Tensor& end) {
  const std::size_t n = e.rows();
  std::vector<std::array<double, K>> b(n);
  for (std::size_t y = 0; y < K; ++y) b[n - 1][y] = end[y];
  for (std::size_t t = n - 1; t-- > 0;)
    for (std::size_t y = 0; y < K; ++y) {
      std::array<double, K> v;
      for (std::size_t y2 = 0; y2 < K; ++y2) v[y2] = trans[y * K + y2] + e.at(t + 1, y2) + b[t + 1][y2];
      b[t][y] = lse(v.data(), K);
    }
  return b;
}

inline double log_z_from(const std::array<double, K>& last_alpha, const tc::Tensor& end) {
  std::array<double, K> v;
  for (std::size_t y = 0; y < K; ++y) v[y] = last_alpha[y] + end[y];
  return lse(v.data(), K);
}

}  // namespace crf_detail

/// log Z by the forward algorithm.
inline double crf_log_partition(const tc::Tensor& e, const tc::Tensor& trans, const tc::Tensor& start,
                                const tc::Tensor& end) {
  crf_detail::check_shapes(e, trans, start, end);
  return crf_detail::log_z_from(crf_detail::forward_scores(e, trans, start).back(), end);
}

inline double crf_path_score(const tc::Tensor& e, const tc::Tensor& trans, const tc::Tensor& start,
                             const tc::Tensor& end, const TagSequence& y) {
  crf_detail::check_shapes(e, trans, start, end);
  if (y.size() != e.rows())
    throw ContractError("crf: tag sequence length " + std::to_string(y.size()) + " does not match " +
                        std::to_string(e.rows()) + " emission rows");
  constexpr std::size_t K = kNumTags;
  for (Tag g : y)
    if (tag_index(g) >= K) throw ContractError("crf: tag index " + std::to_string(tag_index(g)) + " out of range");
  double s = start[tag_index(y.front())] + end[tag_index(y.back())];
  for (std::size_t t = 0; t < y.size(); ++t) {
    s += e.at(t, tag_index(y[t]));
    if (t + 1 < y.size()) s += trans[tag_index(y[t]) * K + tag_index(y[t + 1])];
  }
  return s;
}

/// Negative log-likelihood of the gold path, log Z - score(gold), as one tape
/// node. The backward pass uses forward-backward marginals.
inline tc::Var crf_nll(tc::Var emissions, tc::Var trans, tc::Var start, tc::Var end, const TagSequence& gold) {
  using namespace crf_detail;
  const tc::Tensor& e = emissions.value();
  check_shapes(e, trans.value(), start.value(), end.value());
  const double score = crf_path_score(e, trans.value(), start.value(), end.value(), gold);
  const double log_z = crf_log_partition(e, trans.value(), start.value(), end.value());
  return emissions.tape->record(
      "crf_nll", tc::Tensor::scalar(log_z - score), {emissions, trans, start, end},
      [ei = emissions.id, ti = trans.id, si = start.id, ni = end.id, gold, log_z](tc::Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const tc::Tensor& ev = tp.value(ei);
        const tc::Tensor& tv = tp.value(ti);
        const std::size_t n = ev.rows();
        const auto a = forward_scores(ev, tv, tp.value(si));
        const auto b = backward_scores(ev, tv, tp.value(ni));
        if (tp.requires_grad(ei)) {
          tc::Tensor& ge = tp.grad_buffer(ei);
          for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t y = 0; y < K; ++y) ge.at(t, y) += g * std::exp(a[t][y] + b[t][y] - log_z);
            ge.at(t, tag_index(gold[t])) -= g;
          }
        }
        if (tp.requires_grad(ti)) {
          tc::Tensor& gt = tp.grad_buffer(ti);
          for (std::size_t t = 0; t + 1 < n; ++t) {
            for (std::size_t y = 0; y < K; ++y)
              for (std::size_t y2 = 0; y2 < K; ++y2)
                gt[y * K + y2] += g * std::exp(a[t][y] + tv[y * K + y2] + ev.at(t + 1, y2) + b[t + 1][y2] - log_z);
            gt[tag_index(gold[t]) * K + tag_index(gold[t + 1])] -= g;
          }
        }
        if (tp.requires_grad(si)) {
          tc::Tensor& gs = tp.grad_buffer(si);
          for (std::size_t y = 0; y < K; ++y) gs[y] += g * std::exp(a[0][y] + b[0][y] - log_z);
          gs[tag_index(gold.front())] -= g;
        }
        if (tp.requires_grad(ni)) {
          tc::Tensor& gn = tp.grad_buffer(ni);
          for (std::size_t y = 0; y < K; ++y) gn[y] += g * std::exp(a[n - 1][y] + b[n - 1][y] - log_z);
          gn[tag_index(gold.back())] -= g;
        }
      });
}

/// Exact argmax path. Ties go to the lower tag index at every comparison.
inline TagSequence viterbi_decode(const tc::Tensor& e, const tc::Tensor& trans, const tc::Tensor& start,
                                  const tc::Tensor& end) {
  constexpr std::size_t K = kNumTags;
  crf_detail::check_shapes(e, trans, start, end);
  const std::size_t n = e.rows();
  std::vector<std::array<double, K>> d(n);
  std::vector<std::array<std::uint8_t, K>> bp(n);
  for (std::size_t y = 0; y < K; ++y) d[0][y] = start[y] + e.at(0, y);
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t y2 = 0; y2 < K; ++y2) {
      std::size_t best = 0;
      double bv = d[t - 1][0] + trans[y2];
      for (std::size_t y = 1; y < K; ++y) {
        const double v = d[t - 1][y] + trans[y * K + y2];
        if (v > bv) bv = v, best = y;
      }
      d[t][y2] = bv + e.at(t, y2);
      bp[t][y2] = static_cast<std::uint8_t>(best);
    }
  std::size_t y = 0;
  double bv = d[n - 1][0] + end[0];
  for (std::size_t k = 1; k < K; ++k)
    if (d[n - 1][k] + end[k] > bv) bv = d[n - 1][k] + end[k], y = k;
  TagSequence out(n);
  for (std::size_t t = n; t-- > 0;) {
    out[t] = tag_from_index(y);
    if (t > 0) y = bp[t][y];
  }
  return out;
}

/// Emission projection plus transition, start and end scores under "crf.*".
class CrfHead {
 public:
  CrfHead() = default;
  explicit CrfHead(std::size_t in_dim) : in_dim_(in_dim) {}

  void init(tc::ParamStore& ps, tc::Rng& rng) const {
    ps.add("crf.emit.w", tc::linear_init({in_dim_, kNumTags}, in_dim_, rng));
    ps.add("crf.emit.b", tc::linear_init({kNumTags}, in_dim_, rng));
    ps.add("crf.trans", tc::Tensor({kNumTags, kNumTags}));
    ps.add("crf.start", tc::Tensor({kNumTags}));
    ps.add("crf.end", tc::Tensor({kNumTags}));
  }

  tc::Var emissions(tc::Tape& t, tc::ParamStore& ps, tc::Var h) const {
    return tc::add_bias(tc::matmul(h, t.param(ps.get("crf.emit.w"))), t.param(ps.get("crf.emit.b")));
  }

  tc::Var loss(tc::Tape& t, tc::ParamStore& ps, tc::Var emissions, const TagSequence& gold) const {
    return crf_nll(emissions, t.param(ps.get("crf.trans")), t.param(ps.get("crf.start")), t.param(ps.get("crf.end")),
                   gold);
  }

  TagSequence decode(const tc::ParamStore& ps, const tc::Tensor& emissions) const {
    return viterbi_decode(emissions, ps.get("crf.trans").value, ps.get("crf.start").value, ps.get("crf.end").value);
  }

 private:
  std::size_t in_dim_ = 0;
};

}  // namespace formlink
