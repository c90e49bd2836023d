#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <numeric>

#include "formlink/linker/entity.hpp"
#include "formlink/linker/scoring.hpp"
#include "formlink/tensorcore/grad_check.hpp"
#include "test_util.hpp"

using namespace formlink;
using Catch::Matchers::WithinAbs;

namespace {

EntityEncoderConfig small_cfg(bool positions = true) {
  EntityEncoderConfig c;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.max_positions = 6;
  c.use_positions = positions;
  return c;
}

double dot_mat(const tc::Tensor& a, const tc::Tensor& m, const tc::Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s += a[i] * m.at(i, j) * b[j];
  return s;
}

double score_of(const tc::Tensor& a, const tc::Tensor& m, const tc::Tensor& b) {
  tc::Tape t;
  return score_link(t.constant(a), t.constant(b), t.constant(m)).value()[0];
}

double loss_of(const std::vector<double>& scores) {
  tc::Tape t;
  return neg_sampling_loss(t.constant(tc::Tensor({scores.size(), 1}, scores))).value()[0];
}

}  // namespace

TEST_CASE("encode_entity") {
  CHECK(EntityEncoderConfig{}.layers == 3);
  tc::ParamStore ps;
  EntityEncoder enc(small_cfg());
  tc::Rng rng = tc::make_stream(1, "entity");
  enc.init(ps, rng);
  CHECK(ps.get("link.alpha").value != ps.get("link.beta").value);
  tc::Tensor feats = testutil::random_tensor({12, 8}, rng);

  SECTION("one d-wide row for any span length, including spans beyond the position table") {
    for (std::size_t k : {1u, 3u, 7u, 12u}) {
      tc::Tape t;
      CHECK(enc.encode(t, ps, t.constant(feats), {0, k}).shape() == tc::Shape{1, 8});
    }
    tc::Tape t;
    CHECK(enc.encode_all(t, ps, t.constant(feats), {{0, 2}, {2, 3}, {3, 12}}).shape() == tc::Shape{3, 8});
    CHECK_THROWS_AS(enc.encode(t, ps, t.constant(feats), {4, 4}), ContractError);
    CHECK_THROWS_AS(enc.encode(t, ps, t.constant(feats), {10, 13}), ContractError);
  }
  SECTION("features outside the span have no effect") {
    tc::Tensor other = feats;
    for (std::size_t r : {0u, 1u, 2u, 9u, 10u, 11u})
      for (std::size_t c = 0; c < 8; ++c) other.at(r, c) += 5.0;
    tc::Tape t;
    CHECK(enc.encode(t, ps, t.constant(feats), {3, 9}).value() == enc.encode(t, ps, t.constant(other), {3, 9}).value());
  }
  SECTION("attention rows sum to one in every layer and head") {
    AttentionTrace trace;
    tc::Tape t;
    enc.encode(t, ps, t.constant(feats), {2, 7}, &trace);
    REQUIRE(trace.layers.size() == 2);
    for (const auto& layer : trace.layers) {
      REQUIRE(layer.size() == 2);
      for (const auto& a : layer) {
        REQUIRE(a.shape() == tc::Shape{7, 7});
        for (std::size_t r = 0; r < 7; ++r) {
          double s = 0;
          for (std::size_t c = 0; c < 7; ++c) s += a.at(r, c);
          REQUIRE_THAT(s, WithinAbs(1.0, 1e-10));
        }
      }
    }
  }
}

TEST_CASE("encode_entity without positions is invariant to interior order") {
  tc::ParamStore ps;
  EntityEncoder enc(small_cfg(false));
  tc::Rng rng = tc::make_stream(2, "entity");
  enc.init(ps, rng);
  tc::Tensor feats = testutil::random_tensor({5, 8}, rng);
  tc::Tensor perm({5, 8});
  const std::size_t order[5] = {3, 0, 4, 1, 2};
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 8; ++c) perm.at(r, c) = feats.at(order[r], c);
  tc::Tape t;
  tc::Tensor a = enc.encode(t, ps, t.constant(feats), {0, 5}).value();
  tc::Tensor b = enc.encode(t, ps, t.constant(perm), {0, 5}).value();
  for (std::size_t c = 0; c < 8; ++c) CHECK_THAT(a[c], WithinAbs(b[c], 1e-12));

  // with learned positions the same permutation is visible
  tc::ParamStore ps2;
  EntityEncoder enc2(small_cfg(true));
  enc2.init(ps2, rng);
  tc::Tensor c1 = enc2.encode(t, ps2, t.constant(feats), {0, 5}).value();
  tc::Tensor c2 = enc2.encode(t, ps2, t.constant(perm), {0, 5}).value();
  CHECK(c1 != c2);
}

TEST_CASE("score_link") {
  tc::Rng rng = tc::make_stream(3, "score");
  const std::size_t d = 6;
  tc::Tensor eye({d, d});
  for (std::size_t i = 0; i < d; ++i) eye.at(i, i) = 1.0;
  tc::Tensor a = testutil::random_tensor({1, d}, rng), b = testutil::random_tensor({1, d}, rng);
  double dot = 0;
  for (std::size_t i = 0; i < d; ++i) dot += a[i] * b[i];
  CHECK_THAT(score_of(a, eye, b), WithinAbs(dot, 1e-14));
  CHECK(score_of(a, eye, b) == score_of(b, eye, a));
  tc::Tensor m = testutil::random_tensor({d, d}, rng);
  CHECK(score_of(tc::Tensor({1, d}), m, b) == 0.0);
  CHECK_THROWS_AS(score_of(a, m, testutil::random_tensor({1, d + 1}, rng)), ContractError);

  SECTION("antisymmetric part identity on random triples") {
    for (int rep = 0; rep < 100; ++rep) {
      tc::Tensor fi = testutil::random_tensor({1, d}, rng), fj = testutil::random_tensor({1, d}, rng);
      tc::Tensor mm = testutil::random_tensor({d, d}, rng);
      tc::Tensor anti({d, d}), sym({d, d});
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          anti.at(i, j) = mm.at(i, j) - mm.at(j, i);
          sym.at(i, j) = mm.at(i, j) + mm.at(j, i);
        }
      const double diff = score_of(fi, mm, fj) - score_of(fj, mm, fi);
      REQUIRE_THAT(diff, WithinAbs(dot_mat(fi, anti, fj), 1e-10));
      REQUIRE(diff != 0.0);
      REQUIRE_THAT(score_of(fi, sym, fj), WithinAbs(score_of(fj, sym, fi), 1e-10));
    }
  }
  SECTION("score matrix agrees with pairwise scores") {
    tc::Tensor f = testutil::random_tensor({4, d}, rng);
    tc::Tape t;
    tc::Tensor s = link_scores(t.constant(f), t.constant(m)).value();
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        tc::Tensor fi({1, d}), fj({1, d});
        for (std::size_t c = 0; c < d; ++c) fi[c] = f.at(i, c), fj[c] = f.at(j, c);
        CHECK_THAT(s.at(i, j), WithinAbs(dot_mat(fi, m, fj), 1e-12));
      }
  }
}

TEST_CASE("sample_negatives") {
  tc::Rng rng = tc::make_stream(4, "neg");
  CHECK(sample_negatives(1, {0}, 3, 50, rng) == std::vector<std::size_t>{2});
  CHECK(sample_negatives(0, {1, 2}, 3, 50, rng).empty());

  auto big = sample_negatives(5, {7}, 62, 50, rng);
  REQUIRE(big.size() == 50);
  std::set<std::size_t> uniq(big.begin(), big.end());
  CHECK(uniq.size() == 50);
  CHECK(uniq.count(5) == 0);
  CHECK(uniq.count(7) == 0);
  for (auto e : uniq) CHECK(e < 62);

  tc::Rng r1 = tc::make_stream(9, "neg"), r2 = tc::make_stream(9, "neg");
  CHECK(sample_negatives(0, {1}, 40, 10, r1) == sample_negatives(0, {1}, 40, 10, r2));

  std::map<std::size_t, int> freq;
  for (int i = 0; i < 4000; ++i) ++freq[sample_negatives(0, {1}, 6, 1, rng).at(0)];
  REQUIRE(freq.size() == 4);
  for (auto [e, n] : freq) {
    INFO("entity " << e);
    CHECK(n > 800);
    CHECK(n < 1200);
  }
}

TEST_CASE("neg_sampling_loss") {
  CHECK_THAT(loss_of({0.3, 0.3}), WithinAbs(std::log(2.0), 1e-15));
  std::vector<double> dominant(51, 0.0);
  dominant[0] = 20.0;
  // log(1 + 50 e^-20): about 1.03e-7
  CHECK_THAT(loss_of(dominant), WithinAbs(std::log1p(50.0 * std::exp(-20.0)), 1e-14));
  CHECK(loss_of(dominant) < 1.1e-7);
  CHECK_THROWS_AS(loss_of({1.0}), ContractError);

  SECTION("matches extended-precision softmax cross-entropy") {
    tc::Rng rng = tc::make_stream(5, "nsl");
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> s(4);
      for (auto& v : s) v = tc::uniform01(rng) * 20.0 - 10.0;
      long double denom = 0;
      for (double v : s) denom += std::exp(static_cast<long double>(v));
      const long double ref = -std::log(std::exp(static_cast<long double>(s[0])) / denom);
      const double l = loss_of(s);
      REQUIRE(l > 0.0);
      REQUIRE_THAT(l, WithinAbs(static_cast<double>(ref), 1e-12));
    }
  }
  SECTION("strictly decreasing in the positive score") {
    std::vector<double> s{-1.0, 0.5, 2.0, -0.3};
    double prev = loss_of(s);
    for (int k = 0; k < 40; ++k) {
      s[0] += 0.25;
      const double cur = loss_of(s);
      REQUIRE(cur < prev);
      REQUIRE(cur > 0.0);
      prev = cur;
    }
  }
  SECTION("link_loss gathers the target column") {
    tc::Rng rng = tc::make_stream(6, "nsl");
    tc::Tensor s = testutil::random_tensor({5, 5}, rng);
    tc::Tape t;
    const double got = link_loss(t.constant(s), 2, 4, {0, 3}).value()[0];
    CHECK_THAT(got, WithinAbs(loss_of({s.at(2, 4), s.at(0, 4), s.at(3, 4)}), 1e-14));
  }
}

TEST_CASE("rank_candidates") {
  CHECK(rank_candidates({{4, -1.0}}).front().id == 4);
  auto r = rank_candidates({{0, 3.0}, {1, 1.0}, {2, 2.0}});
  CHECK(r[0].id == 0);
  CHECK(r[1].id == 2);
  CHECK(r[2].id == 1);
  SECTION("agrees with an argsort oracle including ties") {
    tc::Rng rng = tc::make_stream(7, "rank");
    for (int rep = 0; rep < 300; ++rep) {
      const std::size_t n = 1 + tc::uniform_index(rng, 12);
      std::vector<RankedCandidate> c;
      for (std::size_t i = 0; i < n; ++i)
        c.push_back({static_cast<int>(tc::uniform_index(rng, 100)) * 3 + static_cast<int>(i) % 3,
                     static_cast<double>(tc::uniform_index(rng, 4))});
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      // selection sort by (score desc, id asc)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const auto &a = c[idx[i]], &b = c[idx[j]];
          if (b.score > a.score || (b.score == a.score && b.id < a.id)) std::swap(idx[i], idx[j]);
        }
      auto got = rank_candidates(c);
      for (std::size_t i = 0; i < n; ++i) REQUIRE(got[i].id == c[idx[i]].id);
    }
  }
}

TEST_CASE("gradients through the entity encoder, scores and loss") {
  tc::ParamStore ps;
  EntityEncoder enc(small_cfg());
  tc::Rng rng = tc::make_stream(8, "grad");
  enc.init(ps, rng);
  init_relation(ps, 8, rng);
  tc::Tensor feats = testutil::random_tensor({7, 8}, rng);
  const std::vector<EntitySpan> spans{{0, 2}, {2, 3}, {3, 6}, {6, 7}};
  auto loss = [&](tc::Tape& t) {
    tc::Var f = enc.encode_all(t, ps, t.constant(feats), spans);
    tc::Var s = link_scores(f, t.param(ps.get("link.M")));
    return tc::add(link_loss(s, 0, 1, {2, 3}), link_loss(s, 2, 3, {0, 1}));
  };
  std::vector<std::string> names;
  for (auto& [n, _] : ps) names.push_back(n);
  auto rep = tc::grad_check_params(ps, loss, names, 6);
  INFO(rep.summary());
  CHECK(rep.passed);
  auto rep_f = tc::grad_check(
      [&](tc::Tape& t, tc::Var x) {
        tc::Var f = enc.encode_all(t, ps, x, spans);
        return link_loss(link_scores(f, t.param(ps.get("link.M"))), 1, 2, {0, 3});
      },
      feats);
  INFO(rep_f.summary());
  CHECK(rep_f.passed);
}
