#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "formlink/tensorcore/adam.hpp"
#include "formlink/tensorcore/checkpoint.hpp"
#include "formlink/tensorcore/grad_check.hpp"
#include "formlink/tensorcore/ops.hpp"
#include "formlink/tensorcore/random.hpp"
#include "test_util.hpp"

using namespace formlink;
using namespace formlink::tc;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("relu clamps negatives") {
  Tape t;
  Var y = relu(t.constant(Tensor({3}, std::vector<double>{-1, 0, 2})));
  CHECK(y.value().storage() == std::vector<double>{0, 0, 2});
}

TEST_CASE("logsumexp of two equal entries is a + ln 2") {
  for (double a : {-50.0, 0.0, 3.25, 700.0}) {
    Tape t;
    Var y = logsumexp(t.constant(Tensor({2}, std::vector<double>{a, a})), 0);
    CHECK_THAT(y.value()[0], WithinAbs(a + std::log(2.0), 1e-12 * std::max(1.0, std::abs(a))));
  }
}

TEST_CASE("matmul agrees with a naive triple loop") {
  Rng rng = make_stream(3, "matmul");
  Tensor a = testutil::random_tensor({2, 3}, rng);
  Tensor b = testutil::random_tensor({3, 4}, rng);
  Tape t;
  Var c = matmul(t.constant(a), t.constant(b));
  REQUIRE(c.shape() == Shape{2, 4});
  Tensor ref = testutil::naive_matmul(a, b);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK_THAT(c.value()[i], WithinAbs(ref[i], 1e-14));
}

TEST_CASE("shape mismatch names the primitive and both shapes") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({2, 3}));
  CHECK_THROWS_WITH(matmul(a, b), ContainsSubstring("matmul") && ContainsSubstring("[2x3]"));
  CHECK_THROWS_AS(add(a, t.constant(Tensor({3, 2}))), ContractError);
  CHECK_THROWS_WITH(add(a, t.constant(Tensor({3, 2}))), ContainsSubstring("[3x2]"));
}

TEST_CASE("non-finite values are rejected at record time") {
  Tape t;
  CHECK_THROWS_AS(t.constant(Tensor({1}, std::vector<double>{std::nan("")})), NumericError);
  Var big = t.leaf(Tensor({1}, std::vector<double>{1e308}));
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("backward basics") {
  Rng rng = make_stream(1, "backward");
  Tensor x0 = testutil::random_tensor({3, 4}, rng);

  SECTION("sum gives all-ones") {
    Tape t;
    Var x = t.leaf(x0);
    t.backward(sum(x));
    for (double g : t.grad(x).values()) CHECK(g == 1.0);
  }
  SECTION("half sum of squares gives x") {
    Tape t;
    Var x = t.leaf(x0);
    t.backward(scale(sum(mul(x, x)), 0.5));
    for (std::size_t i = 0; i < x0.size(); ++i) CHECK_THAT(t.grad(x)[i], WithinAbs(x0[i], 1e-15));
  }
  SECTION("leaves off the loss path receive zero") {
    Tape t;
    Var x = t.leaf(x0);
    Var unused = t.leaf(x0);
    t.backward(sum(x));
    for (double g : t.grad(unused).values()) CHECK(g == 0.0);
  }
  SECTION("non-scalar loss is a contract error") {
    Tape t;
    Var x = t.leaf(x0);
    CHECK_THROWS_AS(t.backward(relu(x)), ContractError);
  }
  SECTION("a tape backs up only once") {
    Tape t;
    Var x = t.leaf(x0);
    Var l = sum(x);
    t.backward(l);
    CHECK_THROWS_AS(t.backward(l), ContractError);
  }
  SECTION("parameter gradients accumulate into the parameter") {
    Parameter p("w", x0);
    p.zero_grad();
    for (int rep = 0; rep < 2; ++rep) {
      Tape t;
      Var w = t.param(p);
      CHECK(t.param(p).id == w.id);
      t.backward(sum(add(w, w)));
    }
    for (double g : p.grad.values()) CHECK(g == 4.0);
  }
}

TEST_CASE("every primitive passes grad_check on 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& c : testutil::primitive_cases(seed)) {
      auto rep = grad_check(c.fn, c.point, 1e-4, 1e-4);
      INFO(c.name << " seed " << seed << " " << rep.summary());
      CHECK(rep.passed);
    }
  }
}

TEST_CASE("composite function on 3x4 inputs matches finite differences") {
  Rng rng = make_stream(11, "composite");
  Tensor w = testutil::random_tensor({4, 5}, rng);
  Tensor g = testutil::random_tensor({5}, rng);
  Tensor b = testutil::random_tensor({5}, rng);
  ScalarFn f = [&](Tape& t, Var x) {
    Var h = tanh(matmul(x, t.constant(w)));
    h = layer_norm(h, t.constant(g), t.constant(b));
    Var s = softmax(concat({h, sigmoid(x)}));
    return sum(logsumexp(mul(s, h.tape->constant(Tensor({3, 9}, 0.5))), 1));
  };
  auto rep = grad_check(f, testutil::random_tensor({3, 4}, rng));
  INFO(rep.summary());
  CHECK(rep.passed);
}

TEST_CASE("softmax, log_softmax and layer_norm invariants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_stream(seed, "invariants");
    Tensor x = testutil::random_tensor({4, 7}, rng, 5.0);
    Tape t;
    Var xv = t.constant(x);
    const Tensor& s = softmax(xv).value();
    const Tensor& ls = log_softmax(xv).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double tot = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        tot += s.at(r, j);
        CHECK_THAT(ls.at(r, j), WithinAbs(std::log(s.at(r, j)), 1e-10));
      }
      CHECK_THAT(tot, WithinAbs(1.0, 1e-12));
    }
    const Tensor& n = layer_norm(xv, t.constant(Tensor({7}, 1.0)), t.constant(Tensor({7}, 0.0))).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double m = 0.0, v = 0.0;
      for (std::size_t j = 0; j < 7; ++j) m += n.at(r, j);
      m /= 7;
      for (std::size_t j = 0; j < 7; ++j) v += (n.at(r, j) - m) * (n.at(r, j) - m);
      v /= 7;
      CHECK(std::abs(m) < 1e-10);
      CHECK_THAT(v, WithinAbs(1.0, 1e-8));
    }
  }
}

TEST_CASE("dropout is deterministic per seed and identity at rate 0") {
  Rng r0 = make_stream(5, "x");
  Tensor x = testutil::random_tensor({6, 6}, r0);
  auto run = [&](double p) {
    Tape t;
    Rng d = make_stream(9, "dropout");
    return dropout(t.constant(x), p, d).value();
  };
  CHECK(run(0.5) == run(0.5));
  CHECK(run(0.0) == x);
}

TEST_CASE("adam") {
  AdamConfig cfg;
  SECTION("zero gradient from fresh state leaves parameters unchanged") {
    Tensor p({3}, std::vector<double>{1, -2, 3});
    Tensor m, v;
    const Tensor before = p;
    adam_update(p, Tensor({3}), m, v, 1, cfg);
    CHECK(p == before);
  }
  SECTION("first step moves by about lr against the gradient sign") {
    Tensor p({3}, std::vector<double>{0, 0, 0});
    Tensor g({3}, std::vector<double>{0.5, -3.0, 1e-3});
    Tensor m, v;
    adam_update(p, g, m, v, 1, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK_THAT(std::abs(p[i]), WithinAbs(cfg.lr, 1e-7));
      CHECK((p[i] < 0) == (g[i] > 0));
    }
  }
  // With the default betas the momentum term keeps ringing around the
  // optimum for a few hundred steps, so the 100-step check uses beta1 = 0.7.
  auto minimize = [](AdamConfig c, int steps, std::uint64_t seed) {
    Rng rng = make_stream(seed, "adam");
    const Tensor target = testutil::random_tensor({5}, rng);
    ParamStore ps;
    Parameter& x = ps.add("x", testutil::random_tensor({5}, rng));
    AdamState st;
    for (int step = 0; step < steps; ++step) {
      ps.zero_grad();
      Tape t;
      Var d = sub(t.param(x), t.constant(target));
      t.backward(sum(mul(d, d)));
      adam_step(ps, st, c);
    }
    double dist = 0.0;
    for (std::size_t i = 0; i < 5; ++i) dist += (x.value[i] - target[i]) * (x.value[i] - target[i]);
    return std::sqrt(dist);
  };
  SECTION("converges on a convex quadratic in 100 steps") {
    AdamConfig c = cfg;
    c.lr = 0.1;
    c.beta1 = 0.7;
    for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(minimize(c, 100, seed) < 1e-3);
  }
  SECTION("default betas converge given more steps") {
    AdamConfig c = cfg;
    c.lr = 0.05;
    for (std::uint64_t seed = 0; seed < 10; ++seed) CHECK(minimize(c, 300, seed) < 1e-3);
  }
  SECTION("shape mismatch is a contract error") {
    Tensor p({3}), m, v;
    CHECK_THROWS_AS(adam_update(p, Tensor({4}), m, v, 1, cfg), ContractError);
  }
}

TEST_CASE("grad_check reports") {
  Rng rng = make_stream(4, "gc");
  SECTION("sum is exact") {
    // Integer point and a power-of-two step keep the differences exact.
    Tensor point({3, 4});
    for (std::size_t i = 0; i < point.size(); ++i) point[i] = static_cast<double>(i) - 5.0;
    auto rep = grad_check([](Tape&, Var x) { return sum(x); }, point, 0x1p-13);
    CHECK(rep.worst_rel_error == 0.0);
    CHECK(rep.passed);
    auto rnd = grad_check([](Tape&, Var x) { return sum(x); }, testutil::random_tensor({3, 4}, rng));
    CHECK(rnd.worst_rel_error < 1e-10);
  }
  SECTION("softmax cross-entropy passes") {
    std::vector<std::size_t> gold{2, 0, 4};
    ScalarFn ce = [gold](Tape& t, Var logits) {
      Var lp = log_softmax(logits);
      Tensor onehot({3, 5});
      for (std::size_t i = 0; i < 3; ++i) onehot.at(i, gold[i]) = -1.0;
      return sum(mul(lp, t.constant(onehot)));
    };
    auto rep = grad_check(ce, testutil::random_tensor({3, 5}, rng, 3.0));
    INFO(rep.summary());
    CHECK(rep.passed);
  }
  SECTION("a deliberately wrong backward rule fails") {
    ScalarFn broken = [](Tape& t, Var x) {
      Tensor sq(x.shape());
      for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = x.value()[i] * x.value()[i];
      Var y = t.record("bad_square", sq, {x}, [xi = x.id](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        Tensor& gx = tp.grad_buffer(xi);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * tp.value(xi)[i];  // missing factor 2
      });
      return sum(y);
    };
    auto rep = grad_check(broken, testutil::random_tensor({2, 3}, rng, 2.0));
    CHECK_FALSE(rep.passed);
  }
  SECTION("coordinates next to a relu kink use the smooth side") {
    // relu(x) + relu(x - c): coordinate 0 is smooth, coordinate 1 has the kink
    // at 0 inside [x - eps, x], coordinate 2 has kinks on both sides.
    const Tensor c({3}, std::vector<double>{10.0, 10.0, 1.2e-4});
    ScalarFn f = [c](Tape& t, Var x) { return add(sum(relu(x)), sum(relu(sub(x, t.constant(c))))); };
    auto rep = grad_check(f, Tensor({3}, std::vector<double>{0.5, 5e-5, 5e-5}), 1e-4);
    INFO(rep.summary());
    CHECK(rep.passed);
    REQUIRE(rep.entries.size() == 3);
    CHECK(rep.entries[0].method == Difference::central);
    CHECK(rep.entries[1].method == Difference::one_sided);
    CHECK(rep.entries[1].numeric == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(rep.entries[2].method == Difference::skipped);
    CHECK(rep.one_sided == 1);
    CHECK(rep.skipped == 1);
    // a plain central difference at coordinate 1 would read 0.75; a check with
    // nothing measurable does not pass
    const Tensor c1({1}, std::vector<double>{1.2e-4});
    auto all_kinks = grad_check([c1](Tape& t, Var x) { return add(sum(relu(x)), sum(relu(sub(x, t.constant(c1))))); },
                                Tensor({1}, std::vector<double>{5e-5}), 1e-4);
    CHECK(all_kinks.skipped == 1);
    CHECK_FALSE(all_kinks.passed);
  }
  SECTION("non-finite function value is a check error") {
    ScalarFn bad = [](Tape&, Var x) { return sum(scale(x, 1e308)); };
    CHECK_THROWS_AS(grad_check(bad, Tensor({2}, std::vector<double>{1e10, 1e10})), NumericError);
  }
}

TEST_CASE("tensor container round-trips bit-exactly and rejects corruption") {
  Rng rng = make_stream(8, "ckpt");
  TensorContainer c;
  c.tensors.emplace_back("a", testutil::random_tensor({3, 4}, rng));
  c.tensors.emplace_back("b/bias", Tensor({2}, std::vector<double>{-0.0, 1e-310}));
  c.meta["note"] = "x";
  const std::string bytes = serialize_container(c);
  TensorContainer back = parse_container(bytes);
  REQUIRE(back.tensors.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.tensors[i].first == c.tensors[i].first);
    REQUIRE(back.tensors[i].second.shape() == c.tensors[i].second.shape());
    CHECK(std::memcmp(back.tensors[i].second.storage().data(), c.tensors[i].second.storage().data(),
                      c.tensors[i].second.size() * 8) == 0);
  }
  CHECK(serialize_container(back) == bytes);
  CHECK_THROWS_AS(parse_container(bytes.substr(0, bytes.size() - 3)), LoadError);
  CHECK_THROWS_AS(parse_container(bytes.substr(0, 30)), LoadError);
  std::string wrong_version = bytes;
  wrong_version.replace(wrong_version.find(" 1 "), 3, " 9 ");
  CHECK_THROWS_WITH(parse_container(wrong_version), ContainsSubstring("version"));
}
