#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "formlink/error.hpp"
#include "formlink/tensorcore/tape.hpp"

namespace formlink::tc {

/// Scalar-valued function of one tensor, built on the supplied tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// How the numeric derivative of one coordinate was taken. A coordinate whose
/// +-eps probes cross a relu kink is measured with a second-order one-sided
/// difference on the smooth side; with kinks on both sides it is skipped.
enum class Difference { central, one_sided, skipped };

struct GradCheckEntry {
  std::string param;  // empty for single-tensor checks
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  Difference method = Difference::central;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t worst_entry = 0;
  double tolerance = 0.0;
  std::size_t one_sided = 0;
  std::size_t skipped = 0;
  bool passed = false;

  std::string summary() const {
    std::ostringstream os;
    os << (passed ? "pass" : "FAIL") << " worst_rel_error=" << worst_rel_error << " at ";
    if (!entries.empty() && !entries[worst_entry].param.empty()) os << entries[worst_entry].param << "[" << worst_index << "]";
    else os << worst_index;
    os << " tol=" << tolerance;
    if (one_sided + skipped > 0) os << " kink-adjacent: " << one_sided << " one-sided, " << skipped << " skipped";
    return os.str();
  }
};

/// Relative error with a unit floor on the denominator, so that coordinates
/// whose true derivative is ~0 are judged on absolute error.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

namespace grad_check_detail {

struct Probe {
  double value = 0.0;
  std::vector<bool> pattern;  // relu activation pattern
};

inline Probe probe(Tape& t, Var out) {
  if (out.value().size() != 1) throw ContractError("grad_check: function is not scalar-valued");
  const double v = out.value()[0];
  if (!std::isfinite(v)) throw NumericError("grad_check: function is not finite at the evaluation point");
  return {v, t.activation_pattern()};
}

/// `at(d)` evaluates the function with the coordinate shifted by d.
inline GradCheckEntry check_coordinate(const std::function<Probe(double)>& at, const Probe& base, std::string param,
                                       std::size_t index, double analytic, double eps) {
  GradCheckEntry e{std::move(param), index, analytic, 0.0, 0.0, Difference::central};
  const Probe plus = at(eps), minus = at(-eps);
  const bool right = plus.pattern == base.pattern, left = minus.pattern == base.pattern;
  if (right && left) {
    e.numeric = (plus.value - minus.value) / (2.0 * eps);
  } else if (right || left) {
    const double h = right ? eps : -eps;
    const Probe& one = right ? plus : minus;
    const Probe two = at(2.0 * h);
    if (two.pattern == base.pattern) {
      e.method = Difference::one_sided;
      e.numeric = (-3.0 * base.value + 4.0 * one.value - two.value) / (2.0 * h);
    } else {
      e.method = Difference::skipped;
    }
  } else {
    e.method = Difference::skipped;
  }
  if (e.method != Difference::skipped) e.rel_error = relative_error(e.analytic, e.numeric);
  return e;
}

inline void add_entry(GradCheckReport& rep, GradCheckEntry e) {
  if (e.method == Difference::skipped) {
    ++rep.skipped;
  } else {
    rep.one_sided += e.method == Difference::one_sided;
    if (e.rel_error > rep.worst_rel_error || rep.entries.size() == rep.skipped) {
      rep.worst_rel_error = e.rel_error;
      rep.worst_index = e.index;
      rep.worst_entry = rep.entries.size();
    }
  }
  rep.entries.push_back(std::move(e));
}

inline void finish(GradCheckReport& rep) {
  rep.passed = rep.entries.size() > rep.skipped && rep.worst_rel_error < rep.tolerance;
}

}  // namespace grad_check_detail

/// Compares the tape gradient of `f` at `point` against finite differences.
inline GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, double eps = 1e-4, double tol = 1e-4) {
  using namespace grad_check_detail;
  Tensor analytic;
  Probe base;
  {
    Tape t;
    Var x = t.leaf(point);
    Var out = f(t, x);
    base = probe(t, out);
    t.backward(out);
    analytic = t.grad(x);
  }
  GradCheckReport rep;
  rep.tolerance = tol;
  Tensor shifted = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    auto at = [&](double d) {
      shifted[i] = point[i] + d;
      Tape t;
      Var out = f(t, t.constant(shifted));
      shifted[i] = point[i];
      return probe(t, out);
    };
    add_entry(rep, check_coordinate(at, base, "", i, analytic[i], eps));
  }
  finish(rep);
  return rep;
}

/// Scalar loss over parameters in a ParamStore, built on the supplied tape.
using ParamLossFn = std::function<Var(Tape&)>;

/// Gradient check over named parameters. Checks at most `per_param` evenly
/// spaced coordinates of each parameter (all of them when it is smaller).
inline GradCheckReport grad_check_params(ParamStore& ps, const ParamLossFn& f, const std::vector<std::string>& names,
                                         std::size_t per_param = 16, double eps = 1e-5, double tol = 1e-4) {
  using namespace grad_check_detail;
  ps.zero_grad();
  Probe base;
  {
    Tape t;
    Var out = f(t);
    base = probe(t, out);
    t.backward(out);
  }
  GradCheckReport rep;
  rep.tolerance = tol;
  for (const auto& name : names) {
    Parameter& p = ps.get(name);
    const Tensor analytic = p.grad;
    const std::size_t n = p.value.size();
    const std::size_t count = std::min(n, per_param);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = count == n ? k : k * n / count;
      const double orig = p.value[i];
      auto at = [&](double d) {
        p.value[i] = orig + d;
        Tape t;
        std::optional<Var> out;
        try {
          out = f(t);
        } catch (...) {
          p.value[i] = orig;
          throw;
        }
        p.value[i] = orig;
        return probe(t, *out);
      };
      add_entry(rep, check_coordinate(at, base, name, i, analytic[i], eps));
    }
  }
  finish(rep);
  return rep;
}

}  // namespace formlink::tc
