#pragma once

// Differentiable primitives. Every op checks its shape contract, computes the
// forward value, and registers a backward rule on the inputs' tape.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "formlink/error.hpp"
#include "formlink/tensorcore/tape.hpp"
#include "formlink/tensorcore/tensor.hpp"

namespace formlink::tc {

namespace detail {

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ContractError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}
[[noreturn]] inline void shape_error(const char* op, const Shape& a) {
  throw ContractError(std::string(op) + ": invalid shape " + shape_str(a));
}

inline Tape& same_tape(const char* op, const Var& a, const Var& b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError(std::string(op) + ": inputs on different tapes");
  return *a.tape;
}

/// dst += src, elementwise.
inline void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

/// C (m x n) += A (m x k) * B (k x n), all row-major.
inline void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

/// C (m x k) += A (m x n) * B^T where B is (k x n).
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      c[i * k + p] += s;
    }
  }
}

/// C (k x n) += A^T * B where A is (m x k) and B is (m x n).
inline void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

template <class Fwd, class Deriv>
Var unary(const char* op, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return x.tape->record(op, std::move(out), {x}, [xi = x.id, deriv](Tape& t, std::size_t self) {
    if (!t.requires_grad(xi)) return;
    const Tensor& g = t.grad(self);
    const Tensor& in = t.value(xi);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in[i], y[i]);
  });
}

}  // namespace detail

/// (m x k) * (k x n) -> (m x n)
inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) detail::shape_error("matmul", av.shape(), bv.shape());
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  detail::gemm_nn(m, k, n, av.storage().data(), bv.storage().data(), out.storage().data());
  return t.record("matmul", std::move(out), {a, b}, [ai = a.id, bi = b.id, m, k, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad_buffer(ai);
      detail::gemm_nt(m, n, k, g.storage().data(), tp.value(bi).storage().data(), ga.storage().data());
    }
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad_buffer(bi);
      detail::gemm_tn(m, k, n, tp.value(ai).storage().data(), g.storage().data(), gb.storage().data());
    }
  });
}

inline Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) detail::shape_error("transpose", av.shape());
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  return a.tape->record("transpose", std::move(out), {a}, [ai = a.id, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
  });
}

namespace detail {
template <class F>
Var binary_same_shape(const char* op, Var a, Var b, F f, double sign_b, bool product) {
  Tape& t = same_tape(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_error(op, av.shape(), bv.shape());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return t.record(op, std::move(out), {a, b}, [ai = a.id, bi = b.id, sign_b, product](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      Tensor& ga = tp.grad_buffer(ai);
      if (product) {
        const Tensor& bv2 = tp.value(bi);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      } else {
        accumulate(ga, g);
      }
    }
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad_buffer(bi);
      if (product) {
        const Tensor& av2 = tp.value(ai);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign_b * g[i];
      }
    }
  });
}
}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary_same_shape("add", a, b, [](double x, double y) { return x + y; }, 1.0, false);
}
inline Var sub(Var a, Var b) {
  return detail::binary_same_shape("sub", a, b, [](double x, double y) { return x - y; }, -1.0, false);
}
inline Var mul(Var a, Var b) {
  return detail::binary_same_shape("mul", a, b, [](double x, double y) { return x * y; }, 1.0, true);
}

inline Var scale(Var x, double c) {
  return detail::unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

/// x (.. x d) + bias (d), broadcast over all leading axes.
inline Var add_bias(Var x, Var bias) {
  Tape& t = detail::same_tape("add_bias", x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t d = xv.last();
  if (bv.size() != d || bv.outer() != 1) detail::shape_error("add_bias", xv.shape(), bv.shape());
  Tensor out = xv;
  for (std::size_t r = 0; r < xv.outer(); ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += bv[j];
  return t.record("add_bias", std::move(out), {x, bias}, [xi = x.id, bi = bias.id, d](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(xi)) detail::accumulate(tp.grad_buffer(xi), g);
    if (tp.requires_grad(bi)) {
      Tensor& gb = tp.grad_buffer(bi);
      for (std::size_t r = 0; r < g.size() / d; ++r)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
    }
  });
}

/// Concatenation of 2-D tensors with equal row counts along the last axis.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().value().outer();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape != &t) throw ContractError("concat: inputs on different tapes");
    const Tensor& v = p.value();
    if (v.rank() != 2 || v.rows() != rows) detail::shape_error("concat", parts.front().shape(), v.shape());
    widths.push_back(v.cols());
    total += v.cols();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.storage().data() + r * widths[k], widths[k], out.storage().data() + r * total + off);
    off += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  return t.record("concat", std::move(out), parts, [ids, widths, rows, total](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        Tensor& gk = tp.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) gk[r * widths[k] + j] += g[r * total + o + j];
      }
      o += widths[k];
    }
  });
}

/// Stacks 2-D tensors with equal column counts along the first axis.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t cols = parts.front().value().last();
  std::vector<std::size_t> offsets;
  std::vector<double> data;
  for (const Var& p : parts) {
    if (p.tape != &t) throw ContractError("concat_rows: inputs on different tapes");
    const Tensor& v = p.value();
    if (v.rank() != 2 || v.cols() != cols) detail::shape_error("concat_rows", parts.front().shape(), v.shape());
    offsets.push_back(data.size());
    data.insert(data.end(), v.storage().begin(), v.storage().end());
  }
  const std::size_t rows = data.size() / cols;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  return t.record("concat_rows", Tensor({rows, cols}, std::move(data)), parts,
                  [ids, offsets](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (!tp.requires_grad(ids[k])) continue;
                      Tensor& gk = tp.grad_buffer(ids[k]);
                      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offsets[k] + i];
                    }
                  });
}

/// Rows [begin, end) of a 2-D tensor.
inline Var slice_rows(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || begin >= end || end > xv.rows())
    throw ContractError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for shape " +
                        shape_str(xv.shape()));
  const std::size_t c = xv.cols();
  std::vector<double> data(xv.storage().begin() + begin * c, xv.storage().begin() + end * c);
  return x.tape->record("slice_rows", Tensor({end - begin, c}, std::move(data)), {x},
                        [xi = x.id, off = begin * c](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad(self);
                          Tensor& gx = t.grad_buffer(xi);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += g[i];
                        });
}

/// Columns [begin, end) of a 2-D tensor.
inline Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || begin >= end || end > xv.cols())
    throw ContractError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for shape " +
                        shape_str(xv.shape()));
  const std::size_t r = xv.rows(), c = xv.cols(), w = end - begin;
  Tensor out({r, w});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at(i, j) = xv.at(i, begin + j);
  return x.tape->record("slice_cols", std::move(out), {x}, [xi = x.id, r, c, w, begin](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
  });
}

inline Var relu(Var x) {
  return detail::unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(Var x) {
  return detail::unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline double sigmoid_scalar(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Var sigmoid(Var x) {
  return detail::unary("sigmoid", x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

/// Softmax over the last axis.
inline Var softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.last(), rows = xv.outer();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = xv.row_span(r);
    auto o = out.row_span(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= s;
  }
  return x.tape->record("softmax", std::move(out), {x}, [xi = x.id, d, rows](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
    }
  });
}

/// log(softmax(x)) over the last axis, computed stably.
inline Var log_softmax(Var x) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.last(), rows = xv.outer();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = xv.row_span(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (double v : in) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[j] - lse;
  }
  return x.tape->record("log_softmax", std::move(out), {x}, [xi = x.id, d, rows](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < d; ++j) gs += g[r * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[r * d + j] - std::exp(y[r * d + j]) * gs;
    }
  });
}

/// log-sum-exp of a 2-D tensor along `axis` (0 reduces rows -> 1 x cols,
/// 1 reduces columns -> rows x 1). A 1-D tensor reduces to shape [1].
inline Var logsumexp(Var x, std::size_t axis) {
  const Tensor& xv0 = x.value();
  if (xv0.rank() == 1) {
    if (axis != 0) detail::shape_error("logsumexp", xv0.shape());
    x = x.tape->record("reshape", xv0.reshaped({1, xv0.size()}), {x}, [xi = x.id](Tape& t, std::size_t self) {
      detail::accumulate(t.grad_buffer(xi), t.grad(self).reshaped(t.value(xi).shape()));
    });
    axis = 1;
  }
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || axis > 1) detail::shape_error("logsumexp", xv.shape());
  const std::size_t r = xv.rows(), c = xv.cols();
  const std::size_t groups = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  auto idx = [=](std::size_t gi, std::size_t k) { return axis == 1 ? gi * c + k : k * c + gi; };
  Tensor out(axis == 1 ? Shape{r, 1} : Shape{1, c});
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[idx(gi, k)]);
    double s = 0.0;
    for (std::size_t k = 0; k < len; ++k) s += std::exp(xv[idx(gi, k)] - mx);
    out[gi] = mx + std::log(s);
  }
  return x.tape->record("logsumexp", std::move(out), {x}, [xi = x.id, groups, len, idx](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    const Tensor& in = t.value(xi);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t gi = 0; gi < groups; ++gi)
      for (std::size_t k = 0; k < len; ++k) gx[idx(gi, k)] += g[gi] * std::exp(in[idx(gi, k)] - y[gi]);
  });
}

/// Normalizes each row over the last axis, then applies gain and bias (both of length d).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-10) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.last(), rows = xv.outer();
  if (gain.value().size() != d || bias.value().size() != d)
    detail::shape_error("layer_norm", xv.shape(), gain.value().size() != d ? gain.shape() : bias.shape());
  Tensor normed(xv.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    auto in = xv.row_span(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) normed[r * d + j] = (in[j] - mean) * inv_std[r];
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = normed[r * d + j] * gv[j] + bv[j];
  Tape& t = *x.tape;
  return t.record("layer_norm", std::move(out), {x, gain, bias},
                  [xi = x.id, gi = gain.id, bi = bias.id, d, rows, normed = std::move(normed),
                   inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& gv2 = tp.value(gi);
                    if (tp.requires_grad(gi)) {
                      Tensor& gg = tp.grad_buffer(gi);
                      for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * normed[i];
                    }
                    if (tp.requires_grad(bi)) {
                      Tensor& gb = tp.grad_buffer(bi);
                      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
                    }
                    if (tp.requires_grad(xi)) {
                      Tensor& gx = tp.grad_buffer(xi);
                      const double dd = static_cast<double>(d);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double sum_g = 0.0, sum_gn = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double gn = g[r * d + j] * gv2[j];
                          sum_g += gn;
                          sum_gn += gn * normed[r * d + j];
                        }
                        for (std::size_t j = 0; j < d; ++j) {
                          const double gn = g[r * d + j] * gv2[j];
                          gx[r * d + j] += inv_std[r] * (gn - sum_g / dd - normed[r * d + j] * sum_gn / dd);
                        }
                      }
                    }
                  });
}

/// Gathers rows of `table` (V x d) by index -> (ids.size() x d).
inline Var embedding(Var table, std::vector<std::size_t> ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) detail::shape_error("embedding", tv.shape());
  if (ids.empty()) throw ContractError("embedding: empty index list");
  const std::size_t d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows())
      throw ContractError("embedding: index " + std::to_string(ids[i]) + " out of range for table " + shape_str(tv.shape()));
    std::copy_n(tv.storage().data() + ids[i] * d, d, out.storage().data() + i * d);
  }
  return table.tape->record("embedding", std::move(out), {table},
                            [ti = table.id, ids = std::move(ids), d](Tape& t, std::size_t self) {
                              const Tensor& g = t.grad(self);
                              Tensor& gt = t.grad_buffer(ti);
                              for (std::size_t i = 0; i < ids.size(); ++i)
                                for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += g[i * d + j];
                            });
}

inline Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return x.tape->record("sum", Tensor::scalar(s), {x}, [xi = x.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

inline Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

/// Inverted dropout. With p == 0 the input is returned unchanged.
inline Var dropout(Var x, double p, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
  if (p == 0.0) return x;
  const Tensor& xv = x.value();
  std::vector<double> mask(xv.size());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (double& m : mask) m = keep(rng) ? s : 0.0;
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  return x.tape->record("dropout", std::move(out), {x}, [xi = x.id, mask = std::move(mask)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

/// Same values under a new shape with the same element count.
inline Var reshape(Var x, Shape shape) {
  const Tensor& xv = x.value();
  if (shape_numel(shape) != xv.size()) detail::shape_error("reshape", xv.shape(), shape);
  return x.tape->record("reshape", xv.reshaped(std::move(shape)), {x}, [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

}  // namespace formlink::tc
