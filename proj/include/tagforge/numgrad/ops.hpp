#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tagforge/error.hpp"
#include "tagforge/numgrad/tape.hpp"
#include "tagforge/numgrad/tensor.hpp"
#include "tagforge/rng.hpp"

// Differentiable operations. Inputs and outputs are 2-D unless noted; each
// op records its output and gradient rule on the inputs' tape.
namespace tagforge::numgrad {

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (!t.is_matrix()) throw Error(ErrorKind::Shape, std::string(op) + " expects a matrix, got " + shape_str(t.shape));
}

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw Error(ErrorKind::Shape, std::string(op) + ": " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

inline void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace detail

inline Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::require_same(x, y, "add");
  Tensor out = x;
  detail::add_into(out, y);
  return a.tape->record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) detail::add_into(t.grad(ia), g);
    if (t.requires_grad(ib)) detail::add_into(t.grad(ib), g);
  });
}

inline Var sub(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::require_same(x, y, "sub");
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= y.data[i];
  return a.tape->record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) detail::add_into(t.grad(ia), g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
    }
  });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::require_same(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= y.data[i];
  return a.tape->record(std::move(out), {a, b}, [ia = a.id, ib = b.id](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * x.data[i];
    }
  });
}

inline Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data) v *= s;
  return a.tape->record(std::move(out), {a}, [ia = a.id, s](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
  });
}

// a[m x n] + bias[n], broadcast over rows.
inline Var add_bias(Var a, Var bias) {
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  detail::require_matrix(x, "add_bias");
  if (b.size() != x.cols()) {
    throw Error(ErrorKind::Shape, "add_bias: " + shape_str(x.shape) + " vs " + shape_str(b.shape));
  }
  Tensor out = x;
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += b.data[j];
  }
  return a.tape->record(std::move(out), {a, bias}, [ia = a.id, ib = bias.id, m, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) detail::add_into(t.grad(ia), g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
      }
    }
  });
}

inline Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (!x.is_matrix() || !y.is_matrix() || x.shape[1] != y.shape[0]) {
    throw Error(ErrorKind::Shape, "matmul: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  }
  const std::size_t m = x.shape[0], k = x.shape[1], n = y.shape[1];
  Tensor out = Tensor::matrix(m, n);
  kernel::gemm(x.data.data(), y.data.data(), out.data.data(), m, k, n, false);
  return a.tape->record(std::move(out), {a, b}, [ia = a.id, ib = b.id, m, k, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      kernel::gemm_nt(g.data.data(), t.value(ib).data.data(), t.grad(ia).data.data(), m, n, k, true);
    }
    if (t.requires_grad(ib)) {
      kernel::gemm_tn(t.value(ia).data.data(), g.data.data(), t.grad(ib).data.data(), m, k, n, true);
    }
  });
}

inline Var transpose(Var a) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "transpose");
  const std::size_t m = x.shape[0], n = x.shape[1];
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = x.data[i * n + j];
  }
  return a.tape->record(std::move(out), {a}, [ia = a.id, m, n](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += g.data[j * m + i];
    }
  });
}

inline Var reshape(Var a, Shape shape) {
  const Tensor& x = a.value();
  if (shape_size(shape) != x.size()) {
    throw Error(ErrorKind::Shape, "reshape: " + shape_str(x.shape) + " to " + shape_str(shape));
  }
  Tensor out(std::move(shape), x.data);
  return a.tape->record(std::move(out), {a}, [ia = a.id](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
  });
}

// Joins matrices with equal row counts side by side.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::Shape, "concat_cols of nothing");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    detail::require_matrix(x, "concat_cols");
    if (x.rows() != m) {
      throw Error(ErrorKind::Shape, "concat_cols: " + shape_str(parts[0].value().shape) + " vs " + shape_str(x.shape));
    }
    offsets.push_back(n);
    n += x.cols();
  }
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& x = parts[p].value();
    const std::size_t w = x.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(i * w),
                x.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * w),
                out.data.begin() + static_cast<std::ptrdiff_t>(i * n + offsets[p]));
    }
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  return parts[0].tape->record(std::move(out), parts, [ids, offsets, m, n](Tape& t, const Tensor& g) {
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (!t.requires_grad(ids[p])) continue;
      Tensor& gp = t.grad(ids[p]);
      const std::size_t w = gp.cols();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) gp.data[i * w + j] += g.data[i * n + offsets[p] + j];
      }
    }
  });
}

// Stacks matrices with equal column counts.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::Shape, "concat_rows of nothing");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    detail::require_matrix(x, "concat_rows");
    if (x.cols() != n) {
      throw Error(ErrorKind::Shape, "concat_rows: " + shape_str(parts[0].value().shape) + " vs " + shape_str(x.shape));
    }
    offsets.push_back(m);
    m += x.rows();
  }
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& x = parts[p].value();
    std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offsets[p] * n));
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id);
  return parts[0].tape->record(std::move(out), parts, [ids, offsets, n](Tape& t, const Tensor& g) {
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (!t.requires_grad(ids[p])) continue;
      Tensor& gp = t.grad(ids[p]);
      const std::size_t base = offsets[p] * n;
      for (std::size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += g.data[base + i];
    }
  });
}

inline Var slice_cols(Var a, std::size_t start, std::size_t len) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "slice_cols");
  if (start + len > x.cols()) {
    throw Error(ErrorKind::Shape, "slice_cols [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                      ") of " + shape_str(x.shape));
  }
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::matrix(m, len);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < len; ++j) out.data[i * len + j] = x.data[i * n + start + j];
  }
  return a.tape->record(std::move(out), {a}, [ia = a.id, m, n, start, len](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < len; ++j) ga.data[i * n + start + j] += g.data[i * len + j];
    }
  });
}

inline Var slice_rows(Var a, std::size_t start, std::size_t len) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "slice_rows");
  if (start + len > x.rows()) {
    throw Error(ErrorKind::Shape, "slice_rows [" + std::to_string(start) + ", " + std::to_string(start + len) +
                                      ") of " + shape_str(x.shape));
  }
  const std::size_t n = x.cols();
  Tensor out(Shape{len, n},
             std::vector<double>(x.data.begin() + static_cast<std::ptrdiff_t>(start * n),
                                 x.data.begin() + static_cast<std::ptrdiff_t>((start + len) * n)));
  return a.tape->record(std::move(out), {a}, [ia = a.id, start, n](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[start * n + i] += g.data[i];
  });
}

/// out[i] = a[index[i]]; repeated indices accumulate gradient.
inline Var gather_rows(Var a, std::vector<int> index) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "gather_rows");
  const std::size_t n = x.cols();
  Tensor out = Tensor::matrix(index.size(), n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= x.rows()) {
      throw Error(ErrorKind::Shape, "gather_rows: index " + std::to_string(index[i]) + " outside " + shape_str(x.shape));
    }
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(index[i]) * n), n,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return a.tape->record(std::move(out), {a}, [ia = a.id, index = std::move(index), n](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < index.size(); ++i) {
      double* dst = ga.data.data() + static_cast<std::size_t>(index[i]) * n;
      const double* src = g.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

inline Var embedding_gather(Var table, const std::vector<int>& ids) { return gather_rows(table, ids); }

/// Softmax along `axis` (0 = down columns, 1 = across rows), computed with
/// max subtraction.
inline Var softmax(Var a, int axis = 1) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "softmax");
  if (axis != 0 && axis != 1) throw Error(ErrorKind::Shape, "softmax axis must be 0 or 1");
  const std::size_t m = x.rows(), n = x.cols();
  // Lines are rows (axis 1) or columns (axis 0); stride walks along a line.
  const std::size_t lines = axis == 1 ? m : n;
  const std::size_t len = axis == 1 ? n : m;
  const std::size_t stride = axis == 1 ? 1 : n;
  auto base = [=](std::size_t l) { return axis == 1 ? l * n : l; };
  Tensor out = x;
  for (std::size_t l = 0; l < lines; ++l) {
    double* p = out.data.data() + base(l);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, p[k * stride]);
    double s = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      p[k * stride] = std::exp(p[k * stride] - mx);
      s += p[k * stride];
    }
    for (std::size_t k = 0; k < len; ++k) p[k * stride] /= s;
  }
  std::size_t out_id = a.tape->size();
  return a.tape->record(std::move(out), {a}, [ia = a.id, out_id, lines, len, stride, base](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(out_id);
    Tensor& ga = t.grad(ia);
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t b = base(l);
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += g.data[b + k * stride] * y.data[b + k * stride];
      for (std::size_t k = 0; k < len; ++k) {
        ga.data[b + k * stride] += y.data[b + k * stride] * (g.data[b + k * stride] - dot);
      }
    }
  });
}

/// Row softmax restricted to columns with key_valid[j] set; excluded columns
/// get weight exactly 0 (the -inf pre-softmax convention). A row with no
/// valid column yields zeros and a tape warning.
inline Var masked_softmax_rows(Var a, const std::vector<bool>& key_valid) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "masked_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (key_valid.size() != n) {
    throw Error(ErrorKind::Shape, "masked_softmax_rows: mask of " + std::to_string(key_valid.size()) +
                                      " for " + shape_str(x.shape));
  }
  bool any_valid = std::find(key_valid.begin(), key_valid.end(), true) != key_valid.end();
  if (!any_valid && m > 0) a.tape->warn("attention query with every key masked; output set to 0");
  Tensor out = Tensor::matrix(m, n);
  for (std::size_t i = 0; i < m && any_valid; ++i) {
    const double* xi = x.data.data() + i * n;
    double* yi = out.data.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (key_valid[j]) mx = std::max(mx, xi[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (key_valid[j]) {
        yi[j] = std::exp(xi[j] - mx);
        s += yi[j];
      }
    }
    for (std::size_t j = 0; j < n; ++j) yi[j] /= s;
  }
  std::size_t out_id = a.tape->size();
  return a.tape->record(std::move(out), {a}, [ia = a.id, out_id, m, n](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(out_id);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.data[i * n + j] * y.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += y.data[i * n + j] * (g.data[i * n + j] - dot);
    }
  });
}

/// Per-row normalization to zero mean / unit variance, then gamma * x + beta.
inline Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5) {
  const Tensor& x = a.value();
  detail::require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw Error(ErrorKind::Shape, "layer_norm: gamma/beta " + shape_str(gamma.value().shape) + " for " +
                                      shape_str(x.shape));
  }
  const Tensor& gm = gamma.value();
  const Tensor& bt = beta.value();
  Tensor out = Tensor::matrix(m, n);
  Tensor xhat = Tensor::matrix(m, n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.data.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xi[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      double h = (xi[j] - mean) * inv_std[i];
      xhat.data[i * n + j] = h;
      out.data[i * n + j] = gm.data[j] * h + bt.data[j];
    }
  }
  return a.tape->record(
      std::move(out), {a, gamma, beta},
      [ia = a.id, ig = gamma.id, ib = beta.id, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& t, const Tensor& g) {
        const Tensor& gm = t.value(ig);
        if (t.requires_grad(ig)) {
          Tensor& gg = t.grad(ig);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gg.data[j] += g.data[i * n + j] * xhat.data[i * n + j];
          }
        }
        if (t.requires_grad(ib)) {
          Tensor& gb = t.grad(ib);
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
          }
        }
        if (t.requires_grad(ia)) {
          Tensor& ga = t.grad(ia);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              double d = g.data[i * n + j] * gm.data[j];
              mean_d += d;
              mean_dx += d * xhat.data[i * n + j];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              double d = g.data[i * n + j] * gm.data[j];
              ga.data[i * n + j] += inv_std[i] * (d - mean_d - xhat.data[i * n + j] * mean_dx);
            }
          }
        }
      });
}

namespace detail {

template <typename F, typename DF>
Var unary(Var a, F f, DF df_from_y) {
  Tensor out = a.value();
  for (double& v : out.data) v = f(v);
  std::size_t out_id = a.tape->size();
  return a.tape->record(std::move(out), {a}, [ia = a.id, out_id, df_from_y](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(out_id);
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * df_from_y(x.data[i], y.data[i]);
  });
}

}  // namespace detail

inline Var relu(Var a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

/// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when not
/// training or p == 0.
inline Var dropout(Var a, double p, Pcg32& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::Config, "dropout probability must lie in [0, 1)");
  if (!training || p == 0.0) return a;
  const Tensor& x = a.value();
  Tensor mask(x.shape, 0.0);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& v : mask.data) v = rng.uniform() < p ? 0.0 : keep_scale;
  Var m = a.tape->constant(std::move(mask));
  return mul(a, m);
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.tape->record(Tensor::scalar(s), {a}, [ia = a.id](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad(ia);
    for (double& v : ga.data) v += g.data[0];
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Mean cross-entropy of row-wise softmax(logits) against integer labels,
/// over rows whose label differs from `ignore_label`. With every row ignored
/// the loss is 0, gradients are 0, and the tape carries a warning.
inline Var cross_entropy_masked(Var logits, const std::vector<int>& labels, int ignore_label = -1) {
  const Tensor& x = logits.value();
  detail::require_matrix(x, "cross_entropy_masked");
  const std::size_t m = x.rows(), n = x.cols();
  if (labels.size() != m) {
    throw Error(ErrorKind::Shape, "cross_entropy_masked: " + std::to_string(labels.size()) + " labels for " +
                                      shape_str(x.shape));
  }
  std::size_t count = 0;
  for (int l : labels) {
    if (l == ignore_label) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= n) {
      throw Error(ErrorKind::Shape, "cross_entropy_masked: label " + std::to_string(l) + " outside " + shape_str(x.shape));
    }
    ++count;
  }
  if (count == 0) {
    logits.tape->warn("cross_entropy_masked: every label ignored; loss defined as 0");
    return logits.tape->record(Tensor::scalar(0.0), {logits}, [](Tape&, const Tensor&) {});
  }
  Tensor probs = Tensor::matrix(m, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] == ignore_label) continue;
    const double* xi = x.data.data() + i * n;
    double mx = *std::max_element(xi, xi + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(xi[j] - mx);
    double lse = mx + std::log(s);
    loss += lse - xi[labels[i]];
    for (std::size_t j = 0; j < n; ++j) probs.data[i * n + j] = std::exp(xi[j] - lse);
  }
  const double inv = 1.0 / static_cast<double>(count);
  return logits.tape->record(
      Tensor::scalar(loss * inv), {logits},
      [il = logits.id, probs = std::move(probs), labels, ignore_label, inv, n](Tape& t, const Tensor& g) {
        Tensor& gl = t.grad(il);
        const double s = g.data[0] * inv;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (labels[i] == ignore_label) continue;
          for (std::size_t j = 0; j < n; ++j) {
            double d = probs.data[i * n + j] - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0);
            gl.data[i * n + j] += s * d;
          }
        }
      });
}

}  // namespace tagforge::numgrad
