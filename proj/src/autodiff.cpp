#include "deepaco/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deepaco/error.hpp"

namespace deepaco::ad {

// ---- Tensor --------------------------------------------------------------

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ShapeError("Tensor: " + std::to_string(values_.size()) + " values for shape (" +
                     std::to_string(rows) + ", " + std::to_string(cols) + ")");
  }
}

Tensor Tensor::column(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(n, 1, std::move(values));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("Tensor::item on shape " + shape_string());
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string Tensor::shape_string() const {
  return "(" + std::to_string(rows_) + ", " + std::to_string(cols_) + ")";
}

// ---- Tape ----------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(ParamStore& store, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.op = "param:" + name;
  node.value = store.at(name).value;
  node.requires_grad = true;
  node.store = &store;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(name, id);
  return Var(this, id);
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError("forward op '" + op + "' produced a non-finite value");
  }
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw std::invalid_argument("op '" + node.op + "' mixes tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::grad(const Var& v) const {
  const auto& node = nodes_.at(v.id());
  if (node.has_grad) return node.grad;
  return Tensor(node.value.rows(), node.value.cols());
}

void Tape::backward(const Var& loss) {
  auto& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + root.value.shape_string());
  }
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad = Tensor();
  }
  root.grad = Tensor::scalar(1.0);
  root.has_grad = true;

  std::vector<Tensor*> grad_in;
  for (int id = loss.id(); id >= 0; --id) {
    auto& node = nodes_[id];
    if (!node.has_grad || !node.requires_grad) continue;
    if (node.store != nullptr) {
      auto& p = node.store->at(node.param_name);
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += node.grad[i];
      continue;
    }
    if (!node.backward) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      auto& in = nodes_[node.inputs[k]];
      if (!in.requires_grad) continue;
      if (!in.has_grad) {
        in.grad = Tensor(in.value.rows(), in.value.cols());
        in.has_grad = true;
      }
      grad_in[k] = &in.grad;
    }
    node.backward(node.value, node.grad, grad_in);
    for (auto* g : grad_in) {
      if (g != nullptr && !g->all_finite()) {
        throw NumericError("backward: non-finite gradient from op '" + node.op + "' (node " +
                           std::to_string(id) + ")");
      }
    }
  }
}

// ---- primitives ----------------------------------------------------------

namespace {

[[noreturn]] void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
  throw ShapeError(op + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

enum class Broadcast { Same, Row, Scalar };

Broadcast broadcast_kind(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Broadcast::Same;
  if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
  shape_fail(op, a, b);
}

inline std::size_t bindex(Broadcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Broadcast::Same: return i;
    case Broadcast::Row: return i % cols;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

// C (r x n) += A (r x k) * B (k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C (r x k) += G (r x n) * B^T, B is (k x n)
void gemm_nt(const double* g, const double* b, double* c, std::size_t r, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* grow = g + i * n;
    double* crow = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      crow[p] += s;
    }
  }
}

// C (k x n) += A^T * G, A is (r x k), G is (r x n)
void gemm_tn(const double* a, const double* g, double* c, std::size_t r, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

// Elementwise op; df(x, y) is the derivative given input x and output y.
template <typename F, typename DF>
Var unary(const char* op, const Var& a, F f, DF df) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const Tensor* xp = &x;
  return a.tape().record(op, std::move(y), {a},
                         [xp, df](const Tensor& out, const Tensor& g, std::span<Tensor*> gi) {
                           if (!gi[0]) return;
                           auto& dx = *gi[0];
                           for (std::size_t i = 0; i < g.size(); ++i)
                             dx[i] += g[i] * df((*xp)[i], out[i]);
                         });
}

void check_segments(const std::string& op, const Tensor& a, const std::vector<int>& segment,
                    std::size_t count) {
  if (segment.size() != a.rows()) {
    throw ShapeError(op + ": " + std::to_string(segment.size()) + " segment ids for " +
                     std::to_string(a.rows()) + " rows");
  }
  for (int s : segment) {
    if (s < 0 || static_cast<std::size_t>(s) >= count) {
      throw ShapeError(op + ": segment id " + std::to_string(s) + " out of range [0, " +
                       std::to_string(count) + ")");
    }
  }
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var add_sub(const char* op, const Var& a, const Var& b, double sign) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const auto kind = broadcast_kind(op, x, y);
  const auto cols = x.cols();
  Tensor out(x.rows(), cols);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + sign * y[bindex(kind, i, cols)];
  return a.tape().record(op, std::move(out), {a, b},
                         [kind, cols, sign](const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
                           if (gi[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                           if (gi[1])
                             for (std::size_t i = 0; i < g.size(); ++i)
                               (*gi[1])[bindex(kind, i, cols)] += sign * g[i];
                         });
}

Var segment_reduce(const char* op, const Var& a, std::vector<int> segment, std::size_t count,
                   bool average) {
  const Tensor& x = a.value();
  check_segments(op, x, segment, count);
  const auto cols = x.cols();
  std::vector<double> weight(count, 0.0);
  for (int s : segment) weight[s] += 1.0;
  for (auto& w : weight) w = (w > 0 && average) ? 1.0 / w : (w > 0 ? 1.0 : 0.0);
  Tensor out(count, cols);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double w = weight[segment[r]];
    double* o = &out(segment[r], 0);
    const double* xr = &x(r, 0);
    for (std::size_t c = 0; c < cols; ++c) o[c] += w * xr[c];
  }
  return a.tape().record(
      op, std::move(out), {a},
      [segment = std::move(segment), weight = std::move(weight), cols](
          const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
        if (!gi[0]) return;
        for (std::size_t r = 0; r < segment.size(); ++r) {
          const double w = weight[segment[r]];
          const double* gr = &g(segment[r], 0);
          double* d = &(*gi[0])(r, 0);
          for (std::size_t c = 0; c < cols; ++c) d[c] += w * gr[c];
        }
      });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) shape_fail("matmul", x, y);
  Tensor out(x.rows(), y.cols());
  gemm_nn(x.data(), y.data(), out.data(), x.rows(), x.cols(), y.cols());
  const Tensor* xp = &x;
  const Tensor* yp = &y;
  return a.tape().record("matmul", std::move(out), {a, b},
                         [xp, yp](const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
                           const auto r = xp->rows(), k = xp->cols(), n = yp->cols();
                           if (gi[0]) gemm_nt(g.data(), yp->data(), gi[0]->data(), r, k, n);
                           if (gi[1]) gemm_tn(xp->data(), g.data(), gi[1]->data(), r, k, n);
                         });
}

Var transpose(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  return a.tape().record("transpose", std::move(out), {a},
                         [](const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
                           if (!gi[0]) return;
                           for (std::size_t i = 0; i < g.rows(); ++i)
                             for (std::size_t j = 0; j < g.cols(); ++j) (*gi[0])(j, i) += g(i, j);
                         });
}

Var add(const Var& a, const Var& b) { return add_sub("add", a, b, 1.0); }
Var sub(const Var& a, const Var& b) { return add_sub("sub", a, b, -1.0); }

Var mul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const auto kind = broadcast_kind("mul", x, y);
  const auto cols = x.cols();
  Tensor out(x.rows(), cols);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[bindex(kind, i, cols)];
  const Tensor* xp = &x;
  const Tensor* yp = &y;
  return a.tape().record(
      "mul", std::move(out), {a, b},
      [kind, cols, xp, yp](const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          const auto j = bindex(kind, i, cols);
          if (gi[0]) (*gi[0])[i] += g[i] * (*yp)[j];
          if (gi[1]) (*gi[1])[j] += g[i] * (*xp)[i];
        }
      });
}

Var scale(const Var& a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(const Var& a, double offset) {
  return unary("add_scalar", a, [offset](double x) { return x + offset; },
               [](double, double) { return 1.0; });
}

Var sigmoid(const Var& a) {
  return unary("sigmoid", a, logistic, [](double, double y) { return y * (1.0 - y); });
}

Var silu(const Var& a) {
  return unary(
      "silu", a, [](double x) { return x * logistic(x); },
      [](double x, double) {
        const double s = logistic(x);
        return s + x * s * (1.0 - s);
      });
}

Var log(const Var& a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a},
                         [](const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
                           if (!gi[0]) return;
                           for (auto& d : gi[0]->values()) d += g[0];
                         });
}

Var mean(const Var& a) {
  const auto n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const auto rows = xv.rows(), cols = xv.cols();
  if (gain.value().rows() != 1 || gain.value().cols() != cols) shape_fail("layer_norm", xv, gain.value());
  if (bias.value().rows() != 1 || bias.value().cols() != cols) shape_fail("layer_norm", xv, bias.value());
  Tensor normed(rows, cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv(r, 0);
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) normed(r, c) = (xr[c] - mu) * inv_std[r];
  }
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = gv[c] * normed(r, c) + bv[c];
  const Tensor* gp = &gv;
  return x.tape().record(
      "layer_norm", std::move(out), {x, gain, bias},
      [normed = std::move(normed), inv_std = std::move(inv_std), gp, rows, cols](
          const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
        std::vector<double> dy(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = &g(r, 0);
          const double* yr = &normed(r, 0);
          if (gi[1])
            for (std::size_t c = 0; c < cols; ++c) (*gi[1])[c] += gr[c] * yr[c];
          if (gi[2])
            for (std::size_t c = 0; c < cols; ++c) (*gi[2])[c] += gr[c];
          if (!gi[0]) continue;
          double mean_dy = 0.0, mean_dy_y = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            dy[c] = gr[c] * (*gp)[c];
            mean_dy += dy[c];
            mean_dy_y += dy[c] * yr[c];
          }
          mean_dy /= static_cast<double>(cols);
          mean_dy_y /= static_cast<double>(cols);
          double* dx = &(*gi[0])(r, 0);
          for (std::size_t c = 0; c < cols; ++c)
            dx[c] += inv_std[r] * (dy[c] - mean_dy - yr[c] * mean_dy_y);
        }
      });
}

Var softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  const auto rows = x.rows(), cols = x.cols();
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x(r, 0);
    const double m = *std::max_element(xr, xr + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (out(r, c) = std::exp(xr[c] - m));
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= z;
  }
  return a.tape().record("softmax_rows", std::move(out), {a},
                         [rows, cols](const Tensor& s, const Tensor& g, std::span<Tensor*> gi) {
                           if (!gi[0]) return;
                           for (std::size_t r = 0; r < rows; ++r) {
                             double dot = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) dot += g(r, c) * s(r, c);
                             for (std::size_t c = 0; c < cols; ++c)
                               (*gi[0])(r, c) += s(r, c) * (g(r, c) - dot);
                           }
                         });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const auto rows = parts.front().rows();
  std::vector<std::size_t> offsets;
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Tensor out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) out(r, offsets[k] + c) = v(r, c);
  }
  return parts.front().tape().record(
      "concat_cols", std::move(out), parts,
      [offsets = std::move(offsets)](const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
        for (std::size_t k = 0; k < gi.size(); ++k) {
          if (!gi[k]) continue;
          auto& d = *gi[k];
          for (std::size_t r = 0; r < d.rows(); ++r)
            for (std::size_t c = 0; c < d.cols(); ++c) d(r, c) += g(r, offsets[k] + c);
        }
      });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  if (begin + count > x.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of shape " + x.shape_string());
  }
  Tensor out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, begin + c);
  return a.tape().record("slice_cols", std::move(out), {a},
                         [begin, count](const Tensor&, const Tensor& g, std::span<Tensor*> gi) {
                           if (!gi[0]) return;
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < count; ++c) (*gi[0])(r, begin + c) += g(r, c);
                         });
}

Var gather_rows(const Var& a, std::vector<int> index) {
  const Tensor& x = a.value();
  const auto cols = x.cols();
  Tensor out(index.size(), cols);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || static_cast<std::size_t>(index[r]) >= x.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(index[r]) + " out of " +
                       std::to_string(x.rows()) + " rows");
    }
    std::copy_n(&x(index[r], 0), cols, &out(r, 0));
  }
  return a.tape().record("gather_rows", std::move(out), {a},
                         [index = std::move(index), cols](const Tensor&, const Tensor& g,
                                                          std::span<Tensor*> gi) {
                           if (!gi[0]) return;
                           for (std::size_t r = 0; r < index.size(); ++r) {
                             double* d = &(*gi[0])(index[r], 0);
                             const double* gr = &g(r, 0);
                             for (std::size_t c = 0; c < cols; ++c) d[c] += gr[c];
                           }
                         });
}

Var segment_mean(const Var& a, std::vector<int> segment, std::size_t segment_count) {
  return segment_reduce("segment_mean", a, std::move(segment), segment_count, true);
}

Var segment_sum(const Var& a, std::vector<int> segment, std::size_t segment_count) {
  return segment_reduce("segment_sum", a, std::move(segment), segment_count, false);
}

Var segment_normalize(const Var& a, std::vector<int> segment, std::size_t segment_count) {
  const Tensor& x = a.value();
  if (x.cols() != 1) throw ShapeError("segment_normalize: expects one column, got " + x.shape_string());
  check_segments("segment_normalize", x, segment, segment_count);
  std::vector<double> totals(segment_count, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) totals[segment[r]] += x[r];
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (!(totals[segment[r]] > 0.0)) throw NumericError("segment_normalize: non-positive segment total");
    out[r] = x[r] / totals[segment[r]];
  }
  return a.tape().record(
      "segment_normalize", std::move(out), {a},
      [segment = std::move(segment), totals = std::move(totals)](
          const Tensor& y, const Tensor& g, std::span<Tensor*> gi) {
        if (!gi[0]) return;
        std::vector<double> dot(totals.size(), 0.0);
        for (std::size_t r = 0; r < segment.size(); ++r) dot[segment[r]] += g[r] * y[r];
        for (std::size_t r = 0; r < segment.size(); ++r)
          (*gi[0])[r] += (g[r] - dot[segment[r]]) / totals[segment[r]];
      });
}

}  // namespace deepaco::ad
