#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "deepaco/params.hpp"
#include "deepaco/tensor.hpp"

namespace deepaco::ad {

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// `out` is the op's forward value. grad_in[i] is null when input i does not need a
// gradient; otherwise it is a buffer shaped like input i that the op adds into.
using BackwardFn =
    std::function<void(const Tensor& out, const Tensor& grad_out, std::span<Tensor*> grad_in)>;

// Append-only record of forward ops. Nodes are stored in creation order, which is a
// topological order, so backward is a single reverse sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a stored parameter; backward adds into the parameter's gradient.
  // Repeated calls for the same name return the same node.
  Var param(ParamStore& store, const std::string& name);
  // Generic op recording used by the primitive set and by custom ops.
  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(const Var& v) const { return nodes_.at(v.id()).value; }
  // Gradient of the last backward() w.r.t. the node (zeros when unreached).
  Tensor grad(const Var& v) const;
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  std::size_t node_count() const { return nodes_.size(); }
  const std::string& op_name(const Var& v) const { return nodes_.at(v.id()).op; }

  // Reverse sweep from a 1x1 loss. Parameter gradients are accumulated, never overwritten.
  void backward(const Var& loss);

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::string param_name;
  };

  std::deque<Node> nodes_;  // stable addresses: backward closures keep pointers to values
  std::unordered_map<std::string, int> param_nodes_;
};

// ---- primitive ops -------------------------------------------------------
// Broadcasting is limited to a 1 x cols row operand or a 1 x 1 scalar operand on
// the right-hand side of add/sub/mul.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
// Per-row normalization to zero mean / unit variance followed by a learned affine map.
// gain and bias are 1 x cols.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var softmax_rows(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var gather_rows(const Var& a, std::vector<int> index);
// out[s] = mean of rows r with segment[r] == s; empty segments produce zero rows.
Var segment_mean(const Var& a, std::vector<int> segment, std::size_t segment_count);
Var segment_sum(const Var& a, std::vector<int> segment, std::size_t segment_count);
// Single-column input: out[r] = a[r] / sum over rows sharing segment[r].
Var segment_normalize(const Var& a, std::vector<int> segment, std::size_t segment_count);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

}  // namespace deepaco::ad
