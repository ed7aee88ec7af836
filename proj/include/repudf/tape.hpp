#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "repudf/types.hpp"

namespace repudf {

class Tape;

// Handle to a node on a Tape. All values are dense 2-D double matrices;
// vectors appear as 1 x d or n x 1 as documented per op.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  Index rows() const;
  Index cols() const;
};

// Eager reverse-mode tape. Every op computes its value immediately and, when
// gradients are enabled and an input requires them, records a closure that
// scatters the upstream gradient to its inputs. The tape is rebuilt for every
// forward pass; backward() walks nodes in reverse creation order, which is a
// topological order by construction. Gradients of nodes no path reaches stay
// zero.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {
    nodes_.reserve(256);
  }

  bool grad_enabled() const { return grad_enabled_; }

  Tensor constant(MatX value);  // never receives gradient
  Tensor input(MatX value);     // leaf that accumulates gradient

  const MatX& value(Tensor t) const { return value_at(t.id); }
  const MatX& value_at(int id) const { return nodes_[id].value; }
  // Zero-sized until a gradient actually reaches the node.
  const MatX& grad(Tensor t) const { return nodes_[t.id].grad; }
  MatX grad_or_zero(Tensor t) const;

  void backward(Tensor scalar_loss);

  std::size_t size() const { return nodes_.size(); }

  // Op plumbing.
  Tensor emit(MatX value, bool needs_grad);
  void set_backprop(Tensor t, std::function<void(Tape&, const MatX&)> fn);
  bool needs_grad(Tensor t) const { return nodes_[t.id].needs_grad; }
  template <class Expr>
  void accumulate(int id, const Expr& g) {
    Node& node = nodes_[id];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0) node.grad = g;
    else node.grad += g;
  }

 private:
  struct Node {
    MatX value;
    MatX grad;
    bool needs_grad = false;
    std::function<void(Tape&, const MatX&)> backprop;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// Differentiable primitives. Shape mismatches throw std::invalid_argument
// naming both shapes. Elementwise kink ops (relu, abs, clamps) take the zero
// subgradient exactly at the kink.
Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor a);
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor scale(Tensor a, double s);
Tensor add_rowvec(Tensor a, Tensor v);  // v is 1 x cols, added to every row
Tensor relu(Tensor a);
Tensor abs(Tensor a);
Tensor tanh(Tensor a);
Tensor log(Tensor a);
Tensor clamp_min(Tensor a, double c);  // max(a, c)
Tensor clamp_max(Tensor a, double c);  // min(a, c)
Tensor softmax(Tensor a, int axis);    // axis 0: down each column; 1: along each row
Tensor log_softmax_rows(Tensor a);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(Tensor a, Index start, Index n);
Tensor gather_rows(Tensor a, std::vector<int> ids);
Tensor sum_all(Tensor a);   // 1 x 1
Tensor mean_all(Tensor a);  // 1 x 1
Tensor sum_axis(Tensor a, int axis);   // axis 0 -> 1 x cols, axis 1 -> rows x 1
Tensor mean_axis(Tensor a, int axis);
Tensor layer_norm_rows(Tensor x, Tensor gamma, Tensor beta, double eps = 1e-5);
// Per-column softmax / sum over consecutive row blocks of the given size.
Tensor segment_softmax_rows(Tensor a, Index block);
Tensor segment_sum_rows(Tensor a, Index block);
// Row-group means over [offsets[g], offsets[g+1]); empty groups yield zeros.
Tensor ragged_mean_rows(Tensor a, std::vector<Index> offsets);

// Named parameter matrices with stable (insertion) order, the unit the
// optimizer and checkpoints operate on.
class ParamStore {
 public:
  MatX& add(const std::string& name, MatX value);
  bool contains(const std::string& name) const { return values_.count(name) > 0; }
  MatX& at(const std::string& name);
  const MatX& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t count() const { return names_.size(); }
  Index total_size() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, MatX> values_;
};

// Parameters inserted into a tape as gradient-receiving leaves.
struct BoundParams {
  Tape* tape = nullptr;
  std::unordered_map<std::string, Tensor> handles;

  Tensor operator[](const std::string& name) const;
};

BoundParams bind_params(Tape& tape, const ParamStore& store);
// Gradients in store.names() order; untouched parameters give zero matrices.
std::vector<MatX> collect_grads(const BoundParams& bound, const ParamStore& store);

}  // namespace repudf
