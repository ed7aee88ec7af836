#include "repudf/tape.hpp"

#include <cmath>

namespace repudf {

namespace {

std::string shape_str(const MatX& m) {
  return "(" + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) + ")";
}

void require_same_shape(const char* op, const MatX& a, const MatX& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                                shape_str(b));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Index Tensor::rows() const { return tape->value(*this).rows(); }
Index Tensor::cols() const { return tape->value(*this).cols(); }

Tensor Tape::constant(MatX value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::input(MatX value) {
  nodes_.push_back(Node{std::move(value), {}, grad_enabled_, {}});
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::emit(MatX value, bool needs_grad) {
  nodes_.push_back(Node{std::move(value), {}, grad_enabled_ && needs_grad, {}});
  return Tensor{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::set_backprop(Tensor t, std::function<void(Tape&, const MatX&)> fn) {
  if (nodes_[t.id].needs_grad) nodes_[t.id].backprop = std::move(fn);
}

MatX Tape::grad_or_zero(Tensor t) const {
  const Node& n = nodes_[t.id];
  if (n.grad.size() > 0) return n.grad;
  return MatX::Zero(n.value.rows(), n.value.cols());
}

void Tape::backward(Tensor scalar_loss) {
  require(scalar_loss.tape == this, "backward: tensor from another tape");
  const Node& root = nodes_[scalar_loss.id];
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw std::invalid_argument("backward: root must be 1 x 1, got " + shape_str(root.value));
  if (!root.needs_grad) return;
  nodes_[scalar_loss.id].grad = MatX::Ones(1, 1);
  for (int i = scalar_loss.id; i >= 0; --i) {
    Node& node = nodes_[i];
    if (node.backprop && node.grad.size() > 0) node.backprop(*this, node.grad);
  }
}

namespace {

// Emits a node and registers the backward closure only when needed.
template <class Backprop>
Tensor unary(Tensor a, MatX value, Backprop&& bp) {
  Tape& t = *a.tape;
  Tensor out = t.emit(std::move(value), t.needs_grad(a));
  if (t.needs_grad(out))
    t.set_backprop(out, [a, fn = std::forward<Backprop>(bp)](Tape& tp, const MatX& g) {
      fn(tp, a, g);
    });
  return out;
}

template <class Backprop>
Tensor binary(Tensor a, Tensor b, MatX value, Backprop&& bp) {
  require(a.tape == b.tape, "op: tensors from different tapes");
  Tape& t = *a.tape;
  Tensor out = t.emit(std::move(value), t.needs_grad(a) || t.needs_grad(b));
  if (t.needs_grad(out))
    t.set_backprop(out, [a, b, fn = std::forward<Backprop>(bp)](Tape& tp, const MatX& g) {
      fn(tp, a, b, g);
    });
  return out;
}

// Row i of the result folds over k in ascending index order, each lane on its
// own, so a row's value never depends on how many other rows share the batch.
// Eigen's blocked GEMM re-pipelines edge rows and would break that.
MatX fixed_order_product(const MatX& a, const MatX& b) {
  MatX c = MatX::Zero(a.rows(), b.cols());
  const Index m = a.rows(), kk = a.cols(), n = b.cols();
  for (Index j = 0; j < n; ++j) {
    double* cj = c.col(j).data();
    for (Index k = 0; k < kk; ++k) {
      const double s = b(k, j);
      const double* ak = a.col(k).data();
      for (Index i = 0; i < m; ++i) cj[i] += ak[i] * s;
    }
  }
  return c;
}

}  // namespace

Tensor matmul(Tensor a, Tensor b) {
  const MatX& av = a.tape->value(a);
  const MatX& bv = b.tape->value(b);
  require(av.cols() == bv.rows(), "matmul: inner dims " + shape_str(av) + " vs " + shape_str(bv));
  return binary(a, b, fixed_order_product(av, bv), [](Tape& tp, Tensor a, Tensor b, const MatX& g) {
    tp.accumulate(a.id, g * tp.value(b).transpose());
    tp.accumulate(b.id, tp.value(a).transpose() * g);
  });
}

Tensor transpose(Tensor a) {
  return unary(a, a.tape->value(a).transpose(), [](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, g.transpose());
  });
}

Tensor add(Tensor a, Tensor b) {
  require_same_shape("add", a.tape->value(a), b.tape->value(b));
  return binary(a, b, a.tape->value(a) + b.tape->value(b),
                [](Tape& tp, Tensor a, Tensor b, const MatX& g) {
                  tp.accumulate(a.id, g);
                  tp.accumulate(b.id, g);
                });
}

Tensor sub(Tensor a, Tensor b) {
  require_same_shape("sub", a.tape->value(a), b.tape->value(b));
  return binary(a, b, a.tape->value(a) - b.tape->value(b),
                [](Tape& tp, Tensor a, Tensor b, const MatX& g) {
                  tp.accumulate(a.id, g);
                  tp.accumulate(b.id, -g);
                });
}

Tensor mul(Tensor a, Tensor b) {
  require_same_shape("mul", a.tape->value(a), b.tape->value(b));
  return binary(a, b, a.tape->value(a).cwiseProduct(b.tape->value(b)),
                [](Tape& tp, Tensor a, Tensor b, const MatX& g) {
                  tp.accumulate(a.id, g.cwiseProduct(tp.value(b)));
                  tp.accumulate(b.id, g.cwiseProduct(tp.value(a)));
                });
}

Tensor scale(Tensor a, double s) {
  return unary(a, a.tape->value(a) * s, [s](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, g * s);
  });
}

Tensor add_rowvec(Tensor a, Tensor v) {
  const MatX& av = a.tape->value(a);
  const MatX& vv = v.tape->value(v);
  require(vv.rows() == 1 && vv.cols() == av.cols(),
          "add_rowvec: want 1 x " + std::to_string(av.cols()) + ", got " + shape_str(vv));
  return binary(a, v, av.rowwise() + vv.row(0), [](Tape& tp, Tensor a, Tensor v, const MatX& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(v.id, g.colwise().sum());
  });
}

Tensor relu(Tensor a) {
  return unary(a, a.tape->value(a).cwiseMax(0.0), [](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, (tp.value(a).array() > 0.0).select(g.array(), 0.0).matrix());
  });
}

Tensor abs(Tensor a) {
  return unary(a, a.tape->value(a).cwiseAbs(), [](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, g.cwiseProduct(tp.value(a).unaryExpr(
                            [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); })));
  });
}

Tensor tanh(Tensor a) {
  Tensor out = a.tape->emit(a.tape->value(a).unaryExpr([](double x) { return std::tanh(x); }),
                            a.tape->needs_grad(a));
  if (a.tape->needs_grad(out)) {
    const int self = out.id;
    a.tape->set_backprop(out, [a, self](Tape& tp, const MatX& g) {
      tp.accumulate(a.id, g.cwiseProduct((1.0 - tp.value_at(self).array().square()).matrix()));
    });
  }
  return out;
}

Tensor log(Tensor a) {
  return unary(a, a.tape->value(a).unaryExpr([](double x) { return std::log(x); }),
               [](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, g.cwiseQuotient(tp.value(a)));
  });
}

Tensor clamp_min(Tensor a, double c) {
  return unary(a, a.tape->value(a).cwiseMax(c), [c](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, (tp.value(a).array() > c).select(g.array(), 0.0).matrix());
  });
}

Tensor clamp_max(Tensor a, double c) {
  return unary(a, a.tape->value(a).cwiseMin(c), [c](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, (tp.value(a).array() < c).select(g.array(), 0.0).matrix());
  });
}

namespace {

MatX softmax_block(const MatX& x, bool along_rows) {
  // along_rows: normalize each row; else each column.
  MatX y = x;
  if (along_rows) {
    for (Index i = 0; i < y.rows(); ++i) {
      Eigen::RowVectorXd row = y.row(i);
      row.array() -= row.maxCoeff();
      row = row.array().exp();
      y.row(i) = row / row.sum();
    }
  } else {
    for (Index j = 0; j < y.cols(); ++j) {
      VecX col = y.col(j);
      col.array() -= col.maxCoeff();
      col = col.array().exp();
      y.col(j) = col / col.sum();
    }
  }
  return y;
}

}  // namespace

Tensor softmax(Tensor a, int axis) {
  require(axis == 0 || axis == 1, "softmax: axis must be 0 or 1");
  MatX y = softmax_block(a.tape->value(a), axis == 1);
  Tensor out = a.tape->emit(std::move(y), a.tape->needs_grad(a));
  if (a.tape->needs_grad(out)) {
    const int self = out.id;
    a.tape->set_backprop(out, [a, self, axis](Tape& tp, const MatX& g) {
      const MatX& y = tp.value_at(self);
      MatX gx(y.rows(), y.cols());
      if (axis == 1) {
        for (Index i = 0; i < y.rows(); ++i) {
          const double dot = g.row(i).dot(y.row(i));
          gx.row(i) = y.row(i).cwiseProduct(g.row(i).array().matrix() - Eigen::RowVectorXd::Constant(y.cols(), dot));
        }
      } else {
        for (Index j = 0; j < y.cols(); ++j) {
          const double dot = g.col(j).dot(y.col(j));
          gx.col(j) = y.col(j).cwiseProduct(g.col(j) - VecX::Constant(y.rows(), dot));
        }
      }
      tp.accumulate(a.id, gx);
    });
  }
  return out;
}

Tensor log_softmax_rows(Tensor a) {
  const MatX& x = a.tape->value(a);
  MatX y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    y.row(i) = x.row(i).array() - lse;
  }
  Tensor out = a.tape->emit(std::move(y), a.tape->needs_grad(a));
  if (a.tape->needs_grad(out)) {
    const int self = out.id;
    a.tape->set_backprop(out, [a, self](Tape& tp, const MatX& g) {
      const MatX& y = tp.value_at(self);
      MatX gx(y.rows(), y.cols());
      for (Index i = 0; i < y.rows(); ++i)
        gx.row(i) = g.row(i) - y.row(i).array().exp().matrix() * g.row(i).sum();
      tp.accumulate(a.id, gx);
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  Index rows = 0;
  const Index cols = t.value(parts[0]).cols();
  bool needs = false;
  for (const Tensor& p : parts) {
    require(p.tape == &t, "concat_rows: tensors from different tapes");
    require(t.value(p).cols() == cols, "concat_rows: column mismatch " +
                                           shape_str(t.value(parts[0])) + " vs " +
                                           shape_str(t.value(p)));
    rows += t.value(p).rows();
    needs = needs || t.needs_grad(p);
  }
  MatX y(rows, cols);
  Index at = 0;
  for (const Tensor& p : parts) {
    y.middleRows(at, t.value(p).rows()) = t.value(p);
    at += t.value(p).rows();
  }
  Tensor out = t.emit(std::move(y), needs);
  if (t.needs_grad(out))
    t.set_backprop(out, [parts](Tape& tp, const MatX& g) {
      Index at = 0;
      for (const Tensor& p : parts) {
        const Index n = tp.value(p).rows();
        tp.accumulate(p.id, g.middleRows(at, n));
        at += n;
      }
    });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  Index cols = 0;
  const Index rows = t.value(parts[0]).rows();
  bool needs = false;
  for (const Tensor& p : parts) {
    require(p.tape == &t, "concat_cols: tensors from different tapes");
    require(t.value(p).rows() == rows, "concat_cols: row mismatch " +
                                           shape_str(t.value(parts[0])) + " vs " +
                                           shape_str(t.value(p)));
    cols += t.value(p).cols();
    needs = needs || t.needs_grad(p);
  }
  MatX y(rows, cols);
  Index at = 0;
  for (const Tensor& p : parts) {
    y.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  Tensor out = t.emit(std::move(y), needs);
  if (t.needs_grad(out))
    t.set_backprop(out, [parts](Tape& tp, const MatX& g) {
      Index at = 0;
      for (const Tensor& p : parts) {
        const Index n = tp.value(p).cols();
        tp.accumulate(p.id, g.middleCols(at, n));
        at += n;
      }
    });
  return out;
}

Tensor slice_cols(Tensor a, Index start, Index n) {
  const MatX& av = a.tape->value(a);
  require(start >= 0 && n >= 0 && start + n <= av.cols(),
          "slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + n) +
              ") outside " + shape_str(av));
  return unary(a, av.middleCols(start, n), [start, n](Tape& tp, Tensor a, const MatX& g) {
    MatX gx = MatX::Zero(tp.value(a).rows(), tp.value(a).cols());
    gx.middleCols(start, n) = g;
    tp.accumulate(a.id, gx);
  });
}

Tensor gather_rows(Tensor a, std::vector<int> ids) {
  const MatX& av = a.tape->value(a);
  MatX y(static_cast<Index>(ids.size()), av.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < av.rows(),
            "gather_rows: id " + std::to_string(ids[i]) + " outside " + shape_str(av));
    y.row(static_cast<Index>(i)) = av.row(ids[i]);
  }
  return unary(a, std::move(y), [ids = std::move(ids)](Tape& tp, Tensor a, const MatX& g) {
    MatX gx = MatX::Zero(tp.value(a).rows(), tp.value(a).cols());
    for (std::size_t i = 0; i < ids.size(); ++i) gx.row(ids[i]) += g.row(static_cast<Index>(i));
    tp.accumulate(a.id, gx);
  });
}

Tensor sum_all(Tensor a) {
  MatX y(1, 1);
  y(0, 0) = a.tape->value(a).sum();
  return unary(a, std::move(y), [](Tape& tp, Tensor a, const MatX& g) {
    tp.accumulate(a.id, MatX::Constant(tp.value(a).rows(), tp.value(a).cols(), g(0, 0)));
  });
}

Tensor mean_all(Tensor a) {
  const MatX& av = a.tape->value(a);
  require(av.size() > 0, "mean_all: empty tensor");
  MatX y(1, 1);
  y(0, 0) = av.sum() / static_cast<double>(av.size());
  return unary(a, std::move(y), [](Tape& tp, Tensor a, const MatX& g) {
    const MatX& av = tp.value(a);
    tp.accumulate(a.id,
                  MatX::Constant(av.rows(), av.cols(), g(0, 0) / static_cast<double>(av.size())));
  });
}

Tensor sum_axis(Tensor a, int axis) {
  require(axis == 0 || axis == 1, "sum_axis: axis must be 0 or 1");
  const MatX& av = a.tape->value(a);
  MatX y = axis == 0 ? MatX(av.colwise().sum()) : MatX(av.rowwise().sum());
  return unary(a, std::move(y), [axis](Tape& tp, Tensor a, const MatX& g) {
    const MatX& av = tp.value(a);
    if (axis == 0) tp.accumulate(a.id, g.replicate(av.rows(), 1));
    else tp.accumulate(a.id, g.replicate(1, av.cols()));
  });
}

Tensor mean_axis(Tensor a, int axis) {
  require(axis == 0 || axis == 1, "mean_axis: axis must be 0 or 1");
  const MatX& av = a.tape->value(a);
  const double n = static_cast<double>(axis == 0 ? av.rows() : av.cols());
  require(n > 0, "mean_axis: empty axis");
  Tensor s = sum_axis(a, axis);
  return scale(s, 1.0 / n);
}

Tensor layer_norm_rows(Tensor x, Tensor gamma, Tensor beta, double eps) {
  const MatX& xv = x.tape->value(x);
  const MatX& gv = gamma.tape->value(gamma);
  const MatX& bv = beta.tape->value(beta);
  require(gv.rows() == 1 && gv.cols() == xv.cols(),
          "layer_norm_rows: gamma want 1 x " + std::to_string(xv.cols()) + ", got " +
              shape_str(gv));
  require_same_shape("layer_norm_rows(gamma, beta)", gv, bv);
  const Index n = xv.cols();
  MatX xhat(xv.rows(), n);
  VecX inv_sigma(xv.rows());
  for (Index i = 0; i < xv.rows(); ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().sum() / static_cast<double>(n);
    inv_sigma[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_sigma[i];
  }
  MatX y = xhat.cwiseProduct(gv.replicate(xv.rows(), 1)) + bv.replicate(xv.rows(), 1);
  Tape& t = *x.tape;
  Tensor out =
      t.emit(std::move(y), t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta));
  if (t.needs_grad(out)) {
    t.set_backprop(out, [x, gamma, beta, xhat = std::move(xhat),
                         inv_sigma = std::move(inv_sigma)](Tape& tp, const MatX& g) {
      const MatX& gv = tp.value(gamma);
      const Index n = xhat.cols();
      MatX gx(xhat.rows(), n);
      for (Index i = 0; i < xhat.rows(); ++i) {
        const Eigen::RowVectorXd gh = g.row(i).cwiseProduct(gv.row(0));
        const double m1 = gh.mean();
        const double m2 = gh.cwiseProduct(xhat.row(i)).mean();
        gx.row(i) = ((gh.array() - m1) - xhat.row(i).array() * m2) * inv_sigma[i];
      }
      tp.accumulate(x.id, gx);
      tp.accumulate(gamma.id, (g.cwiseProduct(xhat)).colwise().sum());
      tp.accumulate(beta.id, g.colwise().sum());
    });
  }
  return out;
}

Tensor segment_softmax_rows(Tensor a, Index block) {
  const MatX& av = a.tape->value(a);
  require(block > 0 && av.rows() % block == 0,
          "segment_softmax_rows: rows " + std::to_string(av.rows()) + " not a multiple of " +
              std::to_string(block));
  MatX y(av.rows(), av.cols());
  for (Index s = 0; s < av.rows(); s += block)
    y.middleRows(s, block) = softmax_block(av.middleRows(s, block), false);
  Tensor out = a.tape->emit(std::move(y), a.tape->needs_grad(a));
  if (a.tape->needs_grad(out)) {
    const int self = out.id;
    a.tape->set_backprop(out, [a, self, block](Tape& tp, const MatX& g) {
      const MatX& y = tp.value_at(self);
      MatX gx(y.rows(), y.cols());
      for (Index s = 0; s < y.rows(); s += block) {
        const auto yb = y.middleRows(s, block);
        const auto gb = g.middleRows(s, block);
        const Eigen::RowVectorXd dots = (gb.cwiseProduct(yb)).colwise().sum();
        gx.middleRows(s, block) = yb.cwiseProduct(gb - dots.replicate(block, 1));
      }
      tp.accumulate(a.id, gx);
    });
  }
  return out;
}

Tensor segment_sum_rows(Tensor a, Index block) {
  const MatX& av = a.tape->value(a);
  require(block > 0 && av.rows() % block == 0,
          "segment_sum_rows: rows " + std::to_string(av.rows()) + " not a multiple of " +
              std::to_string(block));
  const Index groups = av.rows() / block;
  // Accumulated row by row in index order; a vectorized column reduction would
  // regroup the additions with the matrix layout and break batch invariance.
  MatX y = MatX::Zero(groups, av.cols());
  for (Index gidx = 0; gidx < groups; ++gidx)
    for (Index r = 0; r < block; ++r) y.row(gidx) += av.row(gidx * block + r);
  return unary(a, std::move(y), [block](Tape& tp, Tensor a, const MatX& g) {
    const MatX& av = tp.value(a);
    MatX gx(av.rows(), av.cols());
    for (Index gidx = 0; gidx < g.rows(); ++gidx)
      gx.middleRows(gidx * block, block) = g.row(gidx).replicate(block, 1);
    tp.accumulate(a.id, gx);
  });
}

Tensor ragged_mean_rows(Tensor a, std::vector<Index> offsets) {
  const MatX& av = a.tape->value(a);
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == av.rows(),
          "ragged_mean_rows: offsets must span [0, rows]");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    require(offsets[i] >= offsets[i - 1], "ragged_mean_rows: offsets must be non-decreasing");
  const Index groups = static_cast<Index>(offsets.size()) - 1;
  MatX y = MatX::Zero(groups, av.cols());
  for (Index gidx = 0; gidx < groups; ++gidx) {
    const Index n = offsets[gidx + 1] - offsets[gidx];
    for (Index r = 0; r < n; ++r) y.row(gidx) += av.row(offsets[gidx] + r);
    if (n > 0) y.row(gidx) /= static_cast<double>(n);
  }
  return unary(a, std::move(y),
               [offsets = std::move(offsets)](Tape& tp, Tensor a, const MatX& g) {
                 const MatX& av = tp.value(a);
                 MatX gx = MatX::Zero(av.rows(), av.cols());
                 for (std::size_t gi = 0; gi + 1 < offsets.size(); ++gi) {
                   const Index n = offsets[gi + 1] - offsets[gi];
                   if (n > 0)
                     gx.middleRows(offsets[gi], n) =
                         (g.row(static_cast<Index>(gi)) / static_cast<double>(n)).replicate(n, 1);
                 }
                 tp.accumulate(a.id, gx);
               });
}

MatX& ParamStore::add(const std::string& name, MatX value) {
  if (contains(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  names_.push_back(name);
  return values_.emplace(name, std::move(value)).first->second;
}

MatX& ParamStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

const MatX& ParamStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

Index ParamStore::total_size() const {
  Index n = 0;
  for (const auto& name : names_) n += at(name).size();
  return n;
}

Tensor BoundParams::operator[](const std::string& name) const {
  auto it = handles.find(name);
  if (it == handles.end()) throw std::invalid_argument("BoundParams: unknown name " + name);
  return it->second;
}

BoundParams bind_params(Tape& tape, const ParamStore& store) {
  BoundParams bound;
  bound.tape = &tape;
  for (const auto& name : store.names()) bound.handles.emplace(name, tape.input(store.at(name)));
  return bound;
}

std::vector<MatX> collect_grads(const BoundParams& bound, const ParamStore& store) {
  std::vector<MatX> grads;
  grads.reserve(store.count());
  for (const auto& name : store.names()) grads.push_back(bound.tape->grad_or_zero(bound[name]));
  return grads;
}

}  // namespace repudf
