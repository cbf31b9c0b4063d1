// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "sgmt/error.hpp"
#include "sgmt/tensor.hpp"

namespace sgmt {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string("shape mismatch in ") + op + ": " + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

Parameter& ParamStore::add(std::string name, std::string group, Index rows, Index cols) {
  if (find(name) != nullptr) throw ValidationError("duplicate parameter " + name);
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(group), rows, cols));
  return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParamStore::get(const std::string& name) {
  auto* p = find(name);
  if (p == nullptr) throw ValidationError("unknown parameter " + name);
  return *p;
}

const Parameter& ParamStore::get(const std::string& name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

void ParamStore::set_group_frozen(const std::string& group, bool frozen) {
  for (auto& p : params_) {
    if (p->group == group) p->frozen = frozen;
  }
}

std::vector<Parameter*> ParamStore::group(const std::string& group) const {
  std::vector<Parameter*> out;
  for (const auto& p : params_) {
    if (p->group == group) out.push_back(p.get());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tape core

Var Tape::push(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false); }

Var Tape::param(Parameter& p) {
  Var v = push(p.value, !p.frozen);
  if (requires_grad(v)) node(v).param = &p;
  return v;
}

Var Tape::variable(Matrix value) { return push(std::move(value), true); }

void Tape::clear_grads() {
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
}

bool Tape::any_requires(std::initializer_list<Var> vars) const {
  for (Var v : vars) {
    if (requires_grad(v)) return true;
  }
  return false;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var out) {
  require(value(out).size() == 1, "backward() without seed needs a scalar output");
  backward(out, Matrix::Ones(1, 1));
}

void Tape::backward(Var out, const Matrix& seed) {
  require_same_shape(value(out), seed, "backward seed");
  accumulate(out, seed);
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

// ---------------------------------------------------------------------------
// Ops

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Var out = push(value(a) + value(b), any_requires({a, b}));
  if (requires_grad(out)) {
    node(out).backward = [a, b, o = out.id](Tape& t) {
      t.accumulate(a, t.out_grad(o));
      t.accumulate(b, t.out_grad(o));
    };
  }
  return out;
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Var out = push(value(a) - value(b), any_requires({a, b}));
  if (requires_grad(out)) {
    node(out).backward = [a, b, o = out.id](Tape& t) {
      t.accumulate(a, t.out_grad(o));
      if (t.requires_grad(b)) t.accumulate(b, -t.out_grad(o));
    };
  }
  return out;
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Var out = push(value(a).cwiseProduct(value(b)), any_requires({a, b}));
  if (requires_grad(out)) {
    node(out).backward = [a, b, o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
      if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
    };
  }
  return out;
}

Var Tape::affine(Var a, double scale, double shift) {
  Matrix v = (value(a).array() * scale + shift).matrix();
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, scale, o = out.id](Tape& t) { t.accumulate(a, t.out_grad(o) * scale); };
  }
  return out;
}

Var Tape::add_row(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row: bad row shape");
  Matrix v = value(a);
  v.rowwise() += value(row).row(0);
  Var out = push(std::move(v), any_requires({a, row}));
  if (requires_grad(out)) {
    node(out).backward = [a, row, o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      t.accumulate(a, g);
      if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
    };
  }
  return out;
}

Var Tape::mul_col(Var a, Var col) {
  require(value(col).cols() == 1 && value(col).rows() == value(a).rows(), "mul_col: bad column shape");
  Matrix v = value(a).array().colwise() * value(col).col(0).array();
  Var out = push(std::move(v), any_requires({a, col}));
  if (requires_grad(out)) {
    node(out).backward = [a, col, o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      if (t.requires_grad(a)) {
        Matrix ga = g.array().colwise() * t.value(col).col(0).array();
        t.accumulate(a, ga);
      }
      if (t.requires_grad(col)) t.accumulate(col, g.cwiseProduct(t.value(a)).rowwise().sum());
    };
  }
  return out;
}

Var Tape::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul: inner dimensions differ");
  Matrix v = value(a) * value(b);
  Var out = push(std::move(v), any_requires({a, b}));
  if (requires_grad(out)) {
    node(out).backward = [a, b, o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
      if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
    };
  }
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  require(value(a).cols() == value(b).cols(), "matmul_nt: inner dimensions differ");
  Matrix v = value(a) * value(b).transpose();
  Var out = push(std::move(v), any_requires({a, b}));
  if (requires_grad(out)) {
    node(out).backward = [a, b, o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
      if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
    };
  }
  return out;
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = value(parts[0]).rows();
  Index cols = 0;
  bool needs = false;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat_cols: row counts differ");
    cols += value(p).cols();
    needs = needs || requires_grad(p);
  }
  Matrix v(rows, cols);
  Index at = 0;
  for (Var p : parts) {
    v.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  Var out = push(std::move(v), needs);
  if (requires_grad(out)) {
    node(out).backward = [ps = std::vector<Var>(parts.begin(), parts.end()), o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      Index at = 0;
      for (Var p : ps) {
        const Index c = t.value(p).cols();
        if (t.requires_grad(p)) t.accumulate(p, g.middleCols(at, c));
        at += c;
      }
    };
  }
  return out;
}

Var Tape::slice_cols(Var a, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= value(a).cols(), "slice_cols: out of range");
  Var out = push(value(a).middleCols(start, count), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, start, count, o = out.id](Tape& t) {
      Matrix g = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
      g.middleCols(start, count) = t.out_grad(o);
      t.accumulate(a, g);
    };
  }
  return out;
}

Var Tape::gather_rows(Var a, std::span<const int> rows) {
  const Matrix& av = value(a);
  Matrix v(static_cast<Index>(rows.size()), av.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k] >= 0 && rows[k] < av.rows(), "gather_rows: index out of range");
    v.row(static_cast<Index>(k)) = av.row(rows[k]);
  }
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, idx = std::vector<int>(rows.begin(), rows.end()), o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      Matrix ga = Matrix::Zero(t.value(a).rows(), t.value(a).cols());
      for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Index>(k));
      t.accumulate(a, ga);
    };
  }
  return out;
}

Var Tape::segment_sum(Var a, std::span<const int> segment, int num_segments) {
  const Matrix& av = value(a);
  require(static_cast<Index>(segment.size()) == av.rows(), "segment_sum: one segment id per row");
  Matrix v = Matrix::Zero(num_segments, av.cols());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    require(segment[k] >= 0 && segment[k] < num_segments, "segment_sum: segment out of range");
    v.row(segment[k]) += av.row(static_cast<Index>(k));
  }
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, seg = std::vector<int>(segment.begin(), segment.end()), o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      Matrix ga(static_cast<Index>(seg.size()), g.cols());
      for (std::size_t k = 0; k < seg.size(); ++k) ga.row(static_cast<Index>(k)) = g.row(seg[k]);
      t.accumulate(a, ga);
    };
  }
  return out;
}

Var Tape::segment_softmax(Var a, std::span<const int> segment, int num_segments) {
  const Matrix& av = value(a);
  require(static_cast<Index>(segment.size()) == av.rows(), "segment_softmax: one segment id per row");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Matrix maxv = Matrix::Constant(num_segments, av.cols(), neg_inf);
  for (std::size_t k = 0; k < segment.size(); ++k) {
    require(segment[k] >= 0 && segment[k] < num_segments, "segment_softmax: segment out of range");
    maxv.row(segment[k]) = maxv.row(segment[k]).cwiseMax(av.row(static_cast<Index>(k)));
  }
  Matrix v(av.rows(), av.cols());
  Matrix denom = Matrix::Zero(num_segments, av.cols());
  for (std::size_t k = 0; k < segment.size(); ++k) {
    const auto r = static_cast<Index>(k);
    v.row(r) = (av.row(r) - maxv.row(segment[k])).array().exp().matrix();
    denom.row(segment[k]) += v.row(r);
  }
  for (std::size_t k = 0; k < segment.size(); ++k) {
    const auto r = static_cast<Index>(k);
    v.row(r) = v.row(r).cwiseQuotient(denom.row(segment[k]));
  }
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, seg = std::vector<int>(segment.begin(), segment.end()), num_segments,
                          o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      const Matrix& y = t.value(Var{o});
      Matrix dot = Matrix::Zero(num_segments, y.cols());
      for (std::size_t k = 0; k < seg.size(); ++k) {
        const auto r = static_cast<Index>(k);
        dot.row(seg[k]) += g.row(r).cwiseProduct(y.row(r));
      }
      Matrix ga(y.rows(), y.cols());
      for (std::size_t k = 0; k < seg.size(); ++k) {
        const auto r = static_cast<Index>(k);
        ga.row(r) = y.row(r).cwiseProduct(g.row(r) - dot.row(seg[k]));
      }
      t.accumulate(a, ga);
    };
  }
  return out;
}

Var Tape::softmax_rows(Var a, const Matrix* mask) {
  Matrix x = value(a);
  if (mask != nullptr) {
    require_same_shape(x, *mask, "softmax mask");
    x += *mask;
  }
  for (Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    require(std::isfinite(mx), "softmax_rows: row fully masked");
    x.row(r) = (x.row(r).array() - mx).exp().matrix();
    x.row(r) /= x.row(r).sum();
  }
  Var out = push(std::move(x), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      const Matrix& y = t.value(Var{o});
      Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
      Matrix ga = y.cwiseProduct((g.colwise() - dot));
      t.accumulate(a, ga);
    };
  }
  return out;
}

Var Tape::leaky_relu(Var a, double slope) {
  Matrix v = value(a).unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, slope, o = out.id](Tape& t) {
      Matrix d = t.value(a).unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
      t.accumulate(a, t.out_grad(o).cwiseProduct(d));
    };
  }
  return out;
}

Var Tape::elu(Var a) {
  Matrix v = value(a).unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, o = out.id](Tape& t) {
      Matrix d = t.value(a).unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
      t.accumulate(a, t.out_grad(o).cwiseProduct(d));
    };
  }
  return out;
}

Var Tape::relu(Var a) {
  Matrix v = value(a).cwiseMax(0.0);
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, o = out.id](Tape& t) {
      Matrix d = t.value(a).unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
      t.accumulate(a, t.out_grad(o).cwiseProduct(d));
    };
  }
  return out;
}

Var Tape::sigmoid(Var a) {
  Matrix v = value(a).unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, o = out.id](Tape& t) {
      const Matrix& y = t.value(Var{o});
      Matrix d = y.array() * (1.0 - y.array());
      t.accumulate(a, t.out_grad(o).cwiseProduct(d));
    };
  }
  return out;
}

Var Tape::tanh(Var a) {
  Matrix v = value(a).array().tanh().matrix();
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, o = out.id](Tape& t) {
      const Matrix& y = t.value(Var{o});
      Matrix d = 1.0 - y.array().square();
      t.accumulate(a, t.out_grad(o).cwiseProduct(d));
    };
  }
  return out;
}

Var Tape::layer_norm(Var a, Var gamma, Var beta, double eps) {
  const Matrix& x = value(a);
  const Index cols = x.cols();
  require(value(gamma).rows() == 1 && value(gamma).cols() == cols, "layer_norm: gamma shape");
  require(value(beta).rows() == 1 && value(beta).cols() == cols, "layer_norm: beta shape");
  Matrix xhat(x.rows(), cols);
  Eigen::VectorXd rstd(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  Matrix y = xhat.array().rowwise() * value(gamma).row(0).array();
  y.rowwise() += value(beta).row(0);
  Var out = push(std::move(y), any_requires({a, gamma, beta}));
  if (requires_grad(out)) {
    node(out).backward = [a, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd),
                          o = out.id](Tape& t) {
      const Matrix& g = t.out_grad(o);
      if (t.requires_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
      if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
      if (t.requires_grad(a)) {
        Matrix dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
        const double n = static_cast<double>(dxhat.cols());
        Matrix ga(dxhat.rows(), dxhat.cols());
        for (Index r = 0; r < dxhat.rows(); ++r) {
          const double m1 = dxhat.row(r).sum() / n;
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
          ga.row(r) = rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
        t.accumulate(a, ga);
      }
    };
  }
  return out;
}

Var Tape::sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = value(a).sum();
  Var out = push(std::move(v), requires_grad(a));
  if (requires_grad(out)) {
    node(out).backward = [a, o = out.id](Tape& t) {
      const double g = t.out_grad(o)(0, 0);
      t.accumulate(a, Matrix::Constant(t.value(a).rows(), t.value(a).cols(), g));
    };
  }
  return out;
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets, int ignore_id) {
  const Matrix& z = value(logits);
  require(static_cast<Index>(targets.size()) == z.rows(), "cross_entropy: one target per row");
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - mx).exp().matrix();
    const double s = probs.row(r).sum();
    probs.row(r) /= s;
    const int tgt = targets[static_cast<std::size_t>(r)];
    if (tgt == ignore_id) continue;
    require(tgt >= 0 && tgt < z.cols(), "cross_entropy: target out of range");
    loss -= z(r, tgt) - mx - std::log(s);
  }
  Matrix v(1, 1);
  v(0, 0) = loss;
  Var out = push(std::move(v), requires_grad(logits));
  if (requires_grad(out)) {
    node(out).backward = [logits, probs = std::move(probs), tg = std::vector<int>(targets.begin(), targets.end()),
                          ignore_id, o = out.id](Tape& t) {
      const double g = t.out_grad(o)(0, 0);
      Matrix ga = probs;
      for (Index r = 0; r < ga.rows(); ++r) {
        const int tgt = tg[static_cast<std::size_t>(r)];
        if (tgt == ignore_id) {
          ga.row(r).setZero();
        } else {
          ga(r, tgt) -= 1.0;
        }
      }
      t.accumulate(logits, ga * g);
    };
  }
  return out;
}

Var linear(Tape& t, Var x, Parameter& weight, Parameter& bias) {
  return t.add_row(t.matmul_nt(x, t.param(weight)), t.param(bias));
}

}  // namespace sgmt
