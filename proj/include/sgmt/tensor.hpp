// SPDX-License-Identifier: Apache-2.0
//
// Dense matrices, named parameters, and a small reverse-mode tape.
//
// Every model computation (adapter, fusion, backbone, loss) is recorded on a
// Tape as a sequence of matrix ops. backward() walks the tape in reverse and
// accumulates gradients into the Parameters that were bound to it. Frozen
// parameters enter the tape as constants and never receive gradient.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sgmt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Parameter {
  std::string name;
  std::string group;  // freeze unit, e.g. "encoder", "decoder", "adapter"
  Matrix value;
  Matrix grad;
  bool frozen = false;

  Parameter(std::string n, std::string g, Index rows, Index cols)
      : name(std::move(n)), group(std::move(g)), value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)) {}
};

// Owns parameters in insertion order. Addresses are stable.
class ParamStore {
 public:
  Parameter& add(std::string name, std::string group, Index rows, Index cols);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);

  std::span<const std::unique_ptr<Parameter>> all() const { return params_; }

  void zero_grad();
  void set_group_frozen(const std::string& group, bool frozen);
  std::vector<Parameter*> group(const std::string& group) const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // With grad disabled, parameters bind as constants and no backward
  // closures are recorded.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Matrix value);
  Var param(Parameter& p);
  // Leaf that receives a gradient but is not bound to a Parameter.
  Var variable(Matrix value);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  // Zero matrix if no gradient reached v.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  // Seeds d(out) = seed and propagates; parameter gradients are added to
  // Parameter::grad. A 1x1 output may use the default seed of 1.
  void backward(Var out);
  void backward(Var out, const Matrix& seed);
  // Clears gradients held on the tape (not Parameter::grad).
  void clear_grads();

  // Elementwise / shape ops.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var affine(Var a, double scale, double shift);  // scale * a + shift
  Var add_row(Var a, Var row);                    // a + broadcast 1xC row
  Var mul_col(Var a, Var col);                    // a * broadcast Rx1 column
  Var matmul(Var a, Var b);                       // a b
  Var matmul_nt(Var a, Var b);                    // a b^T
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, Index start, Index count);
  Var gather_rows(Var a, std::span<const int> rows);
  // out[segment[k]] += a[k]; out has num_segments rows.
  Var segment_sum(Var a, std::span<const int> segment, int num_segments);
  // Column-wise softmax within each segment of rows.
  Var segment_softmax(Var a, std::span<const int> segment, int num_segments);
  // Row softmax of a + mask, where mask holds 0 or -inf.
  Var softmax_rows(Var a, const Matrix* mask = nullptr);

  Var leaky_relu(Var a, double slope);
  Var elu(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);

  Var sum(Var a);
  // Sum of token negative log-likelihoods; targets equal to ignore_id are
  // skipped. Output is 1x1.
  Var cross_entropy(Var logits, std::span<const int> targets, int ignore_id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&)> backward;
  };

  Var push(Matrix value, bool requires_grad);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  bool any_requires(std::initializer_list<Var> vars) const;
  // Adds g into v's gradient if v participates in backprop.
  void accumulate(Var v, const Matrix& g);
  const Matrix& out_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

Var linear(Tape& t, Var x, Parameter& weight, Parameter& bias);

}  // namespace sgmt
