#pragma once

// Minimal tape-based reverse-mode differentiation over dense matrices.
//
// A Graph records every operation applied to its Vars; backward() walks the
// tape in reverse. Parameters live in a ParamStore shared read-only between
// graphs, so independent graphs (one per sample) can run concurrently and
// their parameter gradients are collected per graph.

#include <functional>
#include <string>
#include <vector>

#include "eendvc/types.h"

namespace eendvc::ad {

struct Parameter {
  std::string name;
  Matrix value;
  bool trainable = true;
};

class ParamStore {
 public:
  // Registers a new tensor; names must be unique.
  int add(std::string name, Matrix value, bool trainable = true);
  int index_of(const std::string& name) const;  // -1 when absent

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  const Matrix& value(int i) const { return params_[static_cast<std::size_t>(i)].value; }
  Matrix& value(int i) { return params_[static_cast<std::size_t>(i)].value; }

  std::size_t num_trainable_values() const;
  // Rounds every value through f32 (what checkpoints store).
  void round_to_f32();

  std::vector<Parameter>::const_iterator begin() const { return params_.begin(); }
  std::vector<Parameter>::const_iterator end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

class Graph {
 public:
  explicit Graph(const ParamStore* params = nullptr);

  Var constant(Matrix value);
  // Leaf whose gradient is retained (inputs under test).
  Var input(Matrix value);
  Var param(int index);

  // Seeds d(root) with `seed` (same shape as root) and back-propagates.
  void backward(Var root, const Matrix& seed);
  void backward(Var root);  // root must be 1x1; seed 1

  // Gradient of a Var after backward(); zero matrix if it never received one.
  Matrix grad(Var v) const;
  // Gradients aligned with the ParamStore indices (zero for unused entries).
  std::vector<Matrix> param_grads() const;

  // --- used by op implementations ---
  using BackwardFn = std::function<void(Graph&, int self)>;
  Var record(Matrix value, std::vector<int> inputs, BackwardFn fn);
  const Matrix& value(int id) const;
  const Matrix& grad_ref(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  // Accumulates into the gradient of node `id` when it requires one.
  void accumulate(int id, const Matrix& g);
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;  // parameter value, not owned
    Matrix grad;
    bool requires_grad = false;
    int param_index = -1;
    std::vector<int> inputs;
    BackwardFn backward;
  };
  const ParamStore* params_;
  std::vector<Node> nodes_;
};

// ---- elementwise / structural ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // Hadamard
Var scale(Var a, double s);
Var add_row(Var x, Var row);  // x (T x n) + row (1 x n) broadcast
Var mul_row(Var x, Var row);  // x (T x n) .* row broadcast
Var matmul(Var a, Var b);     // (T x k) (k x n)
Var linear(Var x, Var weight, Var bias);  // x W + b
Var linear(Var x, Var weight);

Var sigmoid(Var x);
Var tanh(Var x);
Var silu(Var x);
Var softplus(Var x);
Var leaky_relu(Var x, double slope = 0.01);
Var neg_exp(Var x);  // -exp(x)

Var slice_cols(Var x, Index begin, Index count);
Var concat_cols(Var a, Var b);
Var reverse_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var log_softmax(Var x);
Var softmax(Var x);

// Depthwise causal convolution: y[t, d] = b[d] + sum_k w[k, d] x[t - K + 1 + k, d]
// with zero padding before t = 0. w is K x D.
Var causal_conv(Var x, Var weight, Var bias);

// Selective scan (see scan.h); delta must already be positive.
Var selective_scan(Var u, Var delta, Var A, Var B, Var C, Var D);

// One direction of an LSTM layer. `pre` holds the input contribution to the
// four gates (T x 4H, order i, f, g, o) including bias; w_hh is H x 4H.
// When reverse is true the sequence is processed from T-1 down to 0.
Var lstm_recurrence(Var pre, Var w_hh, bool reverse);

// ---- losses (1 x 1 results) ----
// Mean binary cross-entropy of sigmoid(logits) against targets.
Var bce_with_logits(Var logits, const Matrix& targets);
// Mean negative log-likelihood of the given class per row of log-probs.
Var nll(Var log_probs, const std::vector<int>& classes);
Var mean_all(Var x);

}  // namespace eendvc::ad
