#include "eendvc/autograd.h"

#include <cmath>
#include <stdexcept>

#include "eendvc/error.h"
#include "eendvc/scan.h"

namespace eendvc::ad {

int ParamStore::add(std::string name, Matrix value, bool trainable) {
  if (index_of(name) >= 0) throw ConfigError("duplicate parameter name " + name);
  params_.push_back({std::move(name), std::move(value), trainable});
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::size_t ParamStore::num_trainable_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += static_cast<std::size_t>(p.value.size());
  }
  return n;
}

void ParamStore::round_to_f32() {
  for (auto& p : params_) {
    p.value = p.value.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
  }
}

const Matrix& Var::value() const { return graph->value(id); }

Graph::Graph(const ParamStore* params) : params_(params) {}

Var Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(int index) {
  if (!params_ || index < 0 || static_cast<std::size_t>(index) >= params_->size()) {
    throw ConfigError("Graph::param: bad parameter index");
  }
  Node n;
  n.ref = &params_->value(index);
  n.requires_grad = (*params_)[static_cast<std::size_t>(index)].trainable;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.ref ? *n.ref : n.value;
}

Var Graph::record(Matrix value, std::vector<int> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (int i : inputs) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(i)].requires_grad;
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Graph::backward(Var root, const Matrix& seed) {
  if (root.graph != this) throw ConfigError("backward: Var from another graph");
  const Matrix& v = value(root.id);
  if (seed.rows() != v.rows() || seed.cols() != v.cols()) throw ConfigError("backward: seed shape mismatch");
  accumulate(root.id, seed);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

void Graph::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw ConfigError("backward: root must be scalar");
  backward(root, Matrix::Ones(1, 1));
}

Matrix Graph::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) return Matrix::Zero(value(v.id).rows(), value(v.id).cols());
  return n.grad;
}

std::vector<Matrix> Graph::param_grads() const {
  std::vector<Matrix> out;
  if (!params_) return out;
  out.reserve(params_->size());
  for (std::size_t i = 0; i < params_->size(); ++i) {
    out.push_back(Matrix::Zero(params_->value(static_cast<int>(i)).rows(),
                               params_->value(static_cast<int>(i)).cols()));
  }
  for (const auto& n : nodes_) {
    if (n.param_index >= 0 && n.grad.size() > 0) out[static_cast<std::size_t>(n.param_index)] += n.grad;
  }
  return out;
}

namespace {

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()) + ")");
  }
}

// Elementwise unary op given f(x) and f'(x) expressed from (x, y).
template <typename F, typename DF>
Var unary(Var x, F f, DF df) {
  Graph& g = *x.graph;
  Matrix y = x.value().unaryExpr(f);
  const int xi = x.id;
  return g.record(std::move(y), {xi}, [xi, df](Graph& gr, int self) {
    const Matrix& xv = gr.value(xi);
    const Matrix& yv = gr.value(self);
    const Matrix& gy = gr.grad_ref(self);
    Matrix gx(xv.rows(), xv.cols());
    for (Index i = 0; i < xv.size(); ++i) gx.data()[i] = gy.data()[i] * df(xv.data()[i], yv.data()[i]);
    gr.accumulate(xi, gx);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  const int ai = a.id, bi = b.id;
  return a.graph->record(a.value() + b.value(), {ai, bi}, [ai, bi](Graph& g, int self) {
    g.accumulate(ai, g.grad_ref(self));
    g.accumulate(bi, g.grad_ref(self));
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  const int ai = a.id, bi = b.id;
  return a.graph->record(a.value() - b.value(), {ai, bi}, [ai, bi](Graph& g, int self) {
    g.accumulate(ai, g.grad_ref(self));
    g.accumulate(bi, -g.grad_ref(self));
  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  const int ai = a.id, bi = b.id;
  return a.graph->record(a.value().cwiseProduct(b.value()), {ai, bi}, [ai, bi](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    if (g.requires_grad(ai)) g.accumulate(ai, gy.cwiseProduct(g.value(bi)));
    if (g.requires_grad(bi)) g.accumulate(bi, gy.cwiseProduct(g.value(ai)));
  });
}

Var scale(Var a, double s) {
  const int ai = a.id;
  return a.graph->record(a.value() * s, {ai}, [ai, s](Graph& g, int self) { g.accumulate(ai, g.grad_ref(self) * s); });
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw ConfigError("add_row: shape mismatch");
  const int xi = x.id, ri = row.id;
  Matrix y = x.value().rowwise() + row.value().row(0);
  return x.graph->record(std::move(y), {xi, ri}, [xi, ri](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    g.accumulate(xi, gy);
    if (g.requires_grad(ri)) g.accumulate(ri, gy.colwise().sum());
  });
}

Var mul_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw ConfigError("mul_row: shape mismatch");
  const int xi = x.id, ri = row.id;
  Matrix y = x.value().array().rowwise() * row.value().row(0).array();
  return x.graph->record(std::move(y), {xi, ri}, [xi, ri](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    if (g.requires_grad(xi)) {
      Matrix gx = gy.array().rowwise() * g.value(ri).row(0).array();
      g.accumulate(xi, gx);
    }
    if (g.requires_grad(ri)) g.accumulate(ri, gy.cwiseProduct(g.value(xi)).colwise().sum());
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ConfigError("matmul: inner dimension mismatch");
  const int ai = a.id, bi = b.id;
  Matrix y = a.value() * b.value();
  return a.graph->record(std::move(y), {ai, bi}, [ai, bi](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    if (g.requires_grad(ai)) g.accumulate(ai, gy * g.value(bi).transpose());
    if (g.requires_grad(bi)) g.accumulate(bi, g.value(ai).transpose() * gy);
  });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }
Var linear(Var x, Var weight) { return matmul(x, weight); }

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var silu(Var x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var softplus(Var x) {
  return unary(x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
}

Var leaky_relu(Var x, double slope) {
  return unary(
      x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Var neg_exp(Var x) {
  return unary(x, [](double v) { return -std::exp(v); }, [](double, double y) { return y; });
}

Var slice_cols(Var x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) throw ConfigError("slice_cols: out of range");
  const int xi = x.id;
  Matrix y = x.value().middleCols(begin, count);
  return x.graph->record(std::move(y), {xi}, [xi, begin, count](Graph& g, int self) {
    const Matrix& xv = g.value(xi);
    Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
    gx.middleCols(begin, count) = g.grad_ref(self);
    g.accumulate(xi, gx);
  });
}

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) throw ConfigError("concat_cols: row mismatch");
  const int ai = a.id, bi = b.id;
  Matrix y(a.rows(), a.cols() + b.cols());
  y << a.value(), b.value();
  const Index ca = a.cols(), cb = b.cols();
  return a.graph->record(std::move(y), {ai, bi}, [ai, bi, ca, cb](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    if (g.requires_grad(ai)) g.accumulate(ai, gy.leftCols(ca));
    if (g.requires_grad(bi)) g.accumulate(bi, gy.rightCols(cb));
  });
}

Var reverse_rows(Var x) {
  const int xi = x.id;
  Matrix y = x.value().colwise().reverse();
  return x.graph->record(std::move(y), {xi}, [xi](Graph& g, int self) {
    g.accumulate(xi, g.grad_ref(self).colwise().reverse());
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Index T = x.rows(), n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw ConfigError("layer_norm: parameter shape mismatch");
  }
  const Matrix& xv = x.value();
  Matrix xhat(T, n);
  Vector inv_std(T);
  for (Index t = 0; t < T; ++t) {
    const double mean = xv.row(t).mean();
    const double var = (xv.row(t).array() - mean).square().mean();
    inv_std[t] = 1.0 / std::sqrt(var + eps);
    xhat.row(t) = (xv.row(t).array() - mean) * inv_std[t];
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const int xi = x.id, gi = gain.id, bi = bias.id;
  return x.graph->record(std::move(y), {xi, gi, bi},
                         [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, int self) {
                           const Matrix& gy = g.grad_ref(self);
                           if (g.requires_grad(gi)) g.accumulate(gi, gy.cwiseProduct(xhat).colwise().sum());
                           if (g.requires_grad(bi)) g.accumulate(bi, gy.colwise().sum());
                           if (!g.requires_grad(xi)) return;
                           const RowVector gamma = g.value(gi).row(0);
                           const Index T = gy.rows();
                           const double n = static_cast<double>(gy.cols());
                           Matrix gx(T, gy.cols());
                           for (Index t = 0; t < T; ++t) {
                             const RowVector gh = gy.row(t).cwiseProduct(gamma);
                             const double m1 = gh.sum() / n;
                             const double m2 = gh.cwiseProduct(xhat.row(t)).sum() / n;
                             gx.row(t) = inv_std[t] * (gh.array() - m1 - xhat.row(t).array() * m2);
                           }
                           g.accumulate(xi, gx);
                         });
}

Var log_softmax(Var x) {
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (Index t = 0; t < xv.rows(); ++t) {
    const double m = xv.row(t).maxCoeff();
    const double lse = m + std::log((xv.row(t).array() - m).exp().sum());
    y.row(t) = xv.row(t).array() - lse;
  }
  const int xi = x.id;
  return x.graph->record(std::move(y), {xi}, [xi](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    const Matrix& yv = g.value(self);
    Matrix gx(gy.rows(), gy.cols());
    for (Index t = 0; t < gy.rows(); ++t) {
      gx.row(t) = gy.row(t).array() - yv.row(t).array().exp() * gy.row(t).sum();
    }
    g.accumulate(xi, gx);
  });
}

Var softmax(Var x) {
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (Index t = 0; t < xv.rows(); ++t) {
    const double m = xv.row(t).maxCoeff();
    y.row(t) = (xv.row(t).array() - m).exp();
    y.row(t) /= y.row(t).sum();
  }
  const int xi = x.id;
  return x.graph->record(std::move(y), {xi}, [xi](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    const Matrix& yv = g.value(self);
    Matrix gx(gy.rows(), gy.cols());
    for (Index t = 0; t < gy.rows(); ++t) {
      const double dot = gy.row(t).dot(yv.row(t));
      gx.row(t) = yv.row(t).array() * (gy.row(t).array() - dot);
    }
    g.accumulate(xi, gx);
  });
}

Var causal_conv(Var x, Var weight, Var bias) {
  const Index T = x.rows(), D = x.cols(), K = weight.rows();
  if (weight.cols() != D || bias.rows() != 1 || bias.cols() != D) throw ConfigError("causal_conv: shape mismatch");
  const Matrix& xv = x.value();
  const Matrix& w = weight.value();
  Matrix y = bias.value().replicate(T, 1);
  for (Index t = 0; t < T; ++t) {
    for (Index k = 0; k < K; ++k) {
      const Index src = t - K + 1 + k;
      if (src < 0) continue;
      y.row(t) += w.row(k).cwiseProduct(xv.row(src));
    }
  }
  const int xi = x.id, wi = weight.id, bi = bias.id;
  return x.graph->record(std::move(y), {xi, wi, bi}, [xi, wi, bi, K](Graph& g, int self) {
    const Matrix& gy = g.grad_ref(self);
    const Matrix& xv = g.value(xi);
    const Matrix& w = g.value(wi);
    const Index T = gy.rows();
    if (g.requires_grad(bi)) g.accumulate(bi, gy.colwise().sum());
    Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
    Matrix gw = Matrix::Zero(w.rows(), w.cols());
    for (Index t = 0; t < T; ++t) {
      for (Index k = 0; k < K; ++k) {
        const Index src = t - K + 1 + k;
        if (src < 0) continue;
        gx.row(src) += w.row(k).cwiseProduct(gy.row(t));
        gw.row(k) += xv.row(src).cwiseProduct(gy.row(t));
      }
    }
    g.accumulate(xi, gx);
    g.accumulate(wi, gw);
  });
}

Var selective_scan(Var u, Var delta, Var A, Var B, Var C, Var D) {
  SsmParams p{A.value(), delta.value(), B.value(), C.value(), D.value().row(0)};
  Matrix states;
  Matrix y = eendvc::selective_scan(p, u.value(), &states);
  const int ui = u.id, di = delta.id, ai = A.id, bi = B.id, ci = C.id, Di = D.id;
  return u.graph->record(std::move(y), {ui, di, ai, bi, ci, Di},
                         [=, states = std::move(states)](Graph& g, int self) {
                           SsmParams p{g.value(ai), g.value(di), g.value(bi), g.value(ci), g.value(Di).row(0)};
                           SsmGrads gr = selective_scan_backward(p, g.value(ui), states, g.grad_ref(self));
                           g.accumulate(ui, gr.u);
                           g.accumulate(di, gr.delta);
                           g.accumulate(ai, gr.A);
                           g.accumulate(bi, gr.B);
                           g.accumulate(ci, gr.C);
                           g.accumulate(Di, Matrix(gr.D));
                         });
}

Var lstm_recurrence(Var pre, Var w_hh, bool reverse) {
  const Index T = pre.rows(), H = w_hh.rows();
  if (pre.cols() != 4 * H || w_hh.cols() != 4 * H) throw ConfigError("lstm_recurrence: shape mismatch");
  const Matrix& P = pre.value();
  const Matrix& W = w_hh.value();
  // Gate activations and cell states kept for BPTT.
  Matrix gates(T, 4 * H);  // i, f, g, o after nonlinearity
  Matrix cells(T, H);
  Matrix hidden(T, H);
  RowVector h = RowVector::Zero(H), c = RowVector::Zero(H);
  for (Index step = 0; step < T; ++step) {
    const Index t = reverse ? T - 1 - step : step;
    RowVector z = P.row(t) + h * W;
    for (Index j = 0; j < H; ++j) {
      const double i = stable_sigmoid(z[j]);
      const double f = stable_sigmoid(z[H + j]);
      const double gg = std::tanh(z[2 * H + j]);
      const double o = stable_sigmoid(z[3 * H + j]);
      c[j] = f * c[j] + i * gg;
      h[j] = o * std::tanh(c[j]);
      gates(t, j) = i;
      gates(t, H + j) = f;
      gates(t, 2 * H + j) = gg;
      gates(t, 3 * H + j) = o;
    }
    cells.row(t) = c;
    hidden.row(t) = h;
  }
  const int pi = pre.id, wi = w_hh.id;
  Matrix out = hidden;
  return pre.graph->record(
      std::move(out), {pi, wi},
      [pi, wi, reverse, gates = std::move(gates), cells = std::move(cells), hidden = std::move(hidden)](Graph& g,
                                                                                                     int self) {
        const Matrix& gy = g.grad_ref(self);
        const Matrix& W = g.value(wi);
        const Index T = gy.rows(), H = W.rows();
        Matrix gpre(T, 4 * H);
        RowVector gh_next = RowVector::Zero(H);  // dL/dh from the following step
        RowVector gc_next = RowVector::Zero(H);
        for (Index step = T - 1; step >= 0; --step) {
          const Index t = reverse ? T - 1 - step : step;
          const Index prev = reverse ? t + 1 : t - 1;
          const bool has_prev = step > 0;
          RowVector gh = gy.row(t) + gh_next;
          RowVector gz(4 * H);
          RowVector gc(H);
          for (Index j = 0; j < H; ++j) {
            const double i = gates(t, j), f = gates(t, H + j), gg = gates(t, 2 * H + j), o = gates(t, 3 * H + j);
            const double tc = std::tanh(cells(t, j));
            const double c_prev = has_prev ? cells(prev, j) : 0.0;
            const double dc = gh[j] * o * (1.0 - tc * tc) + gc_next[j];
            gz[3 * H + j] = gh[j] * tc * o * (1.0 - o);
            gz[j] = dc * gg * i * (1.0 - i);
            gz[H + j] = dc * c_prev * f * (1.0 - f);
            gz[2 * H + j] = dc * i * (1.0 - gg * gg);
            gc[j] = dc * f;
          }
          gpre.row(t) = gz;
          gh_next = gz * W.transpose();
          gc_next = gc;
        }
        g.accumulate(pi, gpre);
        if (g.requires_grad(wi)) {
          // dW = sum_t h_{t-1}^T gz_t, with h_{t-1} the previous hidden in processing order.
          Matrix hprev = Matrix::Zero(T, H);
          for (Index step = 1; step < T; ++step) {
            const Index t = reverse ? T - 1 - step : step;
            const Index prev = reverse ? t + 1 : t - 1;
            hprev.row(t) = hidden.row(prev);
          }
          g.accumulate(wi, hprev.transpose() * gpre);
        }
      });
}

Var bce_with_logits(Var logits, const Matrix& targets) {
  const Matrix& z = logits.value();
  if (targets.rows() != z.rows() || targets.cols() != z.cols()) throw ConfigError("bce_with_logits: shape mismatch");
  const double n = static_cast<double>(z.size());
  double loss = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    const double x = z.data()[i], y = targets.data()[i];
    // max(x, 0) - x y + log(1 + exp(-|x|))
    loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  const int zi = logits.id;
  return logits.graph->record(std::move(out), {zi}, [zi, targets, n](Graph& g, int self) {
    const double gs = g.grad_ref(self)(0, 0);
    const Matrix& z = g.value(zi);
    Matrix gz(z.rows(), z.cols());
    for (Index i = 0; i < z.size(); ++i) gz.data()[i] = gs * (stable_sigmoid(z.data()[i]) - targets.data()[i]) / n;
    g.accumulate(zi, gz);
  });
}

Var nll(Var log_probs, const std::vector<int>& classes) {
  const Matrix& lp = log_probs.value();
  if (static_cast<Index>(classes.size()) != lp.rows()) throw ConfigError("nll: class count mismatch");
  double loss = 0.0;
  for (Index t = 0; t < lp.rows(); ++t) {
    const int c = classes[static_cast<std::size_t>(t)];
    if (c < 0 || c >= lp.cols()) throw ConfigError("nll: class index out of range");
    loss -= lp(t, c);
  }
  const double n = static_cast<double>(std::max<Index>(lp.rows(), 1));
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  const int li = log_probs.id;
  return log_probs.graph->record(std::move(out), {li}, [li, classes, n](Graph& g, int self) {
    const double gs = g.grad_ref(self)(0, 0);
    const Matrix& lp = g.value(li);
    Matrix gl = Matrix::Zero(lp.rows(), lp.cols());
    for (Index t = 0; t < lp.rows(); ++t) gl(t, classes[static_cast<std::size_t>(t)]) = -gs / n;
    g.accumulate(li, gl);
  });
}

Var mean_all(Var x) {
  Matrix out(1, 1);
  const double n = static_cast<double>(x.value().size());
  out(0, 0) = x.value().sum() / n;
  const int xi = x.id;
  return x.graph->record(std::move(out), {xi}, [xi, n](Graph& g, int self) {
    const Matrix& xv = g.value(xi);
    g.accumulate(xi, Matrix::Constant(xv.rows(), xv.cols(), g.grad_ref(self)(0, 0) / n));
  });
}

}  // namespace eendvc::ad
