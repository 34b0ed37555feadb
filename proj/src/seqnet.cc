#include "eendvc/seqnet.h"

#include <cmath>

#include "eendvc/error.h"

namespace eendvc {

void MambaBlockConfig::validate() const {
  if (d_model < 1 || d_state < 1 || expand < 1 || d_conv < 1 || dt_rank < 0) {
    throw ConfigError("MambaBlockConfig: all sizes must be positive");
  }
  if (!(dt_min > 0.0 && dt_max >= dt_min)) throw ConfigError("MambaBlockConfig: bad dt range");
}

void LstmConfig::validate() const {
  if (layers < 1) throw ConfigError("LstmConfig: layers must be >= 1");
  if (hidden < 1) throw ConfigError("LstmConfig: hidden must be >= 1");
}

Matrix Initializer::uniform(Index rows, Index cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Values pass through f32 so that checkpoints reproduce them exactly.
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(dist(rng_));
  return m;
}

double Initializer::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng_);
}

Linear::Linear(ad::ParamStore& store, const std::string& name, int in, int out, bool bias, Initializer& init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = store.add(name + ".weight", init.uniform(in, out, bound));
  if (bias) bias_ = store.add(name + ".bias", init.uniform(1, out, bound));
}

ad::Var Linear::operator()(ad::Graph& g, ad::Var x) const {
  ad::Var y = ad::matmul(x, g.param(weight_));
  return bias_ >= 0 ? ad::add_row(y, g.param(bias_)) : y;
}

MambaBlock::MambaBlock(ad::ParamStore& store, const std::string& prefix, const MambaBlockConfig& cfg,
                       Initializer& init)
    : cfg_(cfg) {
  cfg.validate();
  const int di = cfg.d_inner(), S = cfg.d_state, R = cfg.rank();
  in_proj_ = Linear(store, prefix + ".in_proj", cfg.d_model, 2 * di, false, init);
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_conv));
  conv_w_ = store.add(prefix + ".conv.weight", init.uniform(cfg.d_conv, di, conv_bound));
  conv_b_ = store.add(prefix + ".conv.bias", init.uniform(1, di, conv_bound));
  x_proj_ = Linear(store, prefix + ".x_proj", di, R + 2 * S, false, init);

  // delta projection: weight ~ U(+-R^-0.5); bias = softplus^-1(dt) with
  // dt log-uniform in [dt_min, dt_max].
  const double dt_bound = 1.0 / std::sqrt(static_cast<double>(R));
  const int dt_w = store.add(prefix + ".dt_proj.weight", init.uniform(R, di, dt_bound));
  Matrix dt_bias(1, di);
  for (int d = 0; d < di; ++d) {
    const double dt = std::exp(init.uniform(std::log(cfg.dt_min), std::log(cfg.dt_max)));
    dt_bias(0, d) = static_cast<float>(dt + std::log(-std::expm1(-dt)));
  }
  dt_proj_ = Linear(dt_w, store.add(prefix + ".dt_proj.bias", dt_bias));

  Matrix a_log(di, S);
  for (int d = 0; d < di; ++d) {
    for (int s = 0; s < S; ++s) a_log(d, s) = static_cast<float>(std::log(static_cast<double>(s + 1)));
  }
  a_log_ = store.add(prefix + ".A_log", a_log);
  d_skip_ = store.add(prefix + ".D", Matrix::Ones(1, di));
  out_proj_ = Linear(store, prefix + ".out_proj", di, cfg.d_model, false, init);
}

ad::Var MambaBlock::operator()(ad::Graph& g, ad::Var x) const {
  const int di = cfg_.d_inner(), S = cfg_.d_state, R = cfg_.rank();
  ad::Var xz = in_proj_(g, x);
  ad::Var xs = ad::slice_cols(xz, 0, di);
  ad::Var z = ad::slice_cols(xz, di, di);
  xs = ad::silu(ad::causal_conv(xs, g.param(conv_w_), g.param(conv_b_)));
  ad::Var dbc = x_proj_(g, xs);
  ad::Var delta = ad::softplus(dt_proj_(g, ad::slice_cols(dbc, 0, R)));
  ad::Var B = ad::slice_cols(dbc, R, S);
  ad::Var C = ad::slice_cols(dbc, R + S, S);
  ad::Var A = ad::neg_exp(g.param(a_log_));
  ad::Var y = ad::selective_scan(xs, delta, A, B, C, g.param(d_skip_));
  y = ad::mul(y, ad::silu(z));
  return out_proj_(g, y);
}

ExtBiMamba::ExtBiMamba(ad::ParamStore& store, const std::string& prefix, const MambaBlockConfig& cfg,
                       Initializer& init)
    : fwd_(store, prefix + ".fwd", cfg, init), bwd_(store, prefix + ".bwd", cfg, init) {
  norm_gain_ = store.add(prefix + ".norm.weight", Matrix::Ones(1, cfg.d_model));
  norm_bias_ = store.add(prefix + ".norm.bias", Matrix::Zero(1, cfg.d_model));
}

ad::Var ExtBiMamba::operator()(ad::Graph& g, ad::Var x) const {
  ad::Var f = fwd_(g, x);
  ad::Var b = ad::reverse_rows(bwd_(g, ad::reverse_rows(x)));
  return ad::layer_norm(ad::add(ad::add(x, f), b), g.param(norm_gain_), g.param(norm_bias_));
}

ExtBiMamba ExtBiMamba::swapped() const {
  ExtBiMamba out = *this;
  std::swap(out.fwd_, out.bwd_);
  return out;
}

BiLstm::BiLstm(ad::ParamStore& store, const std::string& prefix, int input_dim, const LstmConfig& cfg,
               Initializer& init)
    : cfg_(cfg) {
  cfg.validate();
  const int H = cfg.hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(H));
  int in = input_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    std::vector<Direction> dirs;
    for (int d = 0; d < (cfg.bidirectional ? 2 : 1); ++d) {
      const std::string name = prefix + ".l" + std::to_string(l) + (d == 0 ? ".fwd" : ".bwd");
      Direction dir;
      dir.w_ih = store.add(name + ".w_ih", init.uniform(in, 4 * H, bound));
      dir.w_hh = store.add(name + ".w_hh", init.uniform(H, 4 * H, bound));
      dir.bias = store.add(name + ".bias", init.uniform(1, 4 * H, bound));
      dirs.push_back(dir);
    }
    layers_.push_back(std::move(dirs));
    in = cfg.output_width();
  }
}

ad::Var BiLstm::operator()(ad::Graph& g, ad::Var x) const {
  ad::Var h = x;
  for (const auto& dirs : layers_) {
    std::vector<ad::Var> outs;
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      ad::Var pre = ad::linear(h, g.param(dirs[d].w_ih), g.param(dirs[d].bias));
      outs.push_back(ad::lstm_recurrence(pre, g.param(dirs[d].w_hh), d == 1));
    }
    h = outs.size() == 2 ? ad::concat_cols(outs[0], outs[1]) : outs[0];
  }
  return h;
}

Matrix mamba_block(const ad::ParamStore& store, const MambaBlock& block, const Matrix& x) {
  if (x.rows() < 1) throw ConfigError("mamba_block: empty input");
  ad::Graph g(&store);
  return block(g, g.constant(x)).value();
}

Matrix ext_bimamba(const ad::ParamStore& store, const ExtBiMamba& block, const Matrix& x) {
  if (x.rows() < 1) throw ConfigError("ext_bimamba: empty input");
  ad::Graph g(&store);
  return block(g, g.constant(x)).value();
}

Matrix bilstm_forward(const ad::ParamStore& store, const BiLstm& lstm, const Matrix& x) {
  if (x.rows() < 1) throw ConfigError("bilstm_forward: empty input");
  ad::Graph g(&store);
  return lstm(g, g.constant(x)).value();
}

}  // namespace eendvc
