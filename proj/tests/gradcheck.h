#pragma once

#include <functional>
#include <random>

#include "eendvc/autograd.h"
#include "oracles.h"

namespace eendvc::testing {

// Denominator floor of the relative error. Central differences at eps 1e-5
// carry rounding noise around 1e-9 in absolute terms, so smaller gradients
// cannot be resolved relative to themselves.
inline constexpr double kGradFloor = 1e-5;

using ModuleFn = std::function<ad::Var(ad::Graph&, ad::Var)>;

// Checks d/d(theta) sum(R .* f(x)) for a random upstream R against central
// differences, over the input and every trainable tensor in `store`. At most
// `max_entries` entries per tensor are probed (evenly strided).
inline double module_gradcheck(ad::ParamStore& store, Matrix x, const ModuleFn& fn, std::uint64_t seed,
                               std::size_t max_entries = 40, bool check_input = true,
                               double eps = 1e-5) {
  std::mt19937_64 rng(seed);
  Matrix upstream;
  {
    ad::Graph g(&store);
    const Matrix out = fn(g, g.constant(x)).value();
    upstream = random_matrix(rng, out.rows(), out.cols());
  }
  auto loss = [&](ad::Graph& g, ad::Var xin) {
    ad::Var y = ad::mul(fn(g, xin), g.constant(upstream));
    return ad::scale(ad::mean_all(y), static_cast<double>(upstream.size()));
  };
  ad::Graph g(&store);
  ad::Var xv = g.input(x);
  g.backward(loss(g, xv));
  const Matrix gx = g.grad(xv);
  const std::vector<Matrix> grads = g.param_grads();
  auto f = [&]() {
    ad::Graph h(&store);
    return loss(h, h.constant(x)).value()(0, 0);
  };
  double worst = check_input ? max_relative_error(gx, f, x, eps, kGradFloor, max_entries) : 0.0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (!store[i].trainable) continue;
    worst = std::max(worst, max_relative_error(grads[i], f, store[i].value, eps, kGradFloor, max_entries));
  }
  return worst;
}

}  // namespace eendvc::testing
