#pragma once

#include "eendvc/types.h"

namespace eendvc {

// Inputs of the diagonal selective state-space recurrence. For channel d and
// state s, with a = delta[t, d] * A[d, s]:
//
//   h[t, d, s] = exp(a) h[t-1, d, s] + delta[t, d] phi(a) B[t, s] u[t, d]
//   y[t, d]    = sum_s C[t, s] h[t, d, s] + D[d] u[t, d],      h[-1] = 0
//
// where phi(a) = (exp(a) - 1) / a is the exact zero-order-hold factor
// (phi(0) = 1). Shapes: delta T x D, A D x S, B and C T x S, D 1 x D.
struct SsmParams {
  Matrix A;
  Matrix delta;
  Matrix B;
  Matrix C;
  RowVector D;

  Index steps() const { return delta.rows(); }
  Index channels() const { return A.rows(); }
  Index state_size() const { return A.cols(); }
};

// Throws ConfigError on inconsistent shapes, NumericalError on non-finite
// parameters or input. Linear in T.
Matrix selective_scan(const SsmParams& params, const Matrix& u);

// Same, also returning every state (T x (D * S), row t = h[t] flattened d-major)
// for the backward pass.
Matrix selective_scan(const SsmParams& params, const Matrix& u, Matrix* states);

struct SsmGrads {
  Matrix u, delta, A, B, C;
  RowVector D;
};

// Vector-Jacobian product of the scan given upstream dL/dy.
SsmGrads selective_scan_backward(const SsmParams& params, const Matrix& u, const Matrix& states,
                                 const Matrix& grad_y);

// exp(a) - 1 over a with a series branch near 0, and its derivative.
double zoh_phi(double a);
double zoh_phi_derivative(double a);

}  // namespace eendvc
