#include "eendvc/scan.h"

#include <cmath>

#include "eendvc/error.h"

namespace eendvc {
namespace {

// Below this |a| phi uses its Taylor series (truncation ~a^4 / 120); above it
// (exp(a) - 1) / a loses at most ~1e-16 / |a| to cancellation.
constexpr double kSeriesCutoff = 1e-4;

void check(const SsmParams& p, const Matrix& u) {
  const Index T = p.delta.rows(), D = p.A.rows(), S = p.A.cols();
  if (p.delta.cols() != D || u.rows() != T || u.cols() != D || p.B.rows() != T || p.C.rows() != T ||
      p.B.cols() != S || p.C.cols() != S || p.D.size() != D) {
    throw ConfigError("selective_scan: inconsistent shapes");
  }
  if (!p.A.allFinite()) throw NumericalError("selective_scan: non-finite A");
  if (!p.delta.allFinite()) throw NumericalError("selective_scan: non-finite delta");
  if (!p.B.allFinite()) throw NumericalError("selective_scan: non-finite B");
  if (!p.C.allFinite()) throw NumericalError("selective_scan: non-finite C");
  if (!p.D.allFinite()) throw NumericalError("selective_scan: non-finite D");
  if (!u.allFinite()) throw NumericalError("selective_scan: non-finite input");
}

// exp(a) and phi(a) from a single exp call.
struct Zoh {
  double decay;
  double phi;
};

inline Zoh zoh(double a) {
  const double e = std::exp(a);
  return {e, std::abs(a) < kSeriesCutoff ? 1.0 + a / 2.0 + a * a / 6.0 + a * a * a / 24.0 : (e - 1.0) / a};
}

inline double zoh_phi_derivative_from(double a, const Zoh& z) {
  if (std::abs(a) < 1e-3) return 0.5 + a / 3.0 + a * a / 8.0 + a * a * a / 30.0;
  return (z.decay - z.phi) / a;
}

}  // namespace

double zoh_phi(double a) { return zoh(a).phi; }

double zoh_phi_derivative(double a) {
  // phi'(a) = (a e^a - e^a + 1) / a^2 = (e^a - phi(a)) / a
  return zoh_phi_derivative_from(a, zoh(a));
}

Matrix selective_scan(const SsmParams& p, const Matrix& u) { return selective_scan(p, u, nullptr); }

Matrix selective_scan(const SsmParams& p, const Matrix& u, Matrix* states) {
  check(p, u);
  const Index T = p.delta.rows(), D = p.A.rows(), S = p.A.cols();
  Matrix y(T, D);
  std::vector<double> h(static_cast<std::size_t>(D * S), 0.0);
  if (states) states->resize(T, D * S);
  for (Index t = 0; t < T; ++t) {
    const double* Bt = p.B.row(t).data();
    const double* Ct = p.C.row(t).data();
    for (Index d = 0; d < D; ++d) {
      const double dt = p.delta(t, d);
      const double x = u(t, d);
      const double* Ad = p.A.row(d).data();
      double* hd = h.data() + d * S;
      double acc = 0.0;
      for (Index s = 0; s < S; ++s) {
        const Zoh z = zoh(dt * Ad[s]);
        hd[s] = z.decay * hd[s] + dt * z.phi * Bt[s] * x;
        acc += Ct[s] * hd[s];
      }
      y(t, d) = acc + p.D[d] * x;
    }
    if (states) {
      std::copy(h.begin(), h.end(), states->row(t).data());
    }
  }
  return y;
}

SsmGrads selective_scan_backward(const SsmParams& p, const Matrix& u, const Matrix& states,
                                 const Matrix& gy) {
  const Index T = p.delta.rows(), D = p.A.rows(), S = p.A.cols();
  SsmGrads g;
  g.u = Matrix::Zero(T, D);
  g.delta = Matrix::Zero(T, D);
  g.A = Matrix::Zero(D, S);
  g.B = Matrix::Zero(T, S);
  g.C = Matrix::Zero(T, S);
  g.D = RowVector::Zero(D);
  // dL/dh[t] carried backwards through time.
  std::vector<double> gh(static_cast<std::size_t>(D * S), 0.0);
  for (Index t = T - 1; t >= 0; --t) {
    const double* Bt = p.B.row(t).data();
    const double* Ct = p.C.row(t).data();
    const double* ht = states.row(t).data();
    const double* hprev = t > 0 ? states.row(t - 1).data() : nullptr;
    double* gBt = g.B.row(t).data();
    double* gCt = g.C.row(t).data();
    for (Index d = 0; d < D; ++d) {
      const double dt = p.delta(t, d);
      const double x = u(t, d);
      const double gyd = gy(t, d);
      const double* Ad = p.A.row(d).data();
      double* gAd = g.A.row(d).data();
      double* ghd = gh.data() + d * S;
      const double* htd = ht + d * S;
      g.D[d] += gyd * x;
      double gu = gyd * p.D[d];
      double gdt = 0.0;
      for (Index s = 0; s < S; ++s) {
        gCt[s] += gyd * htd[s];
        const double gh_s = ghd[s] + gyd * Ct[s];
        const double a = dt * Ad[s];
        const Zoh z = zoh(a);
        const double decay = z.decay;
        const double hp = hprev ? hprev[d * S + s] : 0.0;
        // input gain q = dt * phi(a); dq/ddt = exp(a); dq/dA = dt^2 phi'(a)
        const double q = dt * z.phi;
        const double g_decay = gh_s * hp;
        const double g_q = gh_s * Bt[s] * x;
        gu += gh_s * q * Bt[s];
        gBt[s] += gh_s * q * x;
        gdt += g_decay * Ad[s] * decay + g_q * decay;
        gAd[s] += g_decay * dt * decay + g_q * dt * dt * zoh_phi_derivative_from(a, z);
        ghd[s] = gh_s * decay;
      }
      g.u(t, d) = gu;
      g.delta(t, d) = gdt;
    }
  }
  return g;
}

}  // namespace eendvc
