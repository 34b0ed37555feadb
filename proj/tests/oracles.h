#pragma once

// Independent reference implementations used to check the production code.
// They favour obviousness over speed and share no code with the library
// beyond plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "eendvc/annotation.h"
#include "eendvc/autograd.h"
#include "eendvc/scan.h"

namespace eendvc::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline Matrix random_binary(std::mt19937_64& rng, Index rows, Index cols, double p = 0.5) {
  std::bernoulli_distribution dist(p);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng) ? 1.0 : 0.0;
  return m;
}

// Random binary matrix with at most k ones per row.
inline Matrix random_limited(std::mt19937_64& rng, Index rows, Index cols, int k) {
  Matrix m = Matrix::Zero(rows, cols);
  std::uniform_int_distribution<int> count(0, k);
  std::vector<Index> idx(static_cast<std::size_t>(cols));
  std::iota(idx.begin(), idx.end(), 0);
  for (Index t = 0; t < rows; ++t) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) m(t, idx[static_cast<std::size_t>(i)]) = 1.0;
  }
  return m;
}

// Textbook discretization h_t = exp(dA) h + (exp(dA) - 1) / A * B u, unrolled
// element by element.
inline Matrix unrolled_scan(const SsmParams& p, const Matrix& u) {
  const Index T = u.rows(), D = u.cols(), S = p.A.cols();
  Matrix y = Matrix::Zero(T, D);
  std::vector<double> h(static_cast<std::size_t>(D * S), 0.0);
  for (Index t = 0; t < T; ++t) {
    for (Index d = 0; d < D; ++d) {
      double acc = p.D(d) * u(t, d);
      for (Index s = 0; s < S; ++s) {
        const double dt = p.delta(t, d), a = p.A(d, s);
        const double abar = std::exp(dt * a);
        const double bbar = a == 0.0 ? dt * p.B(t, s) : (abar - 1.0) / a * p.B(t, s);
        double& state = h[static_cast<std::size_t>(d * S + s)];
        state = abar * state + bbar * u(t, d);
        acc += p.C(t, s) * state;
      }
      y(t, d) = acc;
    }
  }
  return y;
}

// Mean clamped BCE minimized by brute force over all N! column permutations.
inline double exhaustive_pit_bce(const Matrix& pred, const Matrix& ref) {
  const Index T = pred.rows(), N = pred.cols();
  std::vector<int> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double total = 0.0;
    for (Index t = 0; t < T; ++t) {
      for (Index r = 0; r < N; ++r) {
        const double p = std::clamp(pred(t, perm[static_cast<std::size_t>(r)]), 1e-7, 1.0 - 1e-7);
        total -= ref(t, r) > 0.5 ? std::log(p) : std::log(1.0 - p);
      }
    }
    best = std::min(best, total / static_cast<double>(T * N));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// DER on a fixed 10 ms grid: every cell is classified by its midpoint, the
// speaker mapping is found by enumerating every injective map.
struct GridScore {
  double missed = 0.0, false_alarm = 0.0, confusion = 0.0, speech = 0.0;
  double errors() const { return missed + false_alarm + confusion; }
};

inline GridScore grid_der(const Annotation& ref, const Annotation& hyp, double collar, double step = 0.01) {
  double end = 0.0;
  for (const auto& s : ref.segments) end = std::max(end, s.end);
  for (const auto& s : hyp.segments) end = std::max(end, s.end);
  const auto ref_labels = ref.labels();
  const auto hyp_labels = hyp.labels();
  const long cells = static_cast<long>(std::ceil(end / step)) + 1;
  auto active = [](const Annotation& a, const std::string& label, double t) {
    for (const auto& s : a.segments) {
      if (s.label == label && s.start <= t && t < s.end) return true;
    }
    return false;
  };
  auto scored = [&](double t) {
    for (const auto& s : ref.segments) {
      if (std::abs(t - s.start) < collar || std::abs(t - s.end) < collar) return false;
    }
    return true;
  };
  std::vector<std::vector<bool>> R, H;
  for (long c = 0; c < cells; ++c) {
    const double t = (static_cast<double>(c) + 0.5) * step;
    if (!scored(t)) continue;
    std::vector<bool> r, h;
    for (const auto& l : ref_labels) r.push_back(active(ref, l, t));
    for (const auto& l : hyp_labels) h.push_back(active(hyp, l, t));
    R.push_back(r);
    H.push_back(h);
  }
  // Enumerate injective partial maps ref -> hyp (hyp index or -1).
  const std::size_t nr = ref_labels.size(), nh = hyp_labels.size();
  std::vector<int> map(nr, -1);
  double best_match = -1.0;
  std::function<void(std::size_t, std::vector<bool>&)> rec = [&](std::size_t i, std::vector<bool>& used) {
    if (i == nr) {
      double match = 0.0;
      for (std::size_t c = 0; c < R.size(); ++c) {
        for (std::size_t r = 0; r < nr; ++r) {
          if (map[r] >= 0 && R[c][r] && H[c][static_cast<std::size_t>(map[r])]) match += step;
        }
      }
      best_match = std::max(best_match, match);
      return;
    }
    map[i] = -1;
    rec(i + 1, used);
    for (std::size_t h = 0; h < nh; ++h) {
      if (used[h]) continue;
      used[h] = true;
      map[i] = static_cast<int>(h);
      rec(i + 1, used);
      used[h] = false;
    }
    map[i] = -1;
  };
  std::vector<bool> used(nh, false);
  rec(0, used);
  GridScore g;
  double min_sum = 0.0;
  for (std::size_t c = 0; c < R.size(); ++c) {
    const long nref = std::count(R[c].begin(), R[c].end(), true);
    const long nhyp = std::count(H[c].begin(), H[c].end(), true);
    g.speech += step * static_cast<double>(nref);
    g.missed += step * static_cast<double>(std::max(0L, nref - nhyp));
    g.false_alarm += step * static_cast<double>(std::max(0L, nhyp - nref));
    min_sum += step * static_cast<double>(std::min(nref, nhyp));
  }
  g.confusion = min_sum - best_match;
  return g;
}

// Central finite differences of a scalar function over every entry of a
// matrix, compared with the analytic gradient. Returns the largest relative
// error |a - n| / max(|a|, |n|, floor).
inline double max_relative_error(const Matrix& analytic, const std::function<double()>& f, Matrix& x,
                                 double eps = 1e-5, double floor = 1e-6, std::size_t max_entries = 0) {
  double worst = 0.0;
  const Index n = x.size();
  Index stride = 1;
  if (max_entries > 0 && static_cast<std::size_t>(n) > max_entries) stride = n / static_cast<Index>(max_entries);
  for (Index i = 0; i < n; i += stride) {
    const double saved = x.data()[i];
    x.data()[i] = saved + eps;
    const double up = f();
    x.data()[i] = saved - eps;
    const double down = f();
    x.data()[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.data()[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor}));
  }
  return worst;
}

// Hamming mismatch of one window's binary slots against reference columns
// under an explicit assignment (slot -> reference column, -1 for no
// speaker; unassigned activity counts as false alarm).
inline double window_mismatch(const Matrix& local, const Matrix& ref, const std::vector<int>& assign) {
  Matrix mapped = Matrix::Zero(ref.rows(), ref.cols());
  double unmatched = 0.0;
  for (Index s = 0; s < local.cols(); ++s) {
    const int r = assign[static_cast<std::size_t>(s)];
    if (r < 0) {
      unmatched += local.col(s).sum();
    } else {
      mapped.col(r) = local.col(s);
    }
  }
  return (mapped - ref).cwiseAbs().sum() + unmatched;
}

// Calls fn on every injective map of `slots` slots into {-1, 0, .., R-1}
// (several slots may map to -1).
inline void for_each_assignment(int slots, int R, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> cur;
  std::vector<bool> used(static_cast<std::size_t>(R), false);
  std::function<void()> rec = [&]() {
    if (static_cast<int>(cur.size()) == slots) {
      fn(cur);
      return;
    }
    cur.push_back(-1);
    rec();
    cur.pop_back();
    for (int r = 0; r < R; ++r) {
      if (used[static_cast<std::size_t>(r)]) continue;
      used[static_cast<std::size_t>(r)] = true;
      cur.push_back(r);
      rec();
      cur.pop_back();
      used[static_cast<std::size_t>(r)] = false;
    }
  };
  rec();
}

}  // namespace eendvc::testing
