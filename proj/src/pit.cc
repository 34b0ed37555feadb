#include "eendvc/labels.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eendvc/assignment.h"
#include "eendvc/error.h"

namespace eendvc {
namespace {

constexpr int kMaxExhaustiveSpeakers = 8;

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

Matrix permute_reference(const Matrix& ref, std::span<const int> permutation) {
  Matrix out = Matrix::Zero(ref.rows(), ref.cols());
  for (std::size_t r = 0; r < permutation.size(); ++r) {
    out.col(permutation[r]) = ref.col(static_cast<Index>(r));
  }
  return out;
}

PitResult pit_bce(const Matrix& pred, const Matrix& ref) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols()) {
    throw ConfigError("pit_bce: prediction and reference shapes differ");
  }
  const Index T = pred.rows(), N = pred.cols();
  PitResult result;
  if (N == 0 || T == 0) {
    result.permutation.resize(static_cast<std::size_t>(N));
    std::iota(result.permutation.begin(), result.permutation.end(), 0);
    return result;
  }
  // cost(r, p) = summed BCE of prediction column p against reference column r.
  Matrix logp(T, N), log1mp(T, N);
  for (Index i = 0; i < pred.size(); ++i) {
    const double p = clamp_prob(pred.data()[i]);
    logp.data()[i] = std::log(p);
    log1mp.data()[i] = std::log1p(-p);
  }
  Matrix cost(N, N);
  for (Index r = 0; r < N; ++r) {
    for (Index p = 0; p < N; ++p) {
      double c = 0.0;
      for (Index t = 0; t < T; ++t) {
        const double y = ref(t, r);
        c -= y * logp(t, p) + (1.0 - y) * log1mp(t, p);
      }
      cost(r, p) = c;
    }
  }
  result.permutation = min_cost_assignment(cost);
  // Summed in sorted order so the value does not depend on column order.
  std::vector<double> picked;
  for (Index r = 0; r < N; ++r) picked.push_back(cost(r, result.permutation[static_cast<std::size_t>(r)]));
  std::sort(picked.begin(), picked.end());
  const double total = std::accumulate(picked.begin(), picked.end(), 0.0);
  result.loss = total / static_cast<double>(T * N);
  return result;
}

PitResult pit_powerset_ce_log(const Matrix& log_pred, const Matrix& ref, const PowersetTable& table) {
  const int N = table.num_speakers();
  if (N > kMaxExhaustiveSpeakers) throw ConfigError("pit_powerset_ce: N > 8 not supported (exhaustive search)");
  if (log_pred.cols() != table.num_classes() || ref.cols() != N || ref.rows() != log_pred.rows()) {
    throw ConfigError("pit_powerset_ce: shape mismatch");
  }
  const Index T = ref.rows();
  const std::vector<int> ref_classes = multilabel_to_powerset(table, ref);
  // Class histogram-free evaluation: accumulate log-probs per (frame, class).
  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> remap(static_cast<std::size_t>(table.num_classes()));
  PitResult best;
  best.loss = std::numeric_limits<double>::infinity();
  do {
    // perm[r] = slot that receives reference speaker r.
    for (int c = 0; c < table.num_classes(); ++c) {
      std::uint32_t m = 0;
      for (int r : table.members(c)) m |= 1u << perm[r];
      remap[static_cast<std::size_t>(c)] = table.class_of_mask(m);
    }
    double total = 0.0;
    for (Index t = 0; t < T; ++t) {
      total -= log_pred(t, remap[static_cast<std::size_t>(ref_classes[static_cast<std::size_t>(t)])]);
    }
    const double loss = T > 0 ? total / static_cast<double>(T) : 0.0;
    if (loss < best.loss) {
      best.loss = loss;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

PitResult pit_powerset_ce(const Matrix& pred, const Matrix& ref, const PowersetTable& table) {
  Matrix logp = pred.unaryExpr([](double p) { return std::log(std::max(p, kProbClamp)); });
  return pit_powerset_ce_log(logp, ref, table);
}

}  // namespace eendvc
