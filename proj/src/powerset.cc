#include "eendvc/labels.h"

#include <algorithm>
#include <bit>

#include "eendvc/error.h"

namespace eendvc {
namespace {

constexpr int kMaxPowersetSpeakers = 20;

void combinations(int n, int k, int start, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == k) {
    out.push_back(cur);
    return;
  }
  for (int i = start; i < n; ++i) {
    cur.push_back(i);
    combinations(n, k, i + 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace

long powerset_size(int n, int k) {
  long total = 0;
  long c = 1;  // C(n, 0)
  for (int i = 0; i <= k; ++i) {
    total += c;
    c = c * (n - i) / (i + 1);
  }
  return total;
}

PowersetTable::PowersetTable(int n, int k) : n_(n), k_(k) {
  if (n < 1 || k < 1) throw ConfigError("powerset: need 1 <= K <= N");
  if (k > n) throw ConfigError("powerset: K (" + std::to_string(k) + ") exceeds N (" + std::to_string(n) + ")");
  if (n > kMaxPowersetSpeakers) throw ConfigError("powerset: N too large");
  for (int size = 0; size <= k; ++size) {
    std::vector<int> cur;
    combinations(n, size, 0, cur, classes_);
  }
  index_by_mask_.assign(std::size_t{1} << n, -1);
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    std::uint32_t m = 0;
    for (int s : classes_[c]) m |= 1u << s;
    masks_.push_back(m);
    index_by_mask_[m] = static_cast<int>(c);
  }
}

int PowersetTable::class_of_mask(std::uint32_t mask) const {
  if (mask >= index_by_mask_.size()) return -1;
  return index_by_mask_[mask];
}

PowersetTable powerset_table(int n, int k) { return PowersetTable(n, k); }

std::vector<int> multilabel_to_powerset(const PowersetTable& table, const Matrix& labels) {
  const int N = table.num_speakers(), K = table.max_simultaneous();
  if (labels.cols() != N) throw ConfigError("multilabel_to_powerset: expected " + std::to_string(N) + " columns");
  // Speaker priority for truncation: longer activity first, then lower index.
  std::vector<int> order(N);
  for (int s = 0; s < N; ++s) order[s] = s;
  Eigen::VectorXd activity = (labels.array() >= 0.5).cast<double>().colwise().sum().transpose();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return activity[a] > activity[b]; });

  std::vector<int> out(static_cast<std::size_t>(labels.rows()));
  for (Index t = 0; t < labels.rows(); ++t) {
    std::uint32_t mask = 0;
    for (int s = 0; s < N; ++s) {
      if (labels(t, s) >= 0.5) mask |= 1u << s;
    }
    if (std::popcount(mask) > K) {
      std::uint32_t kept = 0;
      int count = 0;
      for (int s : order) {
        if (count == K) break;
        if (mask & (1u << s)) {
          kept |= 1u << s;
          ++count;
        }
      }
      mask = kept;
    }
    out[static_cast<std::size_t>(t)] = table.class_of_mask(mask);
  }
  return out;
}

Matrix powerset_to_multilabel(const PowersetTable& table, std::span<const int> classes) {
  Matrix out = Matrix::Zero(static_cast<Index>(classes.size()), table.num_speakers());
  for (std::size_t t = 0; t < classes.size(); ++t) {
    const int c = classes[t];
    if (c < 0 || c >= table.num_classes()) {
      throw ConfigError("powerset_to_multilabel: class " + std::to_string(c) + " out of range");
    }
    for (int s : table.members(c)) out(static_cast<Index>(t), s) = 1.0;
  }
  return out;
}

}  // namespace eendvc
