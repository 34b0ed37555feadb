#include "eendvc/tune.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <random>

#include "eendvc/error.h"

namespace eendvc {

void SearchSpace::validate() const {
  // Cosine distances live in [0, 2].
  if (!(threshold_min >= 0.0 && threshold_min <= threshold_max && threshold_max <= 2.0)) {
    throw ConfigError("invalid threshold range (must lie within [0, 2])");
  }
  if (min_cluster_size_min < 1 || min_cluster_size_min > min_cluster_size_max) {
    throw ConfigError("invalid min_cluster_size range");
  }
}

bool SearchSpace::contains(const PipelineParams& p) const {
  return p.clustering_threshold >= threshold_min && p.clustering_threshold <= threshold_max &&
         p.min_cluster_size >= min_cluster_size_min && p.min_cluster_size <= min_cluster_size_max;
}

std::string TuneResult::trial_log_csv() const {
  std::string out = "index,threshold,min_cluster_size,der,status\n";
  char buf[160];
  for (const auto& t : trials) {
    if (t.status == TrialStatus::kOk) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%d,%.6f,ok\n", t.index, t.params.clustering_threshold,
                    t.params.min_cluster_size, t.der);
    } else {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%d,,failed\n", t.index, t.params.clustering_threshold,
                    t.params.min_cluster_size);
    }
    out += buf;
  }
  return out;
}

namespace {

struct Draw {
  double u_threshold;
  double u_size;
  std::uint64_t seed;
};

int size_from_unit(double u, int lo, int hi) {
  const int n = hi - lo + 1;
  return lo + std::min(n - 1, static_cast<int>(std::floor(u * n)));
}

}  // namespace

TuneResult tune(const Objective& evaluate, const SearchSpace& space, const TuneOptions& options,
                const PipelineParams& base) {
  if (options.budget < 1) throw ConfigError("tuning budget must be at least 1");
  space.validate();

  // The whole random stream is drawn up front so the sampled points do not
  // depend on evaluation order.
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Draw> draws(static_cast<std::size_t>(options.budget));
  for (auto& d : draws) {
    d.u_threshold = unit(rng);
    d.u_size = unit(rng);
    d.seed = rng();
  }

  const int explore = options.refine
                          ? std::max(1, static_cast<int>(std::ceil(options.explore_fraction * options.budget)))
                          : options.budget;
  const int refine_total = options.budget - explore;
  // Refinement rounds of geometrically decreasing size, each centered on the
  // current incumbent with half the previous box width.
  const int rounds = refine_total > 0 ? std::max(1, static_cast<int>(std::log2(refine_total + 1.0))) : 0;

  TuneResult result;
  const Trial* best = nullptr;
  double width_t = space.threshold_max - space.threshold_min;
  double width_s = space.min_cluster_size_max - space.min_cluster_size_min;

  auto run = [&](int index, const PipelineParams& p) {
    Trial t;
    t.index = index;
    t.params = p;
    t.seed = draws[static_cast<std::size_t>(index)].seed;
    try {
      t.der = evaluate(p);
      if (!std::isfinite(t.der)) throw NumericalError("objective is not finite");
    } catch (const std::exception& e) {
      t.status = TrialStatus::kFailed;
      t.error = e.what();
    }
    result.trials.push_back(std::move(t));
    best = nullptr;
    for (const auto& c : result.trials) {
      if (c.status == TrialStatus::kOk && (best == nullptr || c.der < best->der)) best = &c;
    }
  };

  int index = 0;
  for (; index < explore; ++index) {
    const Draw& d = draws[static_cast<std::size_t>(index)];
    PipelineParams p = base;
    p.clustering_threshold = space.threshold_min + d.u_threshold * (space.threshold_max - space.threshold_min);
    p.min_cluster_size = size_from_unit(d.u_size, space.min_cluster_size_min, space.min_cluster_size_max);
    run(index, p);
  }
  for (int r = 0; r < rounds && index < options.budget; ++r) {
    width_t *= 0.5;
    width_s *= 0.5;
    const int in_round = r + 1 == rounds ? options.budget - index : std::max(1, refine_total / rounds);
    for (int k = 0; k < in_round && index < options.budget; ++k, ++index) {
      const Draw& d = draws[static_cast<std::size_t>(index)];
      PipelineParams p = base;
      if (best == nullptr) {
        p.clustering_threshold = space.threshold_min + d.u_threshold * (space.threshold_max - space.threshold_min);
        p.min_cluster_size = size_from_unit(d.u_size, space.min_cluster_size_min, space.min_cluster_size_max);
      } else {
        const double t_lo = std::max(space.threshold_min, best->params.clustering_threshold - width_t / 2);
        const double t_hi = std::min(space.threshold_max, best->params.clustering_threshold + width_t / 2);
        p.clustering_threshold = t_lo + d.u_threshold * (t_hi - t_lo);
        const int half = static_cast<int>(std::ceil(width_s / 2));
        const int s_lo = std::max(space.min_cluster_size_min, best->params.min_cluster_size - half);
        const int s_hi = std::min(space.min_cluster_size_max, best->params.min_cluster_size + half);
        p.min_cluster_size = size_from_unit(d.u_size, s_lo, s_hi);
      }
      run(index, p);
    }
  }
  if (best == nullptr) throw NumericalError("all " + std::to_string(result.trials.size()) + " tuning trials failed");
  // DER is piecewise constant in the threshold, so several trials often tie.
  // Taking the median threshold among them keeps the choice away from the
  // edges of the optimal plateau.
  std::vector<const Trial*> tied;
  for (const auto& t : result.trials) {
    if (t.status == TrialStatus::kOk && t.der <= best->der) tied.push_back(&t);
  }
  std::stable_sort(tied.begin(), tied.end(), [](const Trial* a, const Trial* b) {
    return a->params.clustering_threshold < b->params.clustering_threshold;
  });
  result.best = *tied[(tied.size() - 1) / 2];
  return result;
}

}  // namespace eendvc
