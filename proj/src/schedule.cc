#include <cmath>

#include "eendvc/error.h"
#include "eendvc/train.h"

namespace eendvc {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (steps_per_epoch < 1 || batch < 1) throw ConfigError("steps_per_epoch and batch must be >= 1");
  if (!(lr_peak > 0.0) || !(adapt_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(warmup_epochs > 0.0) || !(cycle_epochs > 0.0) || !(halflife_epochs > 0.0)) {
    throw ConfigError("schedule periods must be positive");
  }
  if (!(cycle_floor > 0.0 && cycle_floor <= 1.0)) throw ConfigError("cycle_floor must be in (0, 1]");
  if (adapt_patience < 0) throw ConfigError("adapt_patience must be >= 0");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
}

double lr_envelope(const TrainConfig& c, double epoch) {
  // Whole half-lives go through ldexp so that envelope(e + h) is exactly
  // envelope(e) / 2 whenever e + h is representable.
  const double x = epoch - c.warmup_epochs;
  const double halvings = std::floor(x / c.halflife_epochs);
  const double rest = x - halvings * c.halflife_epochs;
  return std::ldexp(c.lr_peak * std::exp2(-rest / c.halflife_epochs), -static_cast<int>(halvings));
}

double lr_at(const TrainConfig& c, double epoch) {
  if (epoch < 0.0) throw ConfigError("lr_at: epoch must be >= 0");
  if (epoch < c.warmup_epochs) return c.lr_peak * epoch / c.warmup_epochs;
  // Position within the cycle: 0 at the peak, 1 at the trough.
  const double half = c.cycle_epochs / 2.0;
  const double phase = std::fmod(epoch - c.warmup_epochs, c.cycle_epochs);
  const double down = phase <= half ? phase / half : (c.cycle_epochs - phase) / half;
  const double env = lr_envelope(c, epoch);
  return env * (1.0 - (1.0 - c.cycle_floor) * down);
}

}  // namespace eendvc
