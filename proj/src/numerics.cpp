#include <atomic>
#include <cmath>
#include <iostream>
#include <numbers>

#include "tartekit/error.hpp"
#include "tartekit/numerics/optim.hpp"

namespace tartekit {

namespace {
std::atomic<long> g_warnings{0};
}

void warn(const std::string& message) {
  ++g_warnings;
  std::cerr << "warning: " << message << '\n';
}

long warning_count() { return g_warnings.load(); }

void LrSchedule::validate() const {
  if (!(lr_min <= lr_max)) throw InvalidArgument("LrSchedule: lr_min must not exceed lr_max");
  if (warmup_steps < 1) throw InvalidArgument("LrSchedule: warmup_steps must be positive");
  if (total_steps < 1) throw InvalidArgument("LrSchedule: total_steps must be positive");
  if (warmup_steps >= total_steps) throw InvalidArgument("LrSchedule: warmup_steps must be below total_steps");
}

double lr_at(const LrSchedule& s, std::int64_t step) {
  s.validate();
  if (step < 0 || step > s.total_steps) {
    throw InvalidArgument("lr_at: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(s.total_steps) + "]");
  }
  if (step <= s.warmup_steps) {
    const double frac = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    return s.lr_min + (s.lr_max - s.lr_min) * frac;
  }
  const double progress =
      static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  if (s.decay == DecayShape::Cosine) return s.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return s.lr_max * (1.0 - progress);
}

}  // namespace tartekit
