#pragma once

#include <algorithm>
#include <array>

#include "ahand/dynamics.hpp"
#include "ahand/rng.hpp"

namespace ahand {

// Bounded random-walk force-torque process. Each component accumulates a
// uniform step and is clipped; the curriculum level scales both the step
// size and the bounds.
struct RandomWalkState {
  Wrench current;
  std::array<double, 3> delta_range{0.059, 0.059, 0.0025};  // per-step half-width (fx, fy, tau)
  std::array<double, 3> clip_lo{-1.18, -1.18, -0.05};
  std::array<double, 3> clip_hi{1.18, 1.18, 0.05};
  double level = 1.0;  // curriculum scale in [0, 1]
};

inline Wrench rw_step(RandomWalkState& s, Rng& rng) {
  const double lam = s.level;
  double c[3] = {s.current.force.x, s.current.force.y, s.current.torque};
  for (int i = 0; i < 3; ++i) {
    const double d = rng.uniform(-s.delta_range[i] * lam, s.delta_range[i] * lam);
    c[i] = std::clamp(c[i] + d, lam * s.clip_lo[i], lam * s.clip_hi[i]);
  }
  s.current = Wrench{{c[0], c[1]}, c[2]};
  return s.current;
}

// Linear ramp: full disturbance once `progress` reaches `ramp_fraction`.
inline double set_curriculum_level(double progress, double ramp_fraction = 0.5) {
  if (ramp_fraction <= 0.0) return 1.0;
  return std::min(1.0, std::max(0.0, progress) / ramp_fraction);
}

}  // namespace ahand
