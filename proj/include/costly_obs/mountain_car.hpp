#pragma once

#include <string>

#include "costly_obs/rng.hpp"

namespace costly_obs {

// Physical motion applied to the car. Force multipliers: Left -1, Coast 0, Right +1.
enum class Motion : int { Left = 0, Coast = 1, Right = 2 };

double force_multiplier(Motion m);
const char* to_string(Motion m);
Motion parse_motion(const std::string& s);

// Ground-truth car state. position in [-1.2, 0.6], velocity in [-0.07, 0.07].
struct TrueState {
    double position = 0.0;
    double velocity = 0.0;
};

namespace mountain_car {

// All physics constants in one place.
inline constexpr double kMinPosition = -1.2;
inline constexpr double kMaxPosition = 0.6;
inline constexpr double kMaxSpeed = 0.07;
inline constexpr double kForce = 0.001;
inline constexpr double kGravity = 0.0025;
inline constexpr double kGoalPosition = 0.5;
inline constexpr double kStartLow = -0.6;
inline constexpr double kStartHigh = -0.4;

// Start state: position uniform in [kStartLow, kStartHigh], velocity 0.
TrueState reset(Rng& rng);

struct StepResult {
    TrueState state;
    bool done = false;  // next position reached the goal
};

// Deterministic update:
//   v' = clamp(v + kForce*mult - kGravity*cos(3p), +-kMaxSpeed)
//   p' = clamp(p + v', [kMinPosition, kMaxPosition]); hitting the left wall zeroes v'
//   done iff p' >= kGoalPosition
StepResult step(const TrueState& s, Motion m);

// sin(3p) * 0.0025 + 0.5 * v^2  (potential plus kinetic term used for shaping)
double mechanical_energy(const TrueState& s);

}  // namespace mountain_car
}  // namespace costly_obs
