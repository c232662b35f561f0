#include "costly_obs/mountain_car.hpp"

#include <algorithm>
#include <cmath>

#include "costly_obs/errors.hpp"

namespace costly_obs {

double force_multiplier(Motion m) {
    switch (m) {
        case Motion::Left: return -1.0;
        case Motion::Coast: return 0.0;
        case Motion::Right: return 1.0;
    }
    return 0.0;
}

const char* to_string(Motion m) {
    switch (m) {
        case Motion::Left: return "Left";
        case Motion::Coast: return "Coast";
        case Motion::Right: return "Right";
    }
    return "?";
}

Motion parse_motion(const std::string& s) {
    if (s == "Left") return Motion::Left;
    if (s == "Coast") return Motion::Coast;
    if (s == "Right") return Motion::Right;
    throw ConfigError("unknown motion name: " + s);
}

namespace mountain_car {

TrueState reset(Rng& rng) {
    return TrueState{rng.uniform(kStartLow, kStartHigh), 0.0};
}

StepResult step(const TrueState& s, Motion m) {
    double v = s.velocity + kForce * force_multiplier(m) - kGravity * std::cos(3.0 * s.position);
    v = std::clamp(v, -kMaxSpeed, kMaxSpeed);
    double p = s.position + v;
    if (p <= kMinPosition) {
        p = kMinPosition;
        v = 0.0;
    } else if (p > kMaxPosition) {
        p = kMaxPosition;
    }
    return StepResult{TrueState{p, v}, p >= kGoalPosition};
}

double mechanical_energy(const TrueState& s) {
    return std::sin(3.0 * s.position) * 0.0025 + 0.5 * s.velocity * s.velocity;
}

}  // namespace mountain_car
}  // namespace costly_obs
