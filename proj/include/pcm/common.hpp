#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pcm {

/// Thrown when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when inputs are well-formed but carry no usable signal
/// (e.g. an allocation over phases whose weights are all zero).
class DegenerateInput : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Semantic trajectory phases. Declaration order is the priority order used
/// to resolve overlapping labeling rules (first = highest priority).
enum class Phase : std::uint8_t {
    ActiveGrip = 0,
    PreGrasp = 1,
    ReleaseRamp = 2,
    Approach = 3,
    Tail = 4,
};

inline constexpr std::size_t kPhaseCount = 5;

inline constexpr std::array<Phase, kPhaseCount> kAllPhases = {
    Phase::ActiveGrip, Phase::PreGrasp, Phase::ReleaseRamp, Phase::Approach, Phase::Tail};

template <typename T>
using PhaseArray = std::array<T, kPhaseCount>;

constexpr std::size_t index_of(Phase p) { return static_cast<std::size_t>(p); }

constexpr std::string_view phase_name(Phase p) {
    switch (p) {
    case Phase::ActiveGrip: return "active_grip";
    case Phase::PreGrasp: return "pre_grasp";
    case Phase::ReleaseRamp: return "release_ramp";
    case Phase::Approach: return "approach";
    case Phase::Tail: return "tail";
    }
    return "unknown";
}

/// Parses the names produced by phase_name(). Throws InvalidInput otherwise.
Phase parse_phase(std::string_view name);

} // namespace pcm
