#pragma once

#include <string>

#include "mvrecon/geometry.hpp"

namespace mvr {

enum class SceneKind { plane, box_room, orbit, dynamic_translating_object };

SceneKind scene_kind_from_string(const std::string& s);

struct SyntheticConfig {
    SceneKind kind = SceneKind::plane;
    int num_frames = 4;
    int height = 32;
    int width = 32;
    double focal = 1.5;          // normalized (pixels = focal * half-size)
    double orbit_radius = 1.0;   // orbit kind
    double orbit_height = 2.0;   // camera height above the ground point
    std::uint64_t seed = 0;
};

// Analytically exact scene: every depth comes from a closed-form ray
// intersection and colors are a function of the 3-D hit point, so multi-view
// photo/geometry consistency is exact. The dynamic kind adds a translating
// box whose pixels carry a dynamic mask.
SceneBundle make_synthetic(const SyntheticConfig& cfg);

}  // namespace mvr
