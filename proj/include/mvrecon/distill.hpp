#pragma once

#include <optional>
#include <vector>

#include "mvrecon/heads.hpp"
#include "mvrecon/params.hpp"
#include "mvrecon/rng.hpp"

namespace mvr {

struct AugmentationSpec {
    double brightness = 0.5;
    double contrast = 0.5;
    double saturation = 0.5;
    double hue = 0.1;
    bool rotate90 = true;  // quarter-turn count drawn from {0,1,2,3}
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;
    int mask_side_min = 32;
    int mask_side_max = 128;
    double mask_prob = 0.05;  // per frame
    bool permute_frames = true;
    // Test override: fixes the frame permutation instead of sampling it.
    std::optional<std::vector<int>> fixed_permutation;

    static AugmentationSpec identity() {
        AugmentationSpec s;
        s.brightness = s.contrast = s.saturation = s.hue = 0.0;
        s.rotate90 = false;
        s.blur_sigma_max = 0.0;
        s.mask_prob = 0.0;
        s.permute_frames = false;
        return s;
    }
};

// What augment() recorded so predictions can be mapped back: the frame
// permutation (augmented index i holds original frame permutation[i]) and the
// shared quarter-turn count.
struct AugmentationRecord {
    std::vector<int> permutation;
    int quarter_turns = 0;
};

// Applies photometric jitter, Gaussian blur, patch masking, a 90-degree
// rotation, and frame reordering. The permuted frame 0 becomes the reference.
// When quarter_turns >= 0 the rotation is forced (used to share one rotation
// across the teacher and student streams); -1 samples it.
SceneBundle augment(const SceneBundle& bundle, const AugmentationSpec& spec, Rng& rng,
                    AugmentationRecord& record, int quarter_turns = -1);

struct TeacherState {
    ParamStore params;
    double decay = 0.999;
};

// theta_T <- m * theta_T + (1 - m) * theta_S, every parameter.
void ema_update(ParamStore& teacher, const ParamStore& student, double m);

struct DistillLosses {
    double feature = 0, camera = 0, depth = 0, total = 0;
};

struct DistillConfig {
    double feature_weight = 1.0;
    double camera_weight = 1.0;
    double depth_weight = 1.0;
    AugmentationSpec spec;
    // Test hook: feed both streams the same augmentation stream (identical
    // jitter, masks, and frame order).
    bool shared_augmentation = false;
};

// One self-distillation step: teacher and student forward independently
// augmented copies (shared 90-degree rotation), frame order is restored, and
// the student matches teacher token states at the tapped layers (l2) plus
// teacher camera/depth predictions (l1). Populates student gradients; heads
// stay frozen via the trainable flags (set by the caller).
DistillLosses distill_step(ParamStore& student, const ParamStore& teacher,
                           const SceneBundle& bundle, const ModelConfig& model,
                           const DistillConfig& cfg, Rng& rng);

}  // namespace mvr
