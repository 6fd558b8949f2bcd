#pragma once

#include <vector>

#include "mvrecon/geometry.hpp"
#include "mvrecon/heads.hpp"
#include "mvrecon/rng.hpp"

namespace mvr {

struct LossWeights {
    double cam = 5.0;
    double depth = 1.0;
    double point = 0.5;
    double match = 0.1;
    double alpha = 0.1;  // confidence regularizer
};

struct PairConfig {
    double depth_rel_tol = 0.01;
    int border_px = 4;
    double overlap_min = 0.10;
    int min_projections = 8;    // m_min valid projections per kept query patch
    int max_query_patches = 64; // Q_max, per query frame
    double tau_sampson = 25.0;  // px^2
    double tau_rgb = 0.15;
    int negative_attempt_factor = 64;
    bool exhaustive = false;  // keep every query patch regardless of caps
};

struct PatchPair {
    int frame_a = 0, patch_a = 0;
    int frame_b = 0, patch_b = 0;
    double overlap = 0.0;   // positives
    double sampson = 0.0;   // negatives
    double rgb_dist = 0.0;  // negatives
};

struct PatchPairSet {
    std::vector<PatchPair> positives;
    std::vector<PatchPair> negatives;
    bool empty_flag = false;  // no positives found; matching loss is skipped
};

// Sum over frames of the l1 distance between predicted and ground-truth
// 9-vectors, quaternions flipped to a common hemisphere first.
ad::Var camera_loss(const std::vector<CameraPrediction>& pred, const std::vector<Camera>& gt);

// Aleatoric depth loss with the gradient-consistency term:
// mean_valid(c (1 + 1/D) |e|) + mean_pairs(c |grad e|) - alpha mean_valid(log c).
ad::Var depth_loss(const DepthPrediction& pred, const DepthMap& gt, double alpha);

// Same structure with 3-vector residuals e = unproject(D_hat, g_hat) - P,
// l1 over components, sharing the depth confidence map.
ad::Var point_loss_frame(const DepthPrediction& pred_depth, const CameraPrediction& pred_cam,
                         const PointMap& gt_points, const DepthMap& gt_depth, double alpha);

// Differentiable unprojection of a predicted depth map through a predicted
// 9-vector camera; returns (x, y, z) maps in the reference frame.
std::array<ad::Var, 3> ad_unproject(const ad::Var& depth, const ad::Var& g9, int height, int width);

PatchPairSet build_pairs(const SceneBundle& bundle, int patch_size, const PairConfig& cfg, Rng& rng);

// Weighted binary cross-entropy on cosine similarity of l2-normalized final
// image tokens. Returns 0 with *skipped set when the pair set is empty.
ad::Var matching_loss(const TokenState& final_state, const PatchPairSet& pairs, bool* skipped);

struct LossBreakdown {
    double cam = 0, depth = 0, point = 0, match = 0, total = 0;
    bool match_skipped = false;
};

ad::Var total_loss(const ModelOutputs& outputs, const SceneBundle& gt, const LossWeights& weights,
                   const PairConfig& pair_cfg, int patch_size, Rng& rng, LossBreakdown* breakdown);

}  // namespace mvr
