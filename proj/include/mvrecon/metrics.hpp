#pragma once

#include <vector>

#include "mvrecon/geometry.hpp"

namespace mvr {

struct PoseErrorPair {
    int frame_a = 0, frame_b = 0;
    double rot_deg = 0;
    double trans_deg = 0;
    double combined() const { return rot_deg > trans_deg ? rot_deg : trans_deg; }
};

// Relative-pose errors for every unordered frame pair. Pairs whose ground
// truth baseline is (near) zero are skipped; *skipped counts them.
std::vector<PoseErrorPair> pose_errors(const std::vector<Camera>& pred,
                                       const std::vector<Camera>& gt, int* skipped = nullptr);

// AUC@tau in percent via the exact step integral of the pair-accuracy curve.
double pose_auc_from_errors(std::vector<double> errors, double tau);
double pose_auc(const std::vector<Camera>& pred, const std::vector<Camera>& gt, double tau,
                int* skipped = nullptr);

enum class DepthAlignment { none, median_scale };

struct DepthMetrics {
    double abs_rel = 0;
    double delta_125 = 0;  // percent
    double scale = 1.0;    // applied alignment factor
};

DepthMetrics depth_metrics(const std::vector<std::vector<double>>& pred,
                           const std::vector<DepthMap>& gt,
                           DepthAlignment alignment = DepthAlignment::median_scale);

// Mean l2 distance between predicted points (predicted depths unprojected
// through predicted cameras, then normalized to unit space) and ground-truth
// points from a normalized bundle, over gt-valid pixels.
double point_error(const std::vector<std::vector<double>>& pred_depths,
                   const std::vector<Camera>& pred_cameras, const SceneBundle& gt_normalized);

// Mean l2 distance over valid pixels between already-aligned point maps.
double point_error_points(const std::vector<PointMap>& pred, const std::vector<PointMap>& gt);

}  // namespace mvr
