#pragma once

#include <string>
#include <vector>

#include "mvrecon/geometry.hpp"
#include "mvrecon/rng.hpp"

namespace mvr {

struct QualityFeatures {
    double s_trans = 0, s_rot = 0;
    double median_max_parallax = 0;  // degrees
    double linearity = 0, planarity = 0, scattering = 0;
    double completeness = 0;
    double noise_fraction = 0;
    double registration_ratio = 1.0;
    double fov_x = 0, fov_y = 0;  // degrees
    double distortion_ratio = 0;
    double valid_depth_fraction = 0;
};

// Mean squared second difference of camera centers / rotation log-vectors.
// Needs at least three cameras.
std::pair<double, double> trajectory_smoothness(const std::vector<Camera>& cameras);

// Median over sampled points of the maximum angle subtended at the point by
// any pair of cameras that see it (in-frustum, positive depth). Degrees.
// Throws if no sampled point is seen by two cameras.
double parallax_stat(const std::vector<Eigen::Vector3d>& points, const std::vector<Camera>& cameras,
                     int sample_size, Rng& rng);

// (linearity, planarity, scattering) from the sorted covariance eigenvalues
// v1 >= v2 >= v3: ((v1-v2)/v1, (v2-v3)/v1, v3/v1). Throws on a rank-0 cloud.
std::array<double, 3> pca_shape(const std::vector<Eigen::Vector3d>& points);

double completeness(const std::vector<DepthMap>& depths);

// Fraction of points whose mean k-nearest-neighbor distance exceeds the
// global mean by more than two standard deviations.
double noise_fraction(const std::vector<Eigen::Vector3d>& points, int k = 8);

struct ConsistencyResult {
    std::vector<std::vector<std::uint8_t>> valid_masks;  // per frame, H*W
    double valid_fraction = 0;
    bool rejected = false;  // valid_fraction < reject threshold (5%)
};

// A pixel is consistent if its unprojected point reprojects into at least one
// other frame with matching depth (relative tolerance, default 1%).
ConsistencyResult multi_view_consistency(const SceneBundle& bundle, double rel_tol = 0.01,
                                         double reject_below = 0.05);

struct GateThresholds {
    double registration_min = 0.995;
    double fov_min_deg = 30.0;
    double fov_max_deg = 120.0;
    double distortion_max = 0.1;
    double valid_depth_min = 0.05;
    double linearity_max = 0.95;
};

struct GateResult {
    bool accept = true;
    std::vector<std::string> reasons;
};

// All comparisons are strict: a feature exactly at its boundary passes.
GateResult heuristic_gate(const QualityFeatures& f, const GateThresholds& t = {});

// Full feature extraction for one bundle (parallax from sampled valid points).
QualityFeatures compute_quality(const SceneBundle& bundle, Rng& rng, int parallax_samples = 256);

}  // namespace mvr
