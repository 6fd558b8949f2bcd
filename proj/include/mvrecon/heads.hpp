#pragma once

#include <vector>

#include "mvrecon/aggregator.hpp"
#include "mvrecon/geometry.hpp"

namespace mvr {

// Depth + confidence at full image resolution, flattened H*W. Both strictly
// positive: depth = softplus(raw), confidence = 1 + softplus(raw).
struct DepthPrediction {
    ad::Var depth;
    ad::Var confidence;
    int height = 0;
    int width = 0;
};

// Raw 9-vector per frame, already activated: identity on (q, t), ReLU + eps
// on f. Degenerate all-zero quaternions are flagged at conversion time.
struct CameraPrediction {
    ad::Var g9;

    std::array<double, 9> values() const {
        std::array<double, 9> out{};
        for (int i = 0; i < 9; ++i) out[i] = g9->value.v[i];
        return out;
    }
    bool quaternion_degenerate(double tol = 1e-9) const {
        const auto& v = g9->value.v;
        return v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3] < tol * tol;
    }
    Camera to_camera(int width, int height) const {
        return Camera::from_nine_vector(values(), width, height);
    }
};

std::vector<DepthPrediction> depth_head(const std::vector<TokenState>& taps,
                                        const ParamStore& params, const ModelConfig& cfg);

std::vector<CameraPrediction> camera_head(const TokenState& final_state,
                                          const ParamStore& params, const ModelConfig& cfg);

// The raw-channel -> output-pixel permutation of the pixel shuffle: channel
// k = plane*u^2 + dy*u + dx of token (i, j) lands at pixel (i*u+dy, j*u+dx)
// of that plane. Exposed for the index-permutation oracle.
std::vector<std::int64_t> pixel_shuffle_indices(int grid_h, int grid_w, int u, int plane);

struct ModelOutputs {
    TrunkOutput trunk;
    std::vector<CameraPrediction> cameras;
    std::vector<DepthPrediction> depths;
};

ModelOutputs forward_model(const SceneBundle& bundle, const ParamStore& params,
                           const ModelConfig& cfg);
ModelOutputs forward_images(const Tensor& images, int num_frames, const ParamStore& params,
                            const ModelConfig& cfg);

}  // namespace mvr
