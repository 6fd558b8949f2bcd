#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mvrecon/losses.hpp"
#include "mvrecon/params.hpp"

namespace mvr {

// Linear warm-up to the peak over warmup_fraction of training, then cosine
// decay to zero: lr(0) = lr(total) = 0.
struct Schedule {
    double peak_lr = 1e-3;
    double warmup_fraction = 0.05;
    int total_steps = 0;
    double clip_norm = 1.0;

    double lr(int step) const;
};

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.05;
};

class AdamW {
public:
    AdamW(ParamStore& params, AdamWConfig cfg = {});

    // Applies one decoupled-decay update to every trainable parameter using
    // the gradients currently stored on the tape leaves. Throws on NaN.
    void step(double lr);
    int steps_taken() const { return t_; }

private:
    ParamStore& params_;
    AdamWConfig cfg_;
    int t_ = 0;
    std::vector<Tensor> m_, v_;  // aligned with params_.names()
};

// Scales all trainable gradients so the global l2 norm is at most clip_norm.
// Returns the pre-clip norm.
double clip_gradients(ParamStore& params, double clip_norm);

struct TrainConfig {
    ModelConfig model;
    Schedule schedule;
    AdamWConfig adamw;
    LossWeights weights;
    PairConfig pairs;
    int min_frames = 1;
    int max_frames = 4;
    std::uint64_t seed = 0;
    std::string out_dir;  // checkpoint + loss log destination; empty = no I/O
    int checkpoint_every = 0;  // 0 = only final
};

struct TrainResult {
    std::vector<LossBreakdown> history;
    bool aborted_nan = false;
    int steps_completed = 0;
};

// Supervised toy loop: per step sample a bundle and a frame count, subset and
// renormalize, forward, four-term total loss, backward, clip, AdamW step.
// Deterministic given (config, data, seed). On NaN loss aborts and leaves the
// last finite parameters in place.
TrainResult train_toy(ParamStore& params, const std::vector<SceneBundle>& data,
                      const TrainConfig& cfg,
                      const std::function<void(int, const LossBreakdown&)>& on_step = nullptr);

}  // namespace mvr
