#pragma once

#include <string>
#include <vector>

#include "mvrecon/autodiff.hpp"
#include "mvrecon/params.hpp"
#include "mvrecon/rng.hpp"

namespace mvr {

struct ModelConfig {
    int num_blocks = 4;
    int hidden_dim = 64;
    int num_heads = 4;
    int patch_size = 16;
    int num_registers = 16;
    double register_attention_ratio = 0.25;
    int image_h = 32;
    int image_w = 32;
    int mlp_ratio = 4;
    int depth_upsample = 4;      // u: pixel-shuffle factor of the depth head
    int camera_head_blocks = 2;
    int num_taps = 4;
    double focal_eps = 1e-4;

    int grid_h() const { return image_h / patch_size; }
    int grid_w() const { return image_w / patch_size; }
    int image_tokens() const { return grid_h() * grid_w(); }
    int tokens_per_frame() const { return image_tokens() + 1 + num_registers; }
    void validate() const;
};

// Per-frame token matrices of width C. Row layout within a frame is fixed:
// [0, P) image tokens, P the camera token, [P+1, P+1+R) registers.
struct TokenState {
    std::vector<ad::Var> frames;
    int image_tokens = 0;
    int num_registers = 0;

    int camera_row() const { return image_tokens; }
    int register_row0() const { return image_tokens + 1; }
    int rows() const { return image_tokens + 1 + num_registers; }
};

struct TrunkOutput {
    TokenState final_state;
    std::vector<TokenState> taps;  // one per tap layer, ordered
};

// Creates every learnable tensor of the model (trunk, tokenizer, heads).
ParamStore init_params(const ModelConfig& cfg, Rng& rng);

TokenState tokenize(const Tensor& images /* N*3*H*W */, const std::vector<bool>& is_reference,
                    const ParamStore& params, const ModelConfig& cfg);

// One pre-norm attention + MLP layer over x, with the key reduction chunked
// (one chunk per frame) so outputs are invariant to frame permutation at the
// bit level.
ad::Var attention_layer(const ad::Var& x, const std::vector<int>& chunks,
                        const ParamStore& params, const std::string& prefix,
                        const ModelConfig& cfg);

TokenState frame_attention(const TokenState& state, const ParamStore& params,
                           const std::string& prefix, const ModelConfig& cfg);
TokenState global_attention(const TokenState& state, const ParamStore& params,
                            const std::string& prefix, const ModelConfig& cfg);
TokenState register_attention(const TokenState& state, const ParamStore& params,
                              const std::string& prefix, const ModelConfig& cfg);

bool is_register_block(int block_index, const ModelConfig& cfg);
std::vector<int> tap_blocks(const ModelConfig& cfg);

TrunkOutput run_trunk(const TokenState& tokens, const ParamStore& params, const ModelConfig& cfg);

// ---- analytic cost model ----

struct FlopsConfig {
    int frames = 24;
    int image_tokens = 672;  // per frame, excluding camera token and registers
    int registers = 16;
    int dim = 128;
    int heads = 4;
    int blocks = 24;
    double ratio = 0.25;
    int mlp_ratio = 4;
};

struct FlopsReport {
    FlopsConfig config;
    int num_register_layers = 0;
    // Per-layer costs (FLOPs; one multiply-add = 2 FLOPs).
    double global_layer_flops = 0, frame_layer_flops = 0, register_layer_flops = 0;
    double global_layer_attn_flops = 0, frame_layer_attn_flops = 0, register_layer_attn_flops = 0;
    // Backbone totals.
    double baseline_flops = 0, schedule_flops = 0, flops_saving = 0;
    double baseline_attn_flops = 0, schedule_attn_flops = 0;
    // Activation-memory model (stored doubles).
    double baseline_memory = 0, schedule_memory = 0, memory_saving = 0;

    std::string table() const;
    std::string to_json() const;
};

FlopsReport flops_report(const FlopsConfig& cfg);

}  // namespace mvr
