#include "mvrecon/aggregator.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mvr {

void ModelConfig::validate() const {
    if (image_h % patch_size != 0 || image_w % patch_size != 0)
        throw std::runtime_error("ModelConfig: image size must be divisible by the patch size");
    if (hidden_dim % num_heads != 0)
        throw std::runtime_error("ModelConfig: hidden_dim must be divisible by num_heads");
    if (register_attention_ratio < 0.0 || register_attention_ratio > 1.0)
        throw std::runtime_error("ModelConfig: register_attention_ratio must lie in [0,1]");
    if (patch_size % depth_upsample != 0)
        throw std::runtime_error("ModelConfig: patch_size must be divisible by depth_upsample");
    if (num_blocks < 1 || hidden_dim < num_heads || num_registers < 1)
        throw std::runtime_error("ModelConfig: degenerate configuration");
}

namespace {

Tensor normal_init(Shape shape, Rng& rng, double stddev = 0.02) {
    Tensor t(std::move(shape));
    for (double& x : t.v) x = rng.normal(0.0, stddev);
    return t;
}

void add_layer_params(ParamStore& store, const std::string& prefix, int c, int mlp_ratio,
                      Rng& rng) {
    int h = c * mlp_ratio;
    store.add(prefix + ".ln1.g", Tensor({static_cast<std::size_t>(c)}, 1.0));
    store.add(prefix + ".ln1.b", Tensor({static_cast<std::size_t>(c)}));
    store.add(prefix + ".qkv.w", normal_init({static_cast<std::size_t>(c), static_cast<std::size_t>(3 * c)}, rng));
    store.add(prefix + ".qkv.b", Tensor({static_cast<std::size_t>(3 * c)}));
    store.add(prefix + ".proj.w", normal_init({static_cast<std::size_t>(c), static_cast<std::size_t>(c)}, rng));
    store.add(prefix + ".proj.b", Tensor({static_cast<std::size_t>(c)}));
    store.add(prefix + ".ln2.g", Tensor({static_cast<std::size_t>(c)}, 1.0));
    store.add(prefix + ".ln2.b", Tensor({static_cast<std::size_t>(c)}));
    store.add(prefix + ".mlp.w1", normal_init({static_cast<std::size_t>(c), static_cast<std::size_t>(h)}, rng));
    store.add(prefix + ".mlp.b1", Tensor({static_cast<std::size_t>(h)}));
    store.add(prefix + ".mlp.w2", normal_init({static_cast<std::size_t>(h), static_cast<std::size_t>(c)}, rng));
    store.add(prefix + ".mlp.b2", Tensor({static_cast<std::size_t>(c)}));
}

// Fixed 2-D sinusoidal positional table, (P x C).
Tensor positional_table(const ModelConfig& cfg) {
    int p = cfg.image_tokens(), c = cfg.hidden_dim;
    Tensor t({static_cast<std::size_t>(p), static_cast<std::size_t>(c)});
    int half = c / 2;
    for (int i = 0; i < cfg.grid_h(); ++i) {
        for (int j = 0; j < cfg.grid_w(); ++j) {
            double* row = t.v.data() + static_cast<std::size_t>(i * cfg.grid_w() + j) * c;
            for (int k = 0; k < half; k += 2) {
                double freq = std::pow(10000.0, -static_cast<double>(k) / half);
                row[k] = std::sin(i * freq);
                if (k + 1 < half) row[k + 1] = std::cos(i * freq);
            }
            for (int k = half; k < c; k += 2) {
                double freq = std::pow(10000.0, -static_cast<double>(k - half) / (c - half));
                row[k] = std::sin(j * freq);
                if (k + 1 < c) row[k + 1] = std::cos(j * freq);
            }
        }
    }
    return t;
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamStore store;
    int c = cfg.hidden_dim;
    int patch_dim = 3 * cfg.patch_size * cfg.patch_size;
    store.add("patch_embed.w", normal_init({static_cast<std::size_t>(patch_dim), static_cast<std::size_t>(c)}, rng));
    store.add("patch_embed.b", Tensor({static_cast<std::size_t>(c)}));
    store.add("tokens.cam_ref", normal_init({1, static_cast<std::size_t>(c)}, rng));
    store.add("tokens.cam_other", normal_init({1, static_cast<std::size_t>(c)}, rng));
    store.add("tokens.reg_ref", normal_init({static_cast<std::size_t>(cfg.num_registers), static_cast<std::size_t>(c)}, rng));
    store.add("tokens.reg_other", normal_init({static_cast<std::size_t>(cfg.num_registers), static_cast<std::size_t>(c)}, rng));
    for (int b = 0; b < cfg.num_blocks; ++b) {
        add_layer_params(store, "trunk." + std::to_string(b) + ".global", c, cfg.mlp_ratio, rng);
        add_layer_params(store, "trunk." + std::to_string(b) + ".frame", c, cfg.mlp_ratio, rng);
    }
    for (int b = 0; b < cfg.camera_head_blocks; ++b)
        add_layer_params(store, "camhead." + std::to_string(b), c, cfg.mlp_ratio, rng);
    store.add("camhead.ln.g", Tensor({static_cast<std::size_t>(c)}, 1.0));
    store.add("camhead.ln.b", Tensor({static_cast<std::size_t>(c)}));
    store.add("camhead.mlp.w1", normal_init({static_cast<std::size_t>(c), static_cast<std::size_t>(c)}, rng));
    store.add("camhead.mlp.b1", Tensor({static_cast<std::size_t>(c)}));
    store.add("camhead.mlp.w2", normal_init({static_cast<std::size_t>(c), 9}, rng));
    {
        // Raw focal channels start positive so the ReLU is live from step one.
        Tensor b2({9});
        b2.v[7] = 1.0;
        b2.v[8] = 1.0;
        store.add("camhead.mlp.b2", b2);
    }
    int u = cfg.depth_upsample;
    int taps = cfg.num_taps;
    store.add("depthhead.fuse.w", normal_init({static_cast<std::size_t>(taps * c), static_cast<std::size_t>(c)}, rng));
    store.add("depthhead.fuse.b", Tensor({static_cast<std::size_t>(c)}));
    store.add("depthhead.conv1.w", normal_init({static_cast<std::size_t>(9 * c), static_cast<std::size_t>(c)}, rng));
    store.add("depthhead.conv1.b", Tensor({static_cast<std::size_t>(c)}));
    store.add("depthhead.conv2.w", normal_init({static_cast<std::size_t>(9 * c), static_cast<std::size_t>(c)}, rng));
    store.add("depthhead.conv2.b", Tensor({static_cast<std::size_t>(c)}));
    store.add("depthhead.out.w1", normal_init({static_cast<std::size_t>(c), static_cast<std::size_t>(c)}, rng));
    store.add("depthhead.out.b1", Tensor({static_cast<std::size_t>(c)}));
    store.add("depthhead.out.w2", normal_init({static_cast<std::size_t>(c), static_cast<std::size_t>(2 * u * u)}, rng));
    store.add("depthhead.out.b2", Tensor({static_cast<std::size_t>(2 * u * u)}));
    return store;
}

TokenState tokenize(const Tensor& images, const std::vector<bool>& is_reference,
                    const ParamStore& params, const ModelConfig& cfg) {
    cfg.validate();
    std::size_t n = is_reference.size();
    std::size_t frame_sz = static_cast<std::size_t>(3) * cfg.image_h * cfg.image_w;
    if (images.size() != n * frame_sz)
        throw std::runtime_error("tokenize: image tensor does not match N*3*H*W");

    int r = cfg.patch_size, gw = cfg.grid_w(), gh = cfg.grid_h();
    int p = cfg.image_tokens(), patch_dim = 3 * r * r;
    ad::Var pos = ad::constant(positional_table(cfg));

    TokenState state;
    state.image_tokens = p;
    state.num_registers = cfg.num_registers;
    for (std::size_t fi = 0; fi < n; ++fi) {
        Tensor patches({static_cast<std::size_t>(p), static_cast<std::size_t>(patch_dim)});
        for (int pi = 0; pi < gh; ++pi)
            for (int pj = 0; pj < gw; ++pj) {
                double* row = patches.v.data() + static_cast<std::size_t>(pi * gw + pj) * patch_dim;
                int k = 0;
                for (int ch = 0; ch < 3; ++ch)
                    for (int dy = 0; dy < r; ++dy)
                        for (int dx = 0; dx < r; ++dx)
                            row[k++] = images.v[fi * frame_sz +
                                                (static_cast<std::size_t>(ch) * cfg.image_h +
                                                 pi * r + dy) * cfg.image_w + pj * r + dx];
            }
        ad::Var img = ad::add(
            ad::add_rows(ad::matmul(ad::constant(std::move(patches)), params("patch_embed.w")),
                         params("patch_embed.b")),
            pos);
        const ad::Var& cam = is_reference[fi] ? params("tokens.cam_ref") : params("tokens.cam_other");
        const ad::Var& reg = is_reference[fi] ? params("tokens.reg_ref") : params("tokens.reg_other");
        state.frames.push_back(ad::concat_rows({img, cam, reg}));
    }
    return state;
}

ad::Var attention_layer(const ad::Var& x, const std::vector<int>& chunks,
                        const ParamStore& params, const std::string& prefix,
                        const ModelConfig& cfg) {
    int c = cfg.hidden_dim, heads = cfg.num_heads, d = c / heads;
    double scale = std::sqrt(static_cast<double>(d));

    ad::Var h = ad::layernorm_rows(x, params(prefix + ".ln1.g"), params(prefix + ".ln1.b"));
    ad::Var qkv = ad::add_rows(ad::matmul(h, params(prefix + ".qkv.w")), params(prefix + ".qkv.b"));
    std::vector<ad::Var> head_outs;
    for (int i = 0; i < heads; ++i) {
        ad::Var q = ad::l2norm_rows(ad::slice_cols(qkv, i * d, (i + 1) * d));
        ad::Var k = ad::l2norm_rows(ad::slice_cols(qkv, c + i * d, c + (i + 1) * d));
        ad::Var v = ad::slice_cols(qkv, 2 * c + i * d, 2 * c + (i + 1) * d);
        ad::Var scores = ad::mul_const(ad::matmul(q, ad::transpose(k)), scale);
        ad::Var w = ad::softmax_rows_chunked(scores, chunks);
        head_outs.push_back(ad::matmul_chunked(w, v, chunks));
    }
    ad::Var attn = ad::add_rows(ad::matmul(ad::concat_cols(head_outs), params(prefix + ".proj.w")),
                                params(prefix + ".proj.b"));
    ad::Var y = ad::add(x, attn);

    ad::Var h2 = ad::layernorm_rows(y, params(prefix + ".ln2.g"), params(prefix + ".ln2.b"));
    ad::Var m1 = ad::gelu(ad::add_rows(ad::matmul(h2, params(prefix + ".mlp.w1")),
                                       params(prefix + ".mlp.b1")));
    ad::Var m2 = ad::add_rows(ad::matmul(m1, params(prefix + ".mlp.w2")), params(prefix + ".mlp.b2"));
    return ad::add(y, m2);
}

TokenState frame_attention(const TokenState& state, const ParamStore& params,
                           const std::string& prefix, const ModelConfig& cfg) {
    TokenState out = state;
    for (std::size_t i = 0; i < state.frames.size(); ++i)
        out.frames[i] =
            attention_layer(state.frames[i], {state.rows()}, params, prefix, cfg);
    return out;
}

TokenState global_attention(const TokenState& state, const ParamStore& params,
                            const std::string& prefix, const ModelConfig& cfg) {
    std::vector<int> chunks(state.frames.size(), state.rows());
    ad::Var all = state.frames.size() == 1 ? state.frames[0] : ad::concat_rows(state.frames);
    ad::Var y = attention_layer(all, chunks, params, prefix, cfg);
    TokenState out = state;
    for (std::size_t i = 0; i < state.frames.size(); ++i)
        out.frames[i] = ad::slice_rows(y, i * state.rows(), (i + 1) * state.rows());
    return out;
}

TokenState register_attention(const TokenState& state, const ParamStore& params,
                              const std::string& prefix, const ModelConfig& cfg) {
    int r0 = state.register_row0(), nr = state.num_registers;
    std::vector<ad::Var> regs;
    for (const auto& f : state.frames) regs.push_back(ad::slice_rows(f, r0, r0 + nr));
    std::vector<int> chunks(state.frames.size(), nr);
    ad::Var all = regs.size() == 1 ? regs[0] : ad::concat_rows(regs);
    ad::Var y = attention_layer(all, chunks, params, prefix, cfg);
    TokenState out = state;
    for (std::size_t i = 0; i < state.frames.size(); ++i) {
        ad::Var new_regs = ad::slice_rows(y, i * nr, (i + 1) * nr);
        // Image and camera tokens pass through untouched.
        out.frames[i] = ad::concat_rows({ad::slice_rows(state.frames[i], 0, r0), new_regs});
    }
    return out;
}

bool is_register_block(int block_index, const ModelConfig& cfg) {
    if (cfg.register_attention_ratio <= 0.0) return false;
    int period = static_cast<int>(std::ceil(1.0 / cfg.register_attention_ratio));
    return (block_index + 1) % period == 0;
}

std::vector<int> tap_blocks(const ModelConfig& cfg) {
    std::vector<int> taps;
    for (int t = 1; t <= cfg.num_taps; ++t) {
        int idx = (t * cfg.num_blocks + cfg.num_taps - 1) / cfg.num_taps - 1;
        taps.push_back(idx);
    }
    return taps;
}

TrunkOutput run_trunk(const TokenState& tokens, const ParamStore& params, const ModelConfig& cfg) {
    TrunkOutput out;
    TokenState state = tokens;
    std::vector<int> taps = tap_blocks(cfg);
    for (int b = 0; b < cfg.num_blocks; ++b) {
        std::string base = "trunk." + std::to_string(b);
        state = is_register_block(b, cfg)
                    ? register_attention(state, params, base + ".global", cfg)
                    : global_attention(state, params, base + ".global", cfg);
        state = frame_attention(state, params, base + ".frame", cfg);
        for (int t : taps)
            if (t == b) out.taps.push_back(state);
    }
    out.final_state = state;
    return out;
}

// ---- analytic cost model ----

namespace {

struct LayerCost {
    double flops = 0, attn_flops = 0, memory = 0;
};

// One attention + MLP layer over t tokens of width c.
LayerCost layer_cost(double t, int c, int heads, int mlp_ratio) {
    LayerCost lc;
    double proj = 8.0 * t * c * c;                       // qkv + output projection
    lc.attn_flops = 4.0 * t * t * c;                     // scores + value aggregation
    double mlp = 4.0 * mlp_ratio * t * c * c;
    lc.flops = proj + lc.attn_flops + mlp;
    // Stored activations: ln/qkv/qknorm/attn/proj/residuals/mlp plus the
    // attention maps themselves.
    lc.memory = t * c * (11.0 + 2.0 * mlp_ratio) + 2.0 * heads * t * t;
    return lc;
}

}  // namespace

FlopsReport flops_report(const FlopsConfig& cfg) {
    FlopsReport r;
    r.config = cfg;
    double tf = cfg.image_tokens + 1 + cfg.registers;  // tokens per frame
    double tg = tf * cfg.frames;
    double tr = static_cast<double>(cfg.registers) * cfg.frames;

    LayerCost g = layer_cost(tg, cfg.dim, cfg.heads, cfg.mlp_ratio);
    LayerCost fr = layer_cost(tf, cfg.dim, cfg.heads, cfg.mlp_ratio);
    LayerCost reg = layer_cost(tr, cfg.dim, cfg.heads, cfg.mlp_ratio);
    fr.flops *= cfg.frames;
    fr.attn_flops *= cfg.frames;
    fr.memory *= cfg.frames;

    r.global_layer_flops = g.flops;
    r.frame_layer_flops = fr.flops;
    r.register_layer_flops = reg.flops;
    r.global_layer_attn_flops = g.attn_flops;
    r.frame_layer_attn_flops = fr.attn_flops;
    r.register_layer_attn_flops = reg.attn_flops;

    ModelConfig mc;
    mc.num_blocks = cfg.blocks;
    mc.register_attention_ratio = cfg.ratio;
    for (int b = 0; b < cfg.blocks; ++b)
        if (is_register_block(b, mc)) ++r.num_register_layers;
    int n_reg = r.num_register_layers;
    int n_glob = cfg.blocks - n_reg;

    r.baseline_flops = cfg.blocks * (g.flops + fr.flops);
    r.schedule_flops = n_glob * g.flops + n_reg * reg.flops + cfg.blocks * fr.flops;
    r.flops_saving = 1.0 - r.schedule_flops / r.baseline_flops;
    r.baseline_attn_flops = cfg.blocks * (g.attn_flops + fr.attn_flops);
    r.schedule_attn_flops = n_glob * g.attn_flops + n_reg * reg.attn_flops + cfg.blocks * fr.attn_flops;
    r.baseline_memory = cfg.blocks * (g.memory + fr.memory);
    r.schedule_memory = n_glob * g.memory + n_reg * reg.memory + cfg.blocks * fr.memory;
    r.memory_saving = 1.0 - r.schedule_memory / r.baseline_memory;
    return r;
}

std::string FlopsReport::table() const {
    std::ostringstream os;
    os << "backbone cost model: " << config.frames << " frames x " << config.image_tokens
       << " image tokens, dim " << config.dim << ", " << config.blocks << " blocks, ratio "
       << config.ratio << "\n";
    os << "  register layers          : " << num_register_layers << " of " << config.blocks << "\n";
    os << "  global layer GFLOPs      : " << global_layer_flops / 1e9 << "\n";
    os << "  frame layer GFLOPs       : " << frame_layer_flops / 1e9 << "\n";
    os << "  register layer GFLOPs    : " << register_layer_flops / 1e9 << "\n";
    os << "  backbone GFLOPs baseline : " << baseline_flops / 1e9 << "\n";
    os << "  backbone GFLOPs schedule : " << schedule_flops / 1e9 << "\n";
    os << "  FLOP saving              : " << 100.0 * flops_saving << "%\n";
    os << "  attention GFLOPs baseline: " << baseline_attn_flops / 1e9 << "\n";
    os << "  attention GFLOPs schedule: " << schedule_attn_flops / 1e9 << "\n";
    os << "  activation mem saving    : " << 100.0 * memory_saving << "%\n";
    return os.str();
}

std::string FlopsReport::to_json() const {
    nlohmann::json j;
    j["frames"] = config.frames;
    j["image_tokens"] = config.image_tokens;
    j["registers"] = config.registers;
    j["dim"] = config.dim;
    j["heads"] = config.heads;
    j["blocks"] = config.blocks;
    j["ratio"] = config.ratio;
    j["num_register_layers"] = num_register_layers;
    j["global_layer_flops"] = global_layer_flops;
    j["frame_layer_flops"] = frame_layer_flops;
    j["register_layer_flops"] = register_layer_flops;
    j["baseline_flops"] = baseline_flops;
    j["schedule_flops"] = schedule_flops;
    j["flops_saving"] = flops_saving;
    j["baseline_attn_flops"] = baseline_attn_flops;
    j["schedule_attn_flops"] = schedule_attn_flops;
    j["baseline_memory"] = baseline_memory;
    j["schedule_memory"] = schedule_memory;
    j["memory_saving"] = memory_saving;
    return j.dump(2) + "\n";
}

}  // namespace mvr
