#include "mvrecon/heads.hpp"

#include <stdexcept>

namespace mvr {

namespace {

// 3x3 same-padding convolution over a (gh x gw) grid of C-channel tokens,
// realized as an im2col gather followed by a matmul with a (9C x C) kernel.
ad::Var conv3x3(const ad::Var& x, int gh, int gw, int c, const ad::Var& w, const ad::Var& b) {
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(gh) * gw * 9 * c);
    for (int i = 0; i < gh; ++i)
        for (int j = 0; j < gw; ++j)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int ni = i + dy, nj = j + dx;
                    bool in = ni >= 0 && ni < gh && nj >= 0 && nj < gw;
                    for (int ch = 0; ch < c; ++ch)
                        idx.push_back(in ? static_cast<std::int64_t>(ni * gw + nj) * c + ch : -1);
                }
    ad::Var cols = ad::gather(x, std::move(idx),
                              {static_cast<std::size_t>(gh * gw), static_cast<std::size_t>(9 * c)});
    return ad::add_rows(ad::matmul(cols, w), b);
}

}  // namespace

std::vector<std::int64_t> pixel_shuffle_indices(int grid_h, int grid_w, int u, int plane) {
    std::vector<std::int64_t> idx;
    int oh = grid_h * u, ow = grid_w * u, ch = 2 * u * u;
    idx.reserve(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            int i = y / u, dy = y % u, j = x / u, dx = x % u;
            idx.push_back(static_cast<std::int64_t>(i * grid_w + j) * ch + plane * u * u + dy * u + dx);
        }
    return idx;
}

std::vector<DepthPrediction> depth_head(const std::vector<TokenState>& taps,
                                        const ParamStore& params, const ModelConfig& cfg) {
    if (taps.size() != static_cast<std::size_t>(cfg.num_taps))
        throw std::runtime_error("depth_head: expected " + std::to_string(cfg.num_taps) + " taps");
    int gh = cfg.grid_h(), gw = cfg.grid_w(), c = cfg.hidden_dim, p = cfg.image_tokens();
    int u = cfg.depth_upsample;
    int s = cfg.patch_size / u;  // native-to-full-resolution nearest factor
    std::size_t n = taps[0].frames.size();
    for (const auto& t : taps)
        if (t.frames.size() != n || t.image_tokens != p)
            throw std::runtime_error("depth_head: inconsistent tap shapes");

    std::vector<DepthPrediction> out;
    for (std::size_t fi = 0; fi < n; ++fi) {
        std::vector<ad::Var> feats;
        for (const auto& t : taps) feats.push_back(ad::slice_rows(t.frames[fi], 0, p));
        ad::Var x = ad::gelu(ad::add_rows(ad::matmul(ad::concat_cols(feats), params("depthhead.fuse.w")),
                                          params("depthhead.fuse.b")));
        x = ad::gelu(conv3x3(x, gh, gw, c, params("depthhead.conv1.w"), params("depthhead.conv1.b")));
        x = ad::gelu(conv3x3(x, gh, gw, c, params("depthhead.conv2.w"), params("depthhead.conv2.b")));
        x = ad::gelu(ad::add_rows(ad::matmul(x, params("depthhead.out.w1")), params("depthhead.out.b1")));
        x = ad::add_rows(ad::matmul(x, params("depthhead.out.w2")), params("depthhead.out.b2"));

        Shape native{static_cast<std::size_t>(gh * u), static_cast<std::size_t>(gw * u)};
        ad::Var depth_raw = ad::gather(x, pixel_shuffle_indices(gh, gw, u, 0), native);
        ad::Var conf_raw = ad::gather(x, pixel_shuffle_indices(gh, gw, u, 1), native);

        DepthPrediction dp;
        dp.height = cfg.image_h;
        dp.width = cfg.image_w;
        if (s > 1) {
            std::vector<std::int64_t> up;
            up.reserve(static_cast<std::size_t>(cfg.image_h) * cfg.image_w);
            for (int y = 0; y < cfg.image_h; ++y)
                for (int x2 = 0; x2 < cfg.image_w; ++x2)
                    up.push_back(static_cast<std::int64_t>(y / s) * (gw * u) + x2 / s);
            Shape full{static_cast<std::size_t>(cfg.image_h), static_cast<std::size_t>(cfg.image_w)};
            depth_raw = ad::gather(depth_raw, up, full);
            conf_raw = ad::gather(conf_raw, std::move(up), full);
        }
        dp.depth = ad::softplus(depth_raw);
        dp.confidence = ad::add_const(ad::softplus(conf_raw), 1.0);
        out.push_back(std::move(dp));
    }
    return out;
}

std::vector<CameraPrediction> camera_head(const TokenState& final_state,
                                          const ParamStore& params, const ModelConfig& cfg) {
    int p = final_state.image_tokens, nr = final_state.num_registers;
    int per_frame = 1 + nr;
    std::size_t n = final_state.frames.size();

    std::vector<ad::Var> parts;
    for (const auto& f : final_state.frames)
        parts.push_back(ad::slice_rows(f, p, p + per_frame));
    ad::Var x = parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
    std::vector<int> chunks(n, per_frame);
    for (int b = 0; b < cfg.camera_head_blocks; ++b)
        x = attention_layer(x, chunks, params, "camhead." + std::to_string(b), cfg);

    std::vector<CameraPrediction> out;
    for (std::size_t fi = 0; fi < n; ++fi) {
        ad::Var cam = ad::slice_rows(x, fi * per_frame, fi * per_frame + 1);
        cam = ad::layernorm_rows(cam, params("camhead.ln.g"), params("camhead.ln.b"));
        cam = ad::gelu(ad::add_rows(ad::matmul(cam, params("camhead.mlp.w1")), params("camhead.mlp.b1")));
        cam = ad::add_rows(ad::matmul(cam, params("camhead.mlp.w2")), params("camhead.mlp.b2"));
        ad::Var qt = ad::slice_cols(cam, 0, 7);
        ad::Var f = ad::add_const(ad::relu(ad::slice_cols(cam, 7, 9)), cfg.focal_eps);
        CameraPrediction cp;
        cp.g9 = ad::reshape(ad::concat_cols({qt, f}), {9});
        out.push_back(std::move(cp));
    }
    return out;
}

ModelOutputs forward_images(const Tensor& images, int num_frames, const ParamStore& params,
                            const ModelConfig& cfg) {
    std::vector<bool> is_ref(num_frames, false);
    if (num_frames > 0) is_ref[0] = true;
    TokenState tokens = tokenize(images, is_ref, params, cfg);
    ModelOutputs out;
    out.trunk = run_trunk(tokens, params, cfg);
    out.cameras = camera_head(out.trunk.final_state, params, cfg);
    out.depths = depth_head(out.trunk.taps, params, cfg);
    return out;
}

ModelOutputs forward_model(const SceneBundle& bundle, const ParamStore& params,
                           const ModelConfig& cfg) {
    if (bundle.height != cfg.image_h || bundle.width != cfg.image_w)
        throw std::runtime_error("forward_model: bundle resolution does not match the model config");
    Tensor images({static_cast<std::size_t>(bundle.num_frames), 3,
                   static_cast<std::size_t>(bundle.height), static_cast<std::size_t>(bundle.width)},
                  bundle.images);
    return forward_images(images, bundle.num_frames, params, cfg);
}

}  // namespace mvr
