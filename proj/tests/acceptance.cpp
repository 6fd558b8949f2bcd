// End-to-end acceptance checks. Each check prints exactly one PASS/FAIL line;
// the process exits nonzero if any check fails. argv[1] must point at the CLI
// binary (used by the determinism check).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mvrecon/distill.hpp"
#include "mvrecon/engine.hpp"
#include "mvrecon/losses.hpp"
#include "mvrecon/metrics.hpp"
#include "mvrecon/quality.hpp"
#include "mvrecon/synthetic.hpp"

namespace fs = std::filesystem;
using namespace mvr;
namespace a = ad;

namespace {

SceneBundle plane_bundle(int frames, int side, std::uint64_t seed) {
    SyntheticConfig sc;
    sc.kind = SceneKind::plane;
    sc.num_frames = frames;
    sc.height = sc.width = side;
    sc.seed = seed;
    return make_synthetic(sc);
}

struct Check {
    bool ok = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

// ---- 1: gradient exactness ----------------------------------------------

Check check_gradients() {
    Check c;
    auto t0 = std::chrono::steady_clock::now();

    ModelConfig cfg;
    cfg.num_blocks = 2;
    cfg.hidden_dim = 32;
    cfg.num_heads = 4;
    cfg.patch_size = 4;  // 32x32 image -> 8x8 token grid
    cfg.depth_upsample = 4;
    cfg.num_registers = 4;
    cfg.image_h = cfg.image_w = 32;

    SceneBundle gt = normalize_scene(plane_bundle(3, 32, 5));
    Rng rng(11);
    ParamStore params = init_params(cfg, rng);
    LossWeights lw;
    PairConfig pc;

    auto eval = [&]() {
        Rng pair_rng(7);
        ModelOutputs out = forward_model(gt, params, cfg);
        return total_loss(out, gt, lw, pc, cfg.patch_size, pair_rng, nullptr);
    };

    params.zero_grads();
    a::Var loss = eval();
    a::backward(loss);
    std::map<std::string, Tensor> grads;
    for (const auto& name : params.names()) grads[name] = params(name)->grad;

    Rng pick(13);
    double worst = 0.0;
    std::string worst_at;
    for (const auto& name : params.names()) {
        Tensor& val = params.entry(name).var->value;
        for (int s = 0; s < 2; ++s) {
            std::size_t i = static_cast<std::size_t>(pick.uniform_int(
                0, static_cast<std::int64_t>(val.size()) - 1));
            double v0 = val.v[i];
            double h = 1e-6 * std::max(1.0, std::fabs(v0));
            val.v[i] = v0 + h;
            double lp = eval()->value.v[0];
            val.v[i] = v0 - h;
            double lm = eval()->value.v[0];
            val.v[i] = v0;
            double fd = (lp - lm) / (2.0 * h);
            double g = grads[name].v[i];
            double rel = std::fabs(g - fd) / std::max({std::fabs(g), std::fabs(fd), 1e-4});
            if (rel > worst) {
                worst = rel;
                worst_at = name;
            }
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "max relative gradient error " << worst << " (at " << worst_at << "), " << secs << " s";
    c.require(worst < 1e-3, os.str());
    c.require(secs < 120.0, "runtime " + std::to_string(secs) + " s exceeds 2 min");
    c.detail = c.ok ? os.str() : c.detail;
    return c;
}

// ---- 2: permutation equivariance ----------------------------------------

SceneBundle swap_frames(const SceneBundle& b, int x, int y) {
    SceneBundle out = b;
    std::size_t fsz = static_cast<std::size_t>(3) * b.height * b.width;
    std::copy(b.images.begin() + x * fsz, b.images.begin() + (x + 1) * fsz,
              out.images.begin() + y * fsz);
    std::copy(b.images.begin() + y * fsz, b.images.begin() + (y + 1) * fsz,
              out.images.begin() + x * fsz);
    std::swap(out.depths[x], out.depths[y]);
    std::swap(out.cameras[x], out.cameras[y]);
    return out;
}

Check check_equivariance() {
    Check c;
    ModelConfig cfg;
    cfg.num_blocks = 2;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.patch_size = 4;
    cfg.depth_upsample = 4;
    cfg.num_registers = 4;
    cfg.image_h = cfg.image_w = 8;
    cfg.register_attention_ratio = 0.5;

    SceneBundle b = plane_bundle(3, 8, 6);
    SceneBundle s = swap_frames(b, 1, 2);
    Rng rng(21);
    ParamStore params = init_params(cfg, rng);
    ModelOutputs oa = forward_model(b, params, cfg);
    ModelOutputs ob = forward_model(s, params, cfg);

    std::vector<int> map{0, 2, 1};
    for (int f = 0; f < 3 && c.ok; ++f) {
        const auto& ta = oa.trunk.final_state.frames[f]->value.v;
        const auto& tb = ob.trunk.final_state.frames[map[f]]->value.v;
        c.require(ta == tb, "trunk tokens differ for frame " + std::to_string(f));
        c.require(oa.cameras[f].g9->value.v == ob.cameras[map[f]].g9->value.v,
                  "camera prediction differs for frame " + std::to_string(f));
        c.require(oa.depths[f].depth->value.v == ob.depths[map[f]].depth->value.v,
                  "depth prediction differs for frame " + std::to_string(f));
        c.require(oa.depths[f].confidence->value.v == ob.depths[map[f]].confidence->value.v,
                  "confidence differs for frame " + std::to_string(f));
    }
    for (std::size_t tap = 0; tap < oa.trunk.taps.size() && c.ok; ++tap)
        for (int f = 0; f < 3; ++f)
            c.require(oa.trunk.taps[tap].frames[f]->value.v ==
                          ob.trunk.taps[tap].frames[map[f]]->value.v,
                      "tap " + std::to_string(tap) + " differs");
    if (c.ok) c.detail = "trunk, camera, and depth outputs permute bit-exactly";
    return c;
}

// ---- 3: register-attention isolation ------------------------------------

Check check_register_isolation() {
    Check c;
    ModelConfig cfg;
    cfg.num_blocks = 2;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.patch_size = 4;
    cfg.depth_upsample = 4;
    cfg.num_registers = 4;
    cfg.image_h = cfg.image_w = 8;

    Rng rng(23);
    ParamStore params = init_params(cfg, rng);
    for (int it = 0; it < 1000 && c.ok; ++it) {
        Tensor images({2, 3, 8, 8});
        for (double& v : images.v) v = rng.uniform();
        TokenState st = tokenize(images, {true, false}, params, cfg);
        TokenState out = register_attention(st, params, "trunk.0.global", cfg);
        for (int f = 0; f < 2 && c.ok; ++f)
            for (int r = 0; r < st.register_row0() && c.ok; ++r)
                for (int col = 0; col < cfg.hidden_dim; ++col)
                    if (out.frames[f]->value.at2(r, col) != st.frames[f]->value.at2(r, col)) {
                        c.require(false, "non-register token changed at iteration " +
                                             std::to_string(it));
                        break;
                    }
    }
    if (c.ok) c.detail = "non-register tokens bit-identical across 1000 random inputs";
    return c;
}

// ---- 4: FLOP claims ------------------------------------------------------

Check check_flops() {
    Check c;
    FlopsConfig fc;  // 24 frames, 672 tokens, 24 blocks, dim 128, ratio 0.25
    FlopsReport rep = flops_report(fc);
    std::ostringstream os;
    os << "backbone saving " << 100.0 * rep.flops_saving << "% at 25% replacement";
    c.require(rep.flops_saving >= 0.18 && rep.flops_saving <= 0.28, os.str());

    FlopsConfig all = fc;
    all.ratio = 1.0;
    FlopsReport rall = flops_report(all);
    double frac = rall.schedule_flops / rall.baseline_flops;
    c.require(frac <= 0.10,
              "all-replacement total " + std::to_string(100.0 * frac) + "% of baseline");

    // Instrumented tiny forward vs. the analytic model.
    ModelConfig cfg;
    cfg.num_blocks = 4;
    cfg.hidden_dim = 32;
    cfg.num_heads = 4;
    cfg.patch_size = 4;
    cfg.depth_upsample = 4;
    cfg.num_registers = 4;
    cfg.image_h = cfg.image_w = 16;
    Rng rng(31);
    ParamStore params = init_params(cfg, rng);
    Tensor images({3, 3, 16, 16});
    for (double& v : images.v) v = rng.uniform();
    TokenState st = tokenize(images, {true, false, false}, params, cfg);
    a::reset_flop_count();
    a::flop_counting = true;
    run_trunk(st, params, cfg);
    a::flop_counting = false;

    FlopsConfig tiny;
    tiny.frames = 3;
    tiny.image_tokens = cfg.image_tokens();
    tiny.registers = cfg.num_registers;
    tiny.dim = cfg.hidden_dim;
    tiny.heads = cfg.num_heads;
    tiny.blocks = cfg.num_blocks;
    tiny.ratio = cfg.register_attention_ratio;
    tiny.mlp_ratio = cfg.mlp_ratio;
    double analytic = flops_report(tiny).schedule_flops;
    double err = std::fabs(static_cast<double>(a::flop_count) - analytic) / analytic;
    c.require(err < 0.01, "instrumented/analytic mismatch " + std::to_string(100.0 * err) + "%");
    if (c.ok) {
        os << "; all-replacement " << 100.0 * frac << "%; count model error "
           << 100.0 * err << "%";
        c.detail = os.str();
    }
    return c;
}

// ---- 5: loss fixed points ------------------------------------------------

Check check_loss_fixed_points() {
    Check c;
    SceneBundle b = normalize_scene(plane_bundle(2, 8, 7));
    const Camera& cam = b.cameras[1];
    const DepthMap& gd = b.depths[1];

    Tensor g9t({9});
    auto nv = cam.nine_vector();
    for (int i = 0; i < 9; ++i) g9t.v[i] = nv[i];
    CameraPrediction pcam{a::constant(g9t)};
    std::vector<CameraPrediction> pcams;
    for (const Camera& gcam : b.cameras) {
        Tensor t({9});
        auto v = gcam.nine_vector();
        for (int i = 0; i < 9; ++i) t.v[i] = v[i];
        pcams.push_back({a::constant(t)});
    }
    c.require(camera_loss(pcams, b.cameras)->value.v[0] == 0.0, "camera loss not exactly zero");

    DepthPrediction pd;
    pd.height = gd.height;
    pd.width = gd.width;
    Shape hw{static_cast<std::size_t>(gd.height), static_cast<std::size_t>(gd.width)};
    pd.depth = a::constant(Tensor(hw, gd.values));
    pd.confidence = a::constant(Tensor(hw, 1.0));
    c.require(depth_loss(pd, gd, 0.1)->value.v[0] == 0.0, "depth loss not exactly zero");

    // Perfect points: the model's own unprojection of the exact depth/camera.
    auto maps = ad_unproject(pd.depth, pcam.g9, gd.height, gd.width);
    PointMap pm(gd.height, gd.width);
    for (std::size_t k = 0; k < gd.npix(); ++k) {
        pm.points[k] = Eigen::Vector3d(maps[0]->value.v[k], maps[1]->value.v[k],
                                       maps[2]->value.v[k]);
        pm.valid[k] = gd.valid[k];
    }
    c.require(point_loss_frame(pd, pcam, pm, gd, 0.1)->value.v[0] == 0.0,
              "point loss not exactly zero");

    // Zero-similarity matching: one positive + one negative of orthogonal
    // one-hot tokens -> softplus(0) + softplus(0).
    TokenState st;
    st.image_tokens = 4;
    st.num_registers = 2;
    for (int f = 0; f < 2; ++f) {
        Tensor t({7, 8});
        for (int r = 0; r < 7; ++r) t.at2(r, (r + f * 3) % 8) = 2.0;
        st.frames.push_back(a::constant(std::move(t)));
    }
    PatchPairSet pairs;
    pairs.positives.push_back({0, 0, 1, 1, 1.0, 0, 0});
    pairs.negatives.push_back({0, 1, 1, 0, 0.0, 100, 1});
    bool skipped = true;
    double match = matching_loss(st, pairs, &skipped)->value.v[0];
    c.require(!skipped && std::fabs(match - 2.0 * std::log(2.0)) < 1e-10,
              "matching loss at zero similarity is " + std::to_string(match));
    if (c.ok) c.detail = "camera/depth/point losses exactly 0; matching = 2 ln 2";
    return c;
}

// ---- 6: pair-construction oracle ----------------------------------------

Check check_pair_oracle() {
    Check c;
    SceneBundle b = plane_bundle(2, 32, 17);
    int patch = 8, gw = b.width / patch;
    PairConfig pc;
    pc.exhaustive = true;
    Rng rng(1);
    PatchPairSet got = build_pairs(b, patch, pc, rng);

    using Key = std::tuple<int, int, int, int>;
    std::set<Key> oracle;
    for (int fa = 0; fa < 2; ++fa) {
        int fb = 1 - fa;
        const Camera& ca = b.cameras[fa];
        const Camera& cb = b.cameras[fb];
        Eigen::Matrix3d kb = cb.intrinsics(), rb = cb.rotation();
        Eigen::Vector3d tb = cb.translation();
        for (int q = 0; q < gw * gw; ++q) {
            std::map<int, int> hits;
            int total = 0;
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px) {
                    int i = (q / gw) * patch + py, j = (q % gw) * patch + px;
                    std::size_t k = static_cast<std::size_t>(i) * b.width + j;
                    if (!b.depths[fa].valid[k]) continue;
                    Eigen::Vector3d x =
                        unproject_pixel(j + 0.5, i + 0.5, b.depths[fa].values[k], ca);
                    Eigen::Vector3d xc = rb * x + tb;
                    if (xc.z() <= 0) continue;
                    Eigen::Vector3d uvw = kb * xc;
                    double u = uvw.x() / uvw.z(), v = uvw.y() / uvw.z();
                    if (u < 4 || u >= b.width - 4 || v < 4 || v >= b.height - 4) continue;
                    std::size_t tk = static_cast<std::size_t>(static_cast<int>(v)) * b.width +
                                     static_cast<int>(u);
                    if (!b.depths[fb].valid[tk]) continue;
                    if (std::fabs(xc.z() - b.depths[fb].values[tk]) >
                        0.01 * b.depths[fb].values[tk])
                        continue;
                    ++hits[(static_cast<int>(v) / patch) * gw + static_cast<int>(u) / patch];
                    ++total;
                }
            for (const auto& [tp, cnt] : hits)
                if (static_cast<double>(cnt) / total > 0.10) oracle.insert({fa, q, fb, tp});
        }
    }
    std::set<Key> got_set;
    for (const auto& p : got.positives)
        got_set.insert({p.frame_a, p.patch_a, p.frame_b, p.patch_b});
    c.require(!oracle.empty(), "oracle produced no positives");
    c.require(got_set == oracle, "positive sets differ (" + std::to_string(got_set.size()) +
                                     " vs " + std::to_string(oracle.size()) + ")");
    if (c.ok)
        c.detail = "positives equal the exhaustive oracle (" +
                   std::to_string(oracle.size()) + " pairs)";
    return c;
}

// ---- 7: toy overfit ------------------------------------------------------

Check check_overfit() {
    Check c;
    auto t0 = std::chrono::steady_clock::now();

    SceneBundle raw = plane_bundle(3, 16, 9);
    SceneBundle norm = normalize_scene(raw);

    TrainConfig cfg;
    cfg.model.num_blocks = 2;
    cfg.model.hidden_dim = 32;
    cfg.model.num_heads = 4;
    cfg.model.patch_size = 4;
    cfg.model.depth_upsample = 4;
    cfg.model.num_registers = 4;
    cfg.model.image_h = cfg.model.image_w = 16;
    cfg.schedule.total_steps = 500;
    cfg.schedule.peak_lr = 3e-3;
    cfg.min_frames = cfg.max_frames = 3;
    cfg.seed = 4;

    Rng rng(2);
    ParamStore params = init_params(cfg.model, rng);

    auto measure = [&]() {
        ModelOutputs out = forward_model(norm, params, cfg.model);
        std::vector<std::vector<double>> pd;
        std::vector<Camera> pcams;
        for (int f = 0; f < 3; ++f) {
            const auto& v = out.depths[f].depth->value.v;
            pd.emplace_back(v.begin(), v.end());
            pcams.push_back(out.cameras[f].to_camera(norm.width, norm.height));
        }
        return point_error(pd, pcams, norm);
    };

    double before = measure();
    TrainResult res = train_toy(params, {raw}, cfg);
    double after = measure();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::ostringstream os;
    os << "point error " << before << " -> " << after << " (" << before / after << "x, " << secs
       << " s)";
    c.require(!res.aborted_nan, "training aborted on non-finite loss");
    // First verified run reduced the error 10.28x; pinned with a little slack,
    // still well above the 5x requirement.
    c.require(after * 10.0 <= before, os.str());
    c.require(secs < 600.0, "runtime " + std::to_string(secs) + " s exceeds 10 min");
    if (c.ok) c.detail = os.str();
    return c;
}

// ---- 8: EMA convergence --------------------------------------------------

Check check_ema() {
    Check c;
    ModelConfig cfg;
    cfg.num_blocks = 1;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.patch_size = 4;
    cfg.depth_upsample = 4;
    cfg.num_registers = 2;
    cfg.image_h = cfg.image_w = 8;

    Rng r1(51), r2(52);
    ParamStore student = init_params(cfg, r1);
    ParamStore teacher = init_params(cfg, r2);

    auto dist = [&]() {
        double d = 0.0;
        for (const auto& name : teacher.names()) {
            const auto& t = teacher(name)->value.v;
            const auto& s = student(name)->value.v;
            for (std::size_t i = 0; i < t.size(); ++i) d += (t[i] - s[i]) * (t[i] - s[i]);
        }
        return std::sqrt(d);
    };

    double m = 0.9;
    int k = 12;
    double d0 = dist();
    for (int i = 0; i < k; ++i) ema_update(teacher, student, m);
    double dk = dist();
    double expect = std::pow(m, k) * d0;
    c.require(std::fabs(dk - expect) / expect < 1e-10,
              "distance after " + std::to_string(k) + " steps is " + std::to_string(dk) +
                  ", expected " + std::to_string(expect));

    // SSL steps must leave the frozen heads bit-identical.
    student.set_trainable_prefix("camhead.", false);
    student.set_trainable_prefix("depthhead.", false);
    std::map<std::string, Tensor> before = student.snapshot();
    SceneBundle b = plane_bundle(2, 8, 8);
    DistillConfig dc;
    dc.spec.mask_side_min = 2;
    dc.spec.mask_side_max = 4;
    AdamW opt(student, {});
    Rng srng(3);
    for (int step = 0; step < 3; ++step) {
        student.zero_grads();
        distill_step(student, teacher, b, cfg, dc, srng);
        clip_gradients(student, 1.0);
        opt.step(1e-3);
        ema_update(teacher, student, 0.99);
    }
    bool heads_same = true, trunk_moved = false;
    for (const auto& name : student.names()) {
        bool head = name.rfind("camhead.", 0) == 0 || name.rfind("depthhead.", 0) == 0;
        bool same = student(name)->value.v == before.at(name).v;
        if (head && !same) heads_same = false;
        if (!head && !same) trunk_moved = true;
    }
    c.require(heads_same, "a frozen head parameter moved during SSL");
    c.require(trunk_moved, "no trunk parameter moved during SSL");
    if (c.ok) c.detail = "||teacher - student|| shrinks by m^k; frozen heads bit-identical";
    return c;
}

// ---- 9: quality features -------------------------------------------------

Check check_quality() {
    Check c;
    auto cam_at = [](std::array<double, 3> t) {
        Camera cm;
        cm.t = t;
        cm.f = {1.5, 1.5};
        cm.width = cm.height = 32;
        return cm;
    };
    std::vector<Camera> zigzag{cam_at({0, 0, 0}), cam_at({1, 0, 0}), cam_at({0, 0, 0}),
                               cam_at({1, 0, 0})};
    auto [st, sr] = trajectory_smoothness(zigzag);
    c.require(std::fabs(st - 4.0) < 1e-8 && std::fabs(sr) < 1e-8, "smoothness oracle failed");

    std::vector<Camera> rig{cam_at({-0.1, 0, 0}), cam_at({0.1, 0, 0})};
    Rng rng(1);
    double par = parallax_stat({{0.0, 0.0, 1.0}}, rig, 8, rng);
    c.require(std::fabs(par - 2.0 * std::atan(0.1) * 180.0 / M_PI) < 1e-8,
              "parallax closed form failed");

    std::vector<Eigen::Vector3d> pts{{3, 0, 0}, {-3, 0, 0}, {0, 2, 0},
                                     {0, -2, 0}, {0, 0, 1}, {0, 0, -1}};
    Eigen::Matrix3d r = quat_to_rotmat(canonicalize_quat({0.9, 0.1, 0.2, 0.3}));
    for (auto& p : pts) p = r * p + Eigen::Vector3d(0.3, -0.2, 0.5);
    auto shape = pca_shape(pts);
    c.require(std::fabs(shape[0] - 5.0 / 9.0) < 1e-8 && std::fabs(shape[1] - 3.0 / 9.0) < 1e-8 &&
                  std::fabs(shape[2] - 1.0 / 9.0) < 1e-8,
              "pca shape oracle failed");

    std::vector<Eigen::Vector3d> cloud;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) cloud.emplace_back(0.1 * i, 0.1 * j, 0.0);
    cloud.emplace_back(10.0, 10.0, 10.0);
    c.require(std::fabs(noise_fraction(cloud, 4) - 1.0 / 21.0) < 1e-8,
              "noise fraction oracle failed");

    SceneBundle b = plane_bundle(4, 16, 9);
    ConsistencyResult good = multi_view_consistency(b);
    c.require(!good.rejected && good.valid_fraction > 0.9, "exact bundle flagged inconsistent");
    SceneBundle broken = b;
    for (int f = 0; f < 4; ++f)
        for (double& v : broken.depths[f].values) v *= static_cast<double>(f + 1);
    c.require(multi_view_consistency(broken).rejected, "mismatched scales not rejected");

    QualityFeatures boundary;
    boundary.registration_ratio = 0.995;
    boundary.fov_x = 30.0;
    boundary.fov_y = 120.0;
    boundary.distortion_ratio = 0.1;
    boundary.valid_depth_fraction = 0.05;
    boundary.linearity = 0.95;
    c.require(heuristic_gate(boundary).accept, "boundary feature values rejected");
    QualityFeatures bad = boundary;
    bad.registration_ratio = 0.994;
    bad.fov_x = 20.0;
    bad.distortion_ratio = 0.2;
    bad.valid_depth_fraction = 0.01;
    bad.linearity = 0.99;
    c.require(heuristic_gate(bad).reasons.size() == 5, "violations not all reported");
    if (c.ok) c.detail = "smoothness/parallax/pca/noise/consistency oracles and gate thresholds";
    return c;
}

// ---- 10: metric oracles --------------------------------------------------

Check check_metrics() {
    Check c;
    c.require(std::fabs(pose_auc_from_errors({1.0, 2.0, 4.0}, 3.0) - 100.0 / 3.0) < 1e-12,
              "step-integral auc oracle failed");
    c.require(pose_auc_from_errors({0.0}, 3.0) == 100.0, "zero-error auc is not 100");

    SyntheticConfig sc;
    sc.kind = SceneKind::orbit;
    sc.num_frames = 6;
    sc.height = sc.width = 16;
    SceneBundle orbit = make_synthetic(sc);
    c.require(pose_auc(orbit.cameras, orbit.cameras, 3.0) > 100.0 - 1e-4,
              "perfect pose prediction scores below 100");

    // Pixelwise depth oracle.
    Rng rng(5);
    std::vector<DepthMap> gt;
    std::vector<std::vector<double>> pred;
    for (int f = 0; f < 2; ++f) {
        DepthMap d(4, 4);
        std::vector<double> p(16);
        for (int k = 0; k < 16; ++k) {
            d.values[k] = rng.uniform(1.0, 2.0);
            d.valid[k] = rng.uniform() < 0.7 ? 1 : 0;
            p[k] = rng.uniform(0.5, 2.0);
        }
        gt.push_back(d);
        pred.push_back(p);
    }
    std::vector<double> ratios;
    for (int f = 0; f < 2; ++f)
        for (int k = 0; k < 16; ++k)
            if (gt[f].valid[k]) ratios.push_back(gt[f].values[k] / pred[f][k]);
    std::sort(ratios.begin(), ratios.end());
    std::size_t n = ratios.size();
    double scale = n % 2 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
    double abs_rel = 0.0;
    int count = 0, within = 0;
    for (int f = 0; f < 2; ++f)
        for (int k = 0; k < 16; ++k) {
            if (!gt[f].valid[k]) continue;
            double d = gt[f].values[k], p = scale * pred[f][k];
            abs_rel += std::fabs(p - d) / d;
            if (std::max(p / d, d / p) < 1.25) ++within;
            ++count;
        }
    DepthMetrics dm = depth_metrics(pred, gt);
    c.require(std::fabs(dm.scale - scale) < 1e-10 &&
                  std::fabs(dm.abs_rel - abs_rel / count) < 1e-10 &&
                  std::fabs(dm.delta_125 - 100.0 * within / count) < 1e-10,
              "pixelwise depth oracle failed");

    std::vector<std::vector<double>> exact;
    SceneBundle norm = normalize_scene(plane_bundle(2, 8, 3));
    for (const auto& d : norm.depths) exact.push_back(d.values);
    DepthMetrics perfect = depth_metrics(exact, norm.depths);
    c.require(perfect.abs_rel < 1e-12 && perfect.delta_125 == 100.0,
              "perfect depth prediction not AbsRel=0 / delta=100");
    c.require(point_error(exact, norm.cameras, norm) < 1e-9, "perfect point error not ~0");

    std::vector<PointMap> gpm, ppm;
    for (int f = 0; f < 2; ++f) {
        gpm.push_back(unproject(norm.depths[f], norm.cameras[f]));
        ppm.push_back(gpm.back());
    }
    Eigen::Vector3d delta(0.01, -0.02, 0.03);
    for (auto& pm : ppm)
        for (auto& p : pm.points) p += delta;
    c.require(std::fabs(point_error_points(ppm, gpm) - delta.norm()) < 1e-10,
              "shifted-cloud point error oracle failed");
    if (c.ok) c.detail = "auc/depth/point oracles and perfect-prediction fixed points";
    return c;
}

// ---- 11: CLI determinism -------------------------------------------------

int run_cli(const std::string& cli, const std::string& args) {
    std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

bool same_tree(const fs::path& x, const fs::path& y, std::string& why) {
    std::set<std::string> fx, fy;
    for (const auto& e : fs::recursive_directory_iterator(x))
        if (e.is_regular_file()) fx.insert(fs::relative(e.path(), x).string());
    for (const auto& e : fs::recursive_directory_iterator(y))
        if (e.is_regular_file()) fy.insert(fs::relative(e.path(), y).string());
    if (fx != fy) {
        why = "file sets differ";
        return false;
    }
    for (const auto& rel : fx) {
        std::ifstream a(x / rel, std::ios::binary), b(y / rel, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        if (sa != sb) {
            why = "contents differ: " + rel;
            return false;
        }
    }
    return true;
}

Check check_determinism(const std::string& cli) {
    Check c;
    if (cli.empty()) {
        c.require(false, "no CLI binary path supplied (argv[1])");
        return c;
    }
    fs::path root = fs::temp_directory_path() / "mvrecon-accept";
    std::error_code ec;
    fs::remove_all(root, ec);

    for (const std::string run : {"a", "b"}) {
        fs::path d = root / run;
        fs::create_directories(d);
        std::string dd = d.string();
        bool ok =
            run_cli(cli, "make-synthetic --kind plane --frames 3 --size 16 --seed 5 --out " + dd +
                             "/bundle") == 0 &&
            run_cli(cli, "demo-forward --data " + dd + "/bundle --seed 1 --out " + dd + "/fwd") ==
                0 &&
            run_cli(cli, "train-toy --data " + dd + "/bundle --steps 3 --seed 2 --out " + dd +
                             "/train") == 0 &&
            run_cli(cli, "train-toy --data " + dd + "/bundle --steps 2 --seed 3 --ssl --out " +
                             dd + "/ssl") == 0 &&
            run_cli(cli, "eval --pred " + dd + "/fwd/pred --gt " + dd + "/bundle --out " + dd +
                             "/eval") == 0 &&
            run_cli(cli, "filter --data " + dd + "/bundle --seed 7 --out " + dd + "/filter") == 0 &&
            run_cli(cli, "flops --out " + dd + "/flops") == 0;
        c.require(ok, "a CLI command failed in run " + run);
        if (!c.ok) return c;
    }
    std::string why;
    c.require(same_tree(root / "a", root / "b", why), why);
    if (c.ok) c.detail = "all six subcommands byte-identical across two seeded runs";
    fs::remove_all(root, ec);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli = argc > 1 ? argv[1] : "";
    struct Item {
        int num;
        std::string title;
        std::function<Check()> fn;
    };
    std::vector<Item> items{
        {1, "loss gradients match central finite differences", check_gradients},
        {2, "frame permutation equivariance is bit-exact", check_equivariance},
        {3, "register attention isolates non-register tokens", check_register_isolation},
        {4, "analytic cost model and savings claims hold", check_flops},
        {5, "losses vanish at their fixed points", check_loss_fixed_points},
        {6, "pair construction matches the exhaustive oracle", check_pair_oracle},
        {7, "toy overfit shrinks point error at least 5x", check_overfit},
        {8, "ema converges geometrically and heads stay frozen", check_ema},
        {9, "quality features match their brute-force oracles", check_quality},
        {10, "metrics match their oracles", check_metrics},
        {11, "CLI output is byte-deterministic", [&] { return check_determinism(cli); }},
    };

    int failures = 0;
    for (const auto& item : items) {
        Check c;
        try {
            c = item.fn();
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail = std::string("exception: ") + e.what();
        }
        std::cout << (c.ok ? "PASS" : "FAIL") << " criterion " << item.num << ": " << item.title
                  << " — " << c.detail << "\n";
        if (!c.ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
