#include "mvrecon/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mvr {

namespace {

namespace a = ad;

a::Var scalar_const(double x) { return a::constant(Tensor::scalar(x)); }

// Masked mean: sum(x * mask) / count. mask entries are 0/1 constants.
a::Var masked_mean(const a::Var& x, const Tensor& mask, std::size_t count) {
    return a::mul_const(a::sum(a::mul(x, a::constant(mask))), 1.0 / static_cast<double>(count));
}

struct GradPairs {
    std::vector<std::int64_t> from, to;  // flat pixel indices, e[to] - e[from]
};

GradPairs grad_pairs(const DepthMap& gt) {
    GradPairs gp;
    for (int i = 0; i < gt.height; ++i)
        for (int j = 0; j + 1 < gt.width; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * gt.width + j;
            if (gt.valid[k] && gt.valid[k + 1]) {
                gp.from.push_back(static_cast<std::int64_t>(k));
                gp.to.push_back(static_cast<std::int64_t>(k + 1));
            }
        }
    for (int i = 0; i + 1 < gt.height; ++i)
        for (int j = 0; j < gt.width; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * gt.width + j;
            if (gt.valid[k] && gt.valid[k + gt.width]) {
                gp.from.push_back(static_cast<std::int64_t>(k));
                gp.to.push_back(static_cast<std::int64_t>(k + gt.width));
            }
        }
    return gp;
}

std::size_t valid_count(const DepthMap& gt) {
    std::size_t c = 0;
    for (auto v : gt.valid) c += v ? 1 : 0;
    return c;
}

Tensor valid_mask(const DepthMap& gt) {
    Tensor m({static_cast<std::size_t>(gt.height), static_cast<std::size_t>(gt.width)});
    for (std::size_t k = 0; k < gt.valid.size(); ++k) m.v[k] = gt.valid[k] ? 1.0 : 0.0;
    return m;
}

// (1 + 1/D) with the ground-truth depth floored at 1e-6.
Tensor inverse_depth_weight(const DepthMap& gt) {
    Tensor w({static_cast<std::size_t>(gt.height), static_cast<std::size_t>(gt.width)});
    for (std::size_t k = 0; k < gt.values.size(); ++k)
        w.v[k] = 1.0 + 1.0 / std::max(gt.values[k], 1e-6);
    return w;
}

Shape map_shape(const DepthMap& gt) {
    return {static_cast<std::size_t>(gt.height), static_cast<std::size_t>(gt.width)};
}

}  // namespace

ad::Var camera_loss(const std::vector<CameraPrediction>& pred, const std::vector<Camera>& gt) {
    if (pred.size() != gt.size()) throw std::runtime_error("camera_loss: frame count mismatch");
    a::Var total = scalar_const(0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        a::Var g = a::reshape(pred[i].g9, {1, 9});
        // Flip the predicted quaternion into the w >= 0 hemisphere; the sign
        // is locally constant so treating it as data is exact a.e.
        double sflip = pred[i].g9->value.v[0] < 0.0 ? -1.0 : 1.0;
        a::Var q = a::mul_const(a::slice_cols(g, 0, 4), sflip);
        a::Var tf = a::slice_cols(g, 4, 9);
        // Hemisphere flip only; re-normalizing would spoil exact zeros.
        auto qc = gt[i].q;
        if (qc[0] < 0.0)
            for (double& c : qc) c = -c;
        Tensor gt9({1, 9}, {qc[0], qc[1], qc[2], qc[3], gt[i].t[0], gt[i].t[1], gt[i].t[2],
                            gt[i].f[0], gt[i].f[1]});
        a::Var diff = a::sub(a::concat_cols({q, tf}), a::constant(std::move(gt9)));
        total = a::add(total, a::sum(a::abs(diff)));
    }
    return total;
}

ad::Var depth_loss(const DepthPrediction& pred, const DepthMap& gt, double alpha) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::runtime_error("depth_loss: resolution mismatch");
    std::size_t nvalid = valid_count(gt);
    if (nvalid == 0) throw std::runtime_error("depth_loss: no valid pixels");

    a::Var e = a::sub(pred.depth, a::constant(Tensor(map_shape(gt), gt.values)));
    a::Var weighted = a::mul(a::mul(pred.confidence, a::constant(inverse_depth_weight(gt))), a::abs(e));
    a::Var residual = masked_mean(weighted, valid_mask(gt), nvalid);

    a::Var loss = residual;
    GradPairs gp = grad_pairs(gt);
    if (!gp.from.empty()) {
        Shape ps{gp.from.size()};
        a::Var de = a::sub(a::gather(e, gp.to, ps), a::gather(e, gp.from, ps));
        a::Var cpair = a::gather(pred.confidence, gp.from, ps);
        a::Var grad_term = a::mul_const(a::sum(a::mul(cpair, a::abs(de))),
                                        1.0 / static_cast<double>(gp.from.size()));
        loss = a::add(loss, grad_term);
    }
    a::Var logc = masked_mean(a::log(pred.confidence), valid_mask(gt), nvalid);
    return a::add(loss, a::mul_const(logc, -alpha));
}

std::array<ad::Var, 3> ad_unproject(const ad::Var& depth, const ad::Var& g9, int height, int width) {
    // Normalized quaternion.
    a::Var q0 = a::at(g9, 0), q1 = a::at(g9, 1), q2 = a::at(g9, 2), q3 = a::at(g9, 3);
    a::Var n = a::sqrt(a::add_const(
        a::add(a::add(a::square(q0), a::square(q1)), a::add(a::square(q2), a::square(q3))), 1e-24));
    q0 = a::div(q0, n);
    q1 = a::div(q1, n);
    q2 = a::div(q2, n);
    q3 = a::div(q3, n);

    auto two = [](const a::Var& x) { return a::mul_const(x, 2.0); };
    // Rotation entries (row major).
    a::Var r00 = a::add_const(a::neg(two(a::add(a::square(q2), a::square(q3)))), 1.0);
    a::Var r01 = two(a::sub(a::mul(q1, q2), a::mul(q0, q3)));
    a::Var r02 = two(a::add(a::mul(q1, q3), a::mul(q0, q2)));
    a::Var r10 = two(a::add(a::mul(q1, q2), a::mul(q0, q3)));
    a::Var r11 = a::add_const(a::neg(two(a::add(a::square(q1), a::square(q3)))), 1.0);
    a::Var r12 = two(a::sub(a::mul(q2, q3), a::mul(q0, q1)));
    a::Var r20 = two(a::sub(a::mul(q1, q3), a::mul(q0, q2)));
    a::Var r21 = two(a::add(a::mul(q2, q3), a::mul(q0, q1)));
    a::Var r22 = a::add_const(a::neg(two(a::add(a::square(q1), a::square(q2)))), 1.0);

    a::Var tx = a::at(g9, 4), ty = a::at(g9, 5), tz = a::at(g9, 6);
    a::Var fx = a::mul_const(a::at(g9, 7), width * 0.5);
    a::Var fy = a::mul_const(a::at(g9, 8), height * 0.5);

    Shape shp{static_cast<std::size_t>(height), static_cast<std::size_t>(width)};
    Tensor du(shp), dv(shp);
    for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
            du.v[static_cast<std::size_t>(i) * width + j] = j + 0.5 - width * 0.5;
            dv.v[static_cast<std::size_t>(i) * width + j] = i + 0.5 - height * 0.5;
        }
    a::Var xc = a::sdiv(a::mul(a::constant(std::move(du)), depth), fx);
    a::Var yc = a::sdiv(a::mul(a::constant(std::move(dv)), depth), fy);
    const a::Var& zc = depth;

    // X_ref = R^T (X_cam - t).
    a::Var ax = a::shift(xc, a::neg(tx));
    a::Var ay = a::shift(yc, a::neg(ty));
    a::Var az = a::shift(zc, a::neg(tz));
    a::Var px = a::add(a::add(a::scale(ax, r00), a::scale(ay, r10)), a::scale(az, r20));
    a::Var py = a::add(a::add(a::scale(ax, r01), a::scale(ay, r11)), a::scale(az, r21));
    a::Var pz = a::add(a::add(a::scale(ax, r02), a::scale(ay, r12)), a::scale(az, r22));
    return {px, py, pz};
}

ad::Var point_loss_frame(const DepthPrediction& pred_depth, const CameraPrediction& pred_cam,
                         const PointMap& gt_points, const DepthMap& gt_depth, double alpha) {
    if (pred_depth.height != gt_depth.height || pred_depth.width != gt_depth.width)
        throw std::runtime_error("point_loss: resolution mismatch");
    std::size_t nvalid = valid_count(gt_depth);
    if (nvalid == 0) throw std::runtime_error("point_loss: no valid pixels");

    auto pmap = ad_unproject(pred_depth.depth, pred_cam.g9, pred_depth.height, pred_depth.width);
    Shape shp = map_shape(gt_depth);
    Tensor gx(shp), gy(shp), gz(shp);
    for (std::size_t k = 0; k < gt_points.points.size(); ++k) {
        gx.v[k] = gt_points.points[k].x();
        gy.v[k] = gt_points.points[k].y();
        gz.v[k] = gt_points.points[k].z();
    }
    a::Var ex = a::sub(pmap[0], a::constant(std::move(gx)));
    a::Var ey = a::sub(pmap[1], a::constant(std::move(gy)));
    a::Var ez = a::sub(pmap[2], a::constant(std::move(gz)));
    a::Var e1 = a::add(a::add(a::abs(ex), a::abs(ey)), a::abs(ez));  // per-pixel l1

    a::Var weighted =
        a::mul(a::mul(pred_depth.confidence, a::constant(inverse_depth_weight(gt_depth))), e1);
    a::Var loss = masked_mean(weighted, valid_mask(gt_depth), nvalid);

    GradPairs gp = grad_pairs(gt_depth);
    if (!gp.from.empty()) {
        Shape ps{gp.from.size()};
        auto diff1 = [&](const a::Var& e) {
            return a::abs(a::sub(a::gather(e, gp.to, ps), a::gather(e, gp.from, ps)));
        };
        a::Var de = a::add(a::add(diff1(ex), diff1(ey)), diff1(ez));
        a::Var cpair = a::gather(pred_depth.confidence, gp.from, ps);
        loss = a::add(loss, a::mul_const(a::sum(a::mul(cpair, de)),
                                         1.0 / static_cast<double>(gp.from.size())));
    }
    a::Var logc = masked_mean(a::log(pred_depth.confidence), valid_mask(gt_depth), nvalid);
    return a::add(loss, a::mul_const(logc, -alpha));
}

PatchPairSet build_pairs(const SceneBundle& bundle, int patch_size, const PairConfig& cfg, Rng& rng) {
    PatchPairSet out;
    if (bundle.num_frames < 2) {
        out.empty_flag = true;
        return out;
    }
    int gw = bundle.width / patch_size, gh = bundle.height / patch_size;
    int patches = gw * gh;
    int n = bundle.num_frames;

    std::vector<PointMap> pmaps;
    for (int i = 0; i < n; ++i) pmaps.push_back(unproject(bundle.depths[i], bundle.cameras[i]));

    for (int fa = 0; fa < n; ++fa) {
        // counts[q][fb][tp], totals[q][fb] = valid projections of patch q into fb
        std::vector<std::map<int, std::map<int, int>>> counts(patches);
        std::vector<std::map<int, int>> totals(patches);
        std::vector<long> weight(patches, 0);

        const DepthMap& da = bundle.depths[fa];
        for (int i = 0; i < bundle.height; ++i) {
            for (int j = 0; j < bundle.width; ++j) {
                std::size_t k = static_cast<std::size_t>(i) * bundle.width + j;
                if (!da.valid[k] || bundle.is_dynamic(fa, i, j)) continue;
                int q = (i / patch_size) * gw + (j / patch_size);
                for (int fb = 0; fb < n; ++fb) {
                    if (fb == fa) continue;
                    Projection pr = project_point(pmaps[fa].points[k], bundle.cameras[fb]);
                    if (pr.depth <= 0.0) continue;
                    if (pr.u < cfg.border_px || pr.u >= bundle.width - cfg.border_px ||
                        pr.v < cfg.border_px || pr.v >= bundle.height - cfg.border_px)
                        continue;
                    int tu = static_cast<int>(pr.u), tv = static_cast<int>(pr.v);
                    std::size_t tk = static_cast<std::size_t>(tv) * bundle.width + tu;
                    const DepthMap& db = bundle.depths[fb];
                    if (!db.valid[tk] || bundle.is_dynamic(fb, tv, tu)) continue;
                    if (std::fabs(pr.depth - db.values[tk]) > cfg.depth_rel_tol * db.values[tk])
                        continue;
                    int tp = (tv / patch_size) * gw + (tu / patch_size);
                    counts[q][fb][tp] += 1;
                    totals[q][fb] += 1;
                    weight[q] += 1;
                }
            }
        }

        std::vector<int> candidates;
        for (int q = 0; q < patches; ++q)
            if (weight[q] >= (cfg.exhaustive ? 1 : cfg.min_projections)) candidates.push_back(q);
        std::vector<int> selected;
        if (cfg.exhaustive || static_cast<int>(candidates.size()) <= cfg.max_query_patches) {
            selected = candidates;
        } else {
            // Weighted sampling without replacement, proportional to the
            // total correspondence count.
            std::vector<int> pool = candidates;
            std::vector<double> w(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i) w[i] = static_cast<double>(weight[pool[i]]);
            for (int pick = 0; pick < cfg.max_query_patches && !pool.empty(); ++pick) {
                double wsum = 0.0;
                for (double x : w) wsum += x;
                double r = rng.uniform() * wsum;
                std::size_t idx = 0;
                double acc = 0.0;
                for (; idx + 1 < pool.size(); ++idx) {
                    acc += w[idx];
                    if (r < acc) break;
                }
                selected.push_back(pool[idx]);
                pool.erase(pool.begin() + idx);
                w.erase(w.begin() + idx);
            }
            std::sort(selected.begin(), selected.end());
        }

        for (int q : selected)
            for (const auto& [fb, per_patch] : counts[q])
                for (const auto& [tp, cnt] : per_patch) {
                    double ratio = static_cast<double>(cnt) / totals[q][fb];
                    if (ratio > cfg.overlap_min)
                        out.positives.push_back({fa, q, fb, tp, ratio, 0.0, 0.0});
                }
    }

    if (out.positives.empty()) {
        out.empty_flag = true;
        return out;
    }

    // Negatives: random patch pairs passing both the epipolar and the
    // appearance constraint, subsampled to balance.
    auto patch_mean_rgb = [&](int frame, int patch) {
        int pi = patch / gw, pj = patch % gw;
        double rgb[3] = {0, 0, 0};
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < patch_size; ++y)
                for (int x = 0; x < patch_size; ++x)
                    rgb[c] += bundle.pixel(frame, c, pi * patch_size + y, pj * patch_size + x);
        double inv = 1.0 / (patch_size * patch_size);
        return std::array<double, 3>{rgb[0] * inv, rgb[1] * inv, rgb[2] * inv};
    };

    long attempts = static_cast<long>(cfg.negative_attempt_factor) *
                    static_cast<long>(out.positives.size());
    for (long a = 0; a < attempts && out.negatives.size() < out.positives.size(); ++a) {
        int fa = static_cast<int>(rng.uniform_int(0, n - 1));
        int fb = static_cast<int>(rng.uniform_int(0, n - 2));
        if (fb >= fa) ++fb;
        int pa = static_cast<int>(rng.uniform_int(0, patches - 1));
        int pb = static_cast<int>(rng.uniform_int(0, patches - 1));
        double ua = (pa % gw) * patch_size + patch_size * 0.5;
        double va = (pa / gw) * patch_size + patch_size * 0.5;
        double ub = (pb % gw) * patch_size + patch_size * 0.5;
        double vb = (pb / gw) * patch_size + patch_size * 0.5;
        auto sd = sampson_distance(ua, va, ub, vb, bundle.cameras[fa], bundle.cameras[fb]);
        if (!sd || *sd <= cfg.tau_sampson) continue;
        auto ca = patch_mean_rgb(fa, pa), cb = patch_mean_rgb(fb, pb);
        double rd = std::sqrt((ca[0] - cb[0]) * (ca[0] - cb[0]) + (ca[1] - cb[1]) * (ca[1] - cb[1]) +
                              (ca[2] - cb[2]) * (ca[2] - cb[2]));
        if (rd <= cfg.tau_rgb) continue;
        out.negatives.push_back({fa, pa, fb, pb, 0.0, *sd, rd});
    }
    if (out.negatives.size() < out.positives.size())
        out.positives.resize(out.negatives.size());
    if (out.positives.empty()) out.empty_flag = true;
    return out;
}

ad::Var matching_loss(const TokenState& final_state, const PatchPairSet& pairs, bool* skipped) {
    if (pairs.empty_flag || pairs.positives.empty()) {
        if (skipped) *skipped = true;
        return scalar_const(0.0);
    }
    if (skipped) *skipped = false;
    auto similarity = [&](const std::vector<PatchPair>& ps) {
        std::vector<a::Var> rows_a, rows_b;
        for (const auto& p : ps) {
            rows_a.push_back(a::slice_rows(final_state.frames[p.frame_a], p.patch_a, p.patch_a + 1));
            rows_b.push_back(a::slice_rows(final_state.frames[p.frame_b], p.patch_b, p.patch_b + 1));
        }
        a::Var na = a::l2norm_rows(a::concat_rows(rows_a));
        a::Var nb = a::l2norm_rows(a::concat_rows(rows_b));
        return a::dot_rows(na, nb);
    };
    // -log sigmoid(s) = softplus(-s), -log(1 - sigmoid(s)) = softplus(s).
    a::Var pos = a::mean(a::softplus(a::neg(similarity(pairs.positives))));
    a::Var neg = a::mean(a::softplus(similarity(pairs.negatives)));
    return a::add(pos, neg);
}

ad::Var total_loss(const ModelOutputs& outputs, const SceneBundle& gt, const LossWeights& weights,
                   const PairConfig& pair_cfg, int patch_size, Rng& rng, LossBreakdown* breakdown) {
    a::Var cam = camera_loss(outputs.cameras, gt.cameras);
    a::Var depth = scalar_const(0.0);
    a::Var point = scalar_const(0.0);
    for (int i = 0; i < gt.num_frames; ++i) {
        depth = a::add(depth, depth_loss(outputs.depths[i], gt.depths[i], weights.alpha));
        PointMap pm = unproject(gt.depths[i], gt.cameras[i]);
        point = a::add(point, point_loss_frame(outputs.depths[i], outputs.cameras[i], pm,
                                               gt.depths[i], weights.alpha));
    }
    PatchPairSet pairs = build_pairs(gt, patch_size, pair_cfg, rng);
    bool skipped = false;
    a::Var match = matching_loss(outputs.trunk.final_state, pairs, &skipped);

    a::Var total = a::add(
        a::add(a::mul_const(cam, weights.cam), a::mul_const(depth, weights.depth)),
        a::add(a::mul_const(point, weights.point), a::mul_const(match, weights.match)));
    if (breakdown) {
        breakdown->cam = cam->value.v[0];
        breakdown->depth = depth->value.v[0];
        breakdown->point = point->value.v[0];
        breakdown->match = match->value.v[0];
        breakdown->match_skipped = skipped;
        breakdown->total = total->value.v[0];
    }
    return total;
}

}  // namespace mvr
