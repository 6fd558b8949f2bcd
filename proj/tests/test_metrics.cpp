#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mvrecon/metrics.hpp"
#include "mvrecon/rng.hpp"
#include "mvrecon/synthetic.hpp"

using namespace mvr;

namespace {

SceneBundle orbit_bundle(int frames = 6) {
    SyntheticConfig sc;
    sc.kind = SceneKind::orbit;
    sc.num_frames = frames;
    sc.height = sc.width = 16;
    return make_synthetic(sc);
}

SceneBundle plane_bundle(int frames, int side, std::uint64_t seed) {
    SyntheticConfig sc;
    sc.kind = SceneKind::plane;
    sc.num_frames = frames;
    sc.height = sc.width = side;
    sc.seed = seed;
    return make_synthetic(sc);
}

}  // namespace

TEST_CASE("pose auc follows the exact step integral") {
    CHECK(pose_auc_from_errors({0.0, 0.0}, 3.0) == doctest::Approx(100.0));
    CHECK(pose_auc_from_errors({6.0, 7.0, 8.0}, 3.0) == doctest::Approx(0.0));
    // Errors {1, 2, 4} at tau 3: (2 + 1 + 0) / 9.
    CHECK(pose_auc_from_errors({1.0, 2.0, 4.0}, 3.0) == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("a perfect pose estimate scores 100 with no skipped pairs") {
    SceneBundle b = orbit_bundle();
    int skipped = -1;
    double auc = pose_auc(b.cameras, b.cameras, 3.0, &skipped);
    CHECK(auc == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(skipped == 0);
}

TEST_CASE("pose auc is invariant to a global similarity transform of the prediction") {
    SceneBundle b = orbit_bundle();
    Eigen::Matrix3d r0 = quat_to_rotmat(canonicalize_quat({0.8, 0.3, -0.2, 0.4}));
    Eigen::Vector3d t0(0.2, -0.1, 0.3);
    double s = 2.5;

    // World remap X' = s R0 X + t0 turns extrinsics (R, t) into
    // (R R0^T, s t - R R0^T t0); relative rotations and translation
    // directions are untouched.
    std::vector<Camera> pred = b.cameras;
    for (Camera& c : pred) {
        Eigen::Matrix3d r = c.rotation() * r0.transpose();
        Eigen::Vector3d t = s * c.translation() - r * t0;
        c.q = rotmat_to_quat(r);
        c.t = {t.x(), t.y(), t.z()};
    }
    CHECK(pose_auc(pred, b.cameras, 3.0) == doctest::Approx(100.0).epsilon(1e-6));
}

TEST_CASE("zero-baseline pairs are skipped and counted") {
    SceneBundle b = orbit_bundle(3);
    std::vector<Camera> gt = b.cameras;
    gt[1] = gt[0];  // duplicate pose -> pair (0,1) has no baseline
    int skipped = -1;
    auto errs = pose_errors(gt, gt, &skipped);
    CHECK(skipped == 1);
    CHECK(errs.size() == 2);
}

TEST_CASE("depth metrics with median alignment cancel a global scale") {
    SceneBundle b = plane_bundle(2, 8, 1);
    std::vector<std::vector<double>> pred;
    for (const auto& d : b.depths) pred.push_back(d.values);

    DepthMetrics exact = depth_metrics(pred, b.depths);
    CHECK(exact.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(exact.abs_rel == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(exact.delta_125 == doctest::Approx(100.0));

    std::vector<std::vector<double>> halved = pred;
    for (auto& f : halved)
        for (double& v : f) v *= 0.5;
    DepthMetrics m = depth_metrics(halved, b.depths);
    CHECK(m.scale == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m.abs_rel == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.delta_125 == doctest::Approx(100.0));
}

TEST_CASE("unaligned depth metrics expose the raw ratio") {
    SceneBundle b = plane_bundle(2, 8, 2);
    std::vector<std::vector<double>> pred;
    for (const auto& d : b.depths) pred.push_back(d.values);

    std::vector<std::vector<double>> off = pred;
    for (auto& f : off)
        for (double& v : f) v *= 1.1;
    DepthMetrics m = depth_metrics(off, b.depths, DepthAlignment::none);
    CHECK(m.scale == 1.0);
    CHECK(m.abs_rel == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(m.delta_125 == doctest::Approx(100.0));  // ratio 1.1 < 1.25

    for (auto& f : off)
        for (double& v : f) v *= 1.3 / 1.1;
    DepthMetrics worse = depth_metrics(off, b.depths, DepthAlignment::none);
    CHECK(worse.abs_rel == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(worse.delta_125 == doctest::Approx(0.0));
}

TEST_CASE("depth metrics agree with a pixelwise reimplementation") {
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

    DepthMetrics m = depth_metrics(pred, gt);
    CHECK(m.scale == doctest::Approx(scale).epsilon(1e-12));
    CHECK(m.abs_rel == doctest::Approx(abs_rel / count).epsilon(1e-12));
    CHECK(m.delta_125 == doctest::Approx(100.0 * within / count).epsilon(1e-12));
}

TEST_CASE("point error between shifted clouds equals the shift length") {
    SceneBundle b = plane_bundle(2, 8, 3);
    std::vector<PointMap> gt, pred;
    for (int f = 0; f < 2; ++f) {
        gt.push_back(unproject(b.depths[f], b.cameras[f]));
        pred.push_back(gt.back());
    }
    CHECK(point_error_points(pred, gt) == doctest::Approx(0.0).epsilon(1e-12));

    Eigen::Vector3d delta(0.01, -0.02, 0.03);
    for (auto& pm : pred)
        for (auto& p : pm.points) p += delta;
    CHECK(point_error_points(pred, gt) == doctest::Approx(delta.norm()).epsilon(1e-12));
}

TEST_CASE("point error vanishes for a perfect prediction up to frame and scale conventions") {
    SceneBundle raw = plane_bundle(3, 8, 4);
    SceneBundle norm = normalize_scene(raw);

    std::vector<std::vector<double>> pred;
    for (const auto& d : norm.depths) pred.push_back(d.values);
    CHECK(point_error(pred, norm.cameras, norm) < 1e-9);

    // The raw bundle differs from the normalized one by the reference frame
    // and a global scale; the metric must align both away.
    std::vector<std::vector<double>> raw_pred;
    for (const auto& d : raw.depths) raw_pred.push_back(d.values);
    CHECK(point_error(raw_pred, raw.cameras, norm) < 1e-9);
}
