#include "mvrecon/quality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvr {

namespace {

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
    double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    double theta = std::acos(c);
    if (theta < 1e-12) return Eigen::Vector3d::Zero();
    Eigen::Vector3d axis(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    double s = 2.0 * std::sin(theta);
    if (s < 1e-12) {
        // Near pi: fall back to the dominant diagonal.
        Eigen::Matrix3d a = 0.5 * (r + Eigen::Matrix3d::Identity());
        Eigen::Vector3d ax(std::sqrt(std::max(a(0, 0), 0.0)), std::sqrt(std::max(a(1, 1), 0.0)),
                           std::sqrt(std::max(a(2, 2), 0.0)));
        if (ax.norm() < 1e-12) return Eigen::Vector3d::Zero();
        return theta * ax.normalized();
    }
    return (theta / s) * axis;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::pair<double, double> trajectory_smoothness(const std::vector<Camera>& cameras) {
    std::size_t n = cameras.size();
    if (n < 3) throw std::runtime_error("trajectory_smoothness: need at least 3 cameras");
    double st = 0.0, sr = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        Eigen::Vector3d a = cameras[i + 1].translation() - 2.0 * cameras[i].translation() +
                            cameras[i - 1].translation();
        st += a.squaredNorm();
        Eigen::Vector3d w = rotation_log(cameras[i + 1].rotation()) -
                            2.0 * rotation_log(cameras[i].rotation()) +
                            rotation_log(cameras[i - 1].rotation());
        sr += w.squaredNorm();
    }
    double inv = 1.0 / static_cast<double>(n - 2);
    return {st * inv, sr * inv};
}

double parallax_stat(const std::vector<Eigen::Vector3d>& points, const std::vector<Camera>& cameras,
                     int sample_size, Rng& rng) {
    if (cameras.size() < 2) throw std::runtime_error("parallax_stat: need at least 2 cameras");
    if (points.empty()) throw std::runtime_error("parallax_stat: no points");

    std::vector<std::size_t> sample;
    if (static_cast<int>(points.size()) <= sample_size) {
        for (std::size_t i = 0; i < points.size(); ++i) sample.push_back(i);
    } else {
        std::vector<int> perm = rng.permutation(static_cast<int>(points.size()));
        for (int i = 0; i < sample_size; ++i) sample.push_back(static_cast<std::size_t>(perm[i]));
    }

    std::vector<double> max_angles;
    for (std::size_t idx : sample) {
        const Eigen::Vector3d& p = points[idx];
        std::vector<Eigen::Vector3d> dirs;
        for (const Camera& cam : cameras)
            if (project_point(p, cam).in_frustum) dirs.push_back((cam.center() - p).normalized());
        double best = -1.0;
        for (std::size_t a = 0; a < dirs.size(); ++a)
            for (std::size_t b = a + 1; b < dirs.size(); ++b) {
                double ang = std::acos(std::clamp(dirs[a].dot(dirs[b]), -1.0, 1.0));
                best = std::max(best, ang);
            }
        if (best >= 0.0) max_angles.push_back(best * 180.0 / M_PI);
    }
    if (max_angles.empty()) throw std::runtime_error("parallax_stat: no point seen by two cameras");
    return median(std::move(max_angles));
}

std::array<double, 3> pca_shape(const std::vector<Eigen::Vector3d>& points) {
    if (points.size() < 4) throw std::runtime_error("pca_shape: need at least 4 points");
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& p : points) {
        Eigen::Vector3d d = p - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(points.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Eigen::Vector3d ev = es.eigenvalues();  // ascending
    double v1 = ev(2), v2 = ev(1), v3 = ev(0);
    if (v1 <= 0.0) throw std::runtime_error("pca_shape: rank-0 point cloud");
    return {(v1 - v2) / v1, (v2 - v3) / v1, v3 / v1};
}

double completeness(const std::vector<DepthMap>& depths) {
    if (depths.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& d : depths) {
        std::size_t valid = 0;
        for (std::size_t k = 0; k < d.npix(); ++k)
            if (d.valid[k] && std::isfinite(d.values[k])) ++valid;
        acc += static_cast<double>(valid) / static_cast<double>(d.npix());
    }
    return acc / static_cast<double>(depths.size());
}

double noise_fraction(const std::vector<Eigen::Vector3d>& points, int k) {
    std::size_t n = points.size();
    if (n < static_cast<std::size_t>(k) + 1)
        throw std::runtime_error("noise_fraction: need more than k points");
    std::vector<double> knn(n);
    std::vector<double> dists(n);
    for (std::size_t i = 0; i < n; ++i) {
        dists.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) dists.push_back((points[i] - points[j]).norm());
        std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
        std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += dists[j];
        knn[i] = s / k;
    }
    double mean = 0.0;
    for (double d : knn) mean += d;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double d : knn) var += (d - mean) * (d - mean);
    double sigma = std::sqrt(var / static_cast<double>(n));
    std::size_t noisy = 0;
    for (double d : knn)
        if (d > mean + 2.0 * sigma) ++noisy;
    return static_cast<double>(noisy) / static_cast<double>(n);
}

ConsistencyResult multi_view_consistency(const SceneBundle& bundle, double rel_tol,
                                         double reject_below) {
    if (bundle.num_frames < 2)
        throw std::runtime_error("multi_view_consistency: need at least 2 frames");
    ConsistencyResult res;
    std::size_t npix = static_cast<std::size_t>(bundle.height) * bundle.width;
    std::size_t total = 0, good = 0;

    std::vector<PointMap> pmaps;
    for (int f = 0; f < bundle.num_frames; ++f)
        pmaps.push_back(unproject(bundle.depths[f], bundle.cameras[f]));

    for (int f = 0; f < bundle.num_frames; ++f) {
        std::vector<std::uint8_t> mask(npix, 0);
        for (std::size_t k = 0; k < npix; ++k) {
            if (!bundle.depths[f].valid[k]) continue;
            ++total;
            for (int g = 0; g < bundle.num_frames && !mask[k]; ++g) {
                if (g == f) continue;
                Projection pr = project_point(pmaps[f].points[k], bundle.cameras[g]);
                if (!pr.in_frustum) continue;
                std::size_t tk = static_cast<std::size_t>(static_cast<int>(pr.v)) * bundle.width +
                                 static_cast<int>(pr.u);
                if (!bundle.depths[g].valid[tk]) continue;
                if (std::fabs(pr.depth - bundle.depths[g].values[tk]) <=
                    rel_tol * bundle.depths[g].values[tk])
                    mask[k] = 1;
            }
            if (mask[k]) ++good;
        }
        res.valid_masks.push_back(std::move(mask));
    }
    res.valid_fraction = total ? static_cast<double>(good) / static_cast<double>(total) : 0.0;
    res.rejected = res.valid_fraction < reject_below;
    return res;
}

GateResult heuristic_gate(const QualityFeatures& f, const GateThresholds& t) {
    GateResult r;
    if (f.registration_ratio < t.registration_min) r.reasons.push_back("registration ratio too low");
    if (f.fov_x < t.fov_min_deg || f.fov_x > t.fov_max_deg || f.fov_y < t.fov_min_deg ||
        f.fov_y > t.fov_max_deg)
        r.reasons.push_back("fov out of range");
    if (f.distortion_ratio > t.distortion_max) r.reasons.push_back("distortion too high");
    if (f.valid_depth_fraction < t.valid_depth_min) r.reasons.push_back("too few valid depths");
    if (f.linearity > t.linearity_max) r.reasons.push_back("trajectory too linear");
    r.accept = r.reasons.empty();
    return r;
}

QualityFeatures compute_quality(const SceneBundle& bundle, Rng& rng, int parallax_samples) {
    QualityFeatures f;
    if (bundle.num_frames >= 3) {
        auto [st, sr] = trajectory_smoothness(bundle.cameras);
        f.s_trans = st;
        f.s_rot = sr;
    }

    std::vector<Eigen::Vector3d> points;
    std::size_t total_px = 0, valid_px = 0;
    for (int fr = 0; fr < bundle.num_frames; ++fr) {
        PointMap pm = unproject(bundle.depths[fr], bundle.cameras[fr]);
        for (std::size_t k = 0; k < pm.points.size(); ++k) {
            ++total_px;
            if (pm.valid[k]) {
                ++valid_px;
                points.push_back(pm.points[k]);
            }
        }
    }
    f.valid_depth_fraction = total_px ? static_cast<double>(valid_px) / total_px : 0.0;
    f.completeness = completeness(bundle.depths);

    if (points.size() >= 4) {
        // Shape from the camera trajectory when enough cameras exist (the
        // linearity flag judges the trajectory), else from the point cloud.
        std::vector<Eigen::Vector3d> centers;
        for (const auto& c : bundle.cameras) centers.push_back(c.center());
        if (centers.size() >= 4) {
            auto shape = pca_shape(centers);
            f.linearity = shape[0];
            f.planarity = shape[1];
            f.scattering = shape[2];
        } else {
            auto shape = pca_shape(points);
            f.linearity = shape[0];
            f.planarity = shape[1];
            f.scattering = shape[2];
        }
        if (points.size() >= 16) {
            // Subsample for the O(n^2) kNN statistic.
            std::vector<Eigen::Vector3d> sub;
            if (points.size() > 512) {
                std::vector<int> perm = rng.permutation(static_cast<int>(points.size()));
                for (int i = 0; i < 512; ++i) sub.push_back(points[perm[i]]);
            } else {
                sub = points;
            }
            f.noise_fraction = noise_fraction(sub, 8);
        }
        if (bundle.num_frames >= 2) {
            try {
                f.median_max_parallax = parallax_stat(points, bundle.cameras, parallax_samples, rng);
            } catch (const std::runtime_error&) {
                f.median_max_parallax = 0.0;
            }
        }
    }

    if (!bundle.cameras.empty()) {
        const Camera& c = bundle.cameras.front();
        f.fov_x = 2.0 * std::atan(c.cx() / c.fx_px()) * 180.0 / M_PI;
        f.fov_y = 2.0 * std::atan(c.cy() / c.fy_px()) * 180.0 / M_PI;
    }
    // Synthetic bundles are undistorted and fully registered.
    f.registration_ratio = 1.0;
    f.distortion_ratio = 0.0;
    return f;
}

}  // namespace mvr
