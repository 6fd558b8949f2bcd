#include "mvrecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvr {

namespace {

double angle_deg(double cosv) { return std::acos(std::clamp(cosv, -1.0, 1.0)) * 180.0 / M_PI; }

}  // namespace

std::vector<PoseErrorPair> pose_errors(const std::vector<Camera>& pred,
                                       const std::vector<Camera>& gt, int* skipped) {
    if (pred.size() != gt.size()) throw std::runtime_error("pose_errors: frame count mismatch");
    if (gt.size() < 2) throw std::runtime_error("pose_errors: need at least 2 frames");
    std::vector<PoseErrorPair> out;
    int skip = 0;
    for (std::size_t a = 0; a < gt.size(); ++a)
        for (std::size_t b = a + 1; b < gt.size(); ++b) {
            Eigen::Matrix3d rg = gt[b].rotation() * gt[a].rotation().transpose();
            Eigen::Vector3d tg = gt[b].translation() - rg * gt[a].translation();
            if (tg.norm() < 1e-12) {
                ++skip;
                continue;
            }
            Eigen::Matrix3d rp = pred[b].rotation() * pred[a].rotation().transpose();
            Eigen::Vector3d tp = pred[b].translation() - rp * pred[a].translation();

            PoseErrorPair pe;
            pe.frame_a = static_cast<int>(a);
            pe.frame_b = static_cast<int>(b);
            Eigen::Matrix3d dr = rp * rg.transpose();
            pe.rot_deg = angle_deg((dr.trace() - 1.0) * 0.5);
            pe.trans_deg =
                tp.norm() < 1e-12 ? 180.0 : angle_deg(tp.normalized().dot(tg.normalized()));
            out.push_back(pe);
        }
    if (skipped) *skipped = skip;
    return out;
}

double pose_auc_from_errors(std::vector<double> errors, double tau) {
    if (errors.empty()) throw std::runtime_error("pose_auc: no usable pairs");
    // accuracy(t) = (1/M) sum 1[e_i < t]; integral_0^tau = sum max(0, tau - e_i) / M.
    double acc = 0.0;
    for (double e : errors) acc += std::max(0.0, tau - e);
    return 100.0 * acc / (tau * static_cast<double>(errors.size()));
}

double pose_auc(const std::vector<Camera>& pred, const std::vector<Camera>& gt, double tau,
                int* skipped) {
    std::vector<double> errs;
    for (const auto& pe : pose_errors(pred, gt, skipped)) errs.push_back(pe.combined());
    return pose_auc_from_errors(std::move(errs), tau);
}

DepthMetrics depth_metrics(const std::vector<std::vector<double>>& pred,
                           const std::vector<DepthMap>& gt, DepthAlignment alignment) {
    if (pred.size() != gt.size()) throw std::runtime_error("depth_metrics: frame count mismatch");
    std::vector<double> ratios;
    for (std::size_t f = 0; f < gt.size(); ++f)
        for (std::size_t k = 0; k < gt[f].npix(); ++k)
            if (gt[f].valid[k] && pred[f][k] > 0.0) ratios.push_back(gt[f].values[k] / pred[f][k]);
    if (ratios.empty()) throw std::runtime_error("depth_metrics: no valid pixels");

    DepthMetrics m;
    if (alignment == DepthAlignment::median_scale) {
        std::sort(ratios.begin(), ratios.end());
        std::size_t n = ratios.size();
        m.scale = n % 2 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
    }
    std::size_t count = 0, within = 0;
    double abs_rel = 0.0;
    for (std::size_t f = 0; f < gt.size(); ++f)
        for (std::size_t k = 0; k < gt[f].npix(); ++k) {
            if (!gt[f].valid[k]) continue;
            double d = gt[f].values[k], p = m.scale * pred[f][k];
            abs_rel += std::fabs(p - d) / d;
            if (p > 0.0 && std::max(p / d, d / p) < 1.25) ++within;
            ++count;
        }
    m.abs_rel = abs_rel / static_cast<double>(count);
    m.delta_125 = 100.0 * static_cast<double>(within) / static_cast<double>(count);
    return m;
}

double point_error_points(const std::vector<PointMap>& pred, const std::vector<PointMap>& gt) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < gt.size(); ++f)
        for (std::size_t k = 0; k < gt[f].points.size(); ++k)
            if (gt[f].valid[k]) {
                acc += (pred[f].points[k] - gt[f].points[k]).norm();
                ++count;
            }
    if (count == 0) throw std::runtime_error("point_error: no valid pixels");
    return acc / static_cast<double>(count);
}

double point_error(const std::vector<std::vector<double>>& pred_depths,
                   const std::vector<Camera>& pred_cameras, const SceneBundle& gt_normalized) {
    int n = gt_normalized.num_frames;
    // Re-root the predicted cameras to the first predicted camera, mirroring
    // the unit-space rule applied to ground truth.
    Eigen::Matrix3d r0 = pred_cameras[0].rotation();
    Eigen::Vector3d t0 = pred_cameras[0].translation();
    std::vector<Camera> cams(pred_cameras);
    for (int f = 0; f < n; ++f) {
        Eigen::Matrix3d r = cams[f].rotation() * r0.transpose();
        Eigen::Vector3d t = cams[f].translation() - r * t0;
        cams[f].q = rotmat_to_quat(r);
        cams[f].t = {t.x(), t.y(), t.z()};
    }

    std::vector<PointMap> pred_pm, gt_pm;
    double norm_acc = 0.0;
    std::size_t norm_count = 0;
    for (int f = 0; f < n; ++f) {
        DepthMap dm = gt_normalized.depths[f];  // borrow the validity pattern
        dm.values = pred_depths[f];
        pred_pm.push_back(unproject(dm, cams[f]));
        gt_pm.push_back(unproject(gt_normalized.depths[f], gt_normalized.cameras[f]));
        for (std::size_t k = 0; k < dm.npix(); ++k)
            if (dm.valid[k]) {
                norm_acc += pred_pm.back().points[k].norm();
                ++norm_count;
            }
    }
    if (norm_count == 0) throw std::runtime_error("point_error: no valid pixels");
    double scale = norm_acc / static_cast<double>(norm_count);
    if (scale < 1e-12) throw std::runtime_error("point_error: degenerate predicted scale");
    for (auto& pm : pred_pm)
        for (auto& p : pm.points) p /= scale;
    return point_error_points(pred_pm, gt_pm);
}

}  // namespace mvr
