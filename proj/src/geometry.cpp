#include "mvrecon/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace mvr {

namespace {

void check_focal(const Camera& cam) {
    if (cam.f[0] <= 0.0 || cam.f[1] <= 0.0)
        throw std::runtime_error("camera: focal lengths must be positive");
    if (cam.width <= 0 || cam.height <= 0)
        throw std::runtime_error("camera: image size must be positive");
}

}  // namespace

Eigen::Matrix3d quat_to_rotmat(const std::array<double, 4>& q) {
    double n2 = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
    if (std::fabs(std::sqrt(n2) - 1.0) > 1e-6)
        throw std::runtime_error("quat_to_rotmat: quaternion is not unit length");
    double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

std::array<double, 4> rotmat_to_quat(const Eigen::Matrix3d& r) {
    double w, x, y, z;
    double tr = r.trace();
    if (tr > 0.0) {
        double s = std::sqrt(tr + 1.0) * 2.0;
        w = 0.25 * s;
        x = (r(2, 1) - r(1, 2)) / s;
        y = (r(0, 2) - r(2, 0)) / s;
        z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        w = (r(2, 1) - r(1, 2)) / s;
        x = 0.25 * s;
        y = (r(0, 1) + r(1, 0)) / s;
        z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        w = (r(0, 2) - r(2, 0)) / s;
        x = (r(0, 1) + r(1, 0)) / s;
        y = 0.25 * s;
        z = (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        w = (r(1, 0) - r(0, 1)) / s;
        x = (r(0, 2) + r(2, 0)) / s;
        y = (r(1, 2) + r(2, 1)) / s;
        z = 0.25 * s;
    }
    return canonicalize_quat({w, x, y, z});
}

std::array<double, 4> canonicalize_quat(const std::array<double, 4>& q) {
    double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (n < 1e-12) throw std::runtime_error("canonicalize_quat: zero quaternion");
    double s = (q[0] < 0.0) ? -1.0 / n : 1.0 / n;
    return {q[0] * s, q[1] * s, q[2] * s, q[3] * s};
}

Eigen::Matrix3d Camera::rotation() const { return quat_to_rotmat(q); }

Eigen::Vector3d Camera::center() const { return -rotation().transpose() * translation(); }

Eigen::Matrix3d Camera::intrinsics() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = fx_px();
    k(1, 1) = fy_px();
    k(0, 2) = cx();
    k(1, 2) = cy();
    return k;
}

Camera Camera::from_nine_vector(const std::array<double, 9>& g, int width, int height) {
    Camera cam;
    cam.q = canonicalize_quat({g[0], g[1], g[2], g[3]});
    cam.t = {g[4], g[5], g[6]};
    cam.f = {g[7], g[8]};
    cam.width = width;
    cam.height = height;
    return cam;
}

Projection project_point(const Eigen::Vector3d& point_ref, const Camera& cam) {
    check_focal(cam);
    Eigen::Vector3d xc = cam.rotation() * point_ref + cam.translation();
    Projection p;
    p.depth = xc.z();
    if (std::fabs(xc.z()) > 1e-300) {
        p.u = cam.fx_px() * xc.x() / xc.z() + cam.cx();
        p.v = cam.fy_px() * xc.y() / xc.z() + cam.cy();
    }
    p.in_frustum = xc.z() > 0.0 && p.u >= 0.0 && p.u < cam.width && p.v >= 0.0 && p.v < cam.height;
    return p;
}

Eigen::Vector3d unproject_pixel(double u, double v, double depth, const Camera& cam) {
    check_focal(cam);
    Eigen::Vector3d xc((u - cam.cx()) / cam.fx_px() * depth, (v - cam.cy()) / cam.fy_px() * depth,
                       depth);
    return cam.rotation().transpose() * (xc - cam.translation());
}

PointMap unproject(const DepthMap& depth, const Camera& cam) {
    check_focal(cam);
    if (depth.height != cam.height || depth.width != cam.width)
        throw std::runtime_error("unproject: depth/camera size mismatch");
    PointMap pm(depth.height, depth.width);
    Eigen::Matrix3d rt = cam.rotation().transpose();
    Eigen::Vector3d t = cam.translation();
    double fx = cam.fx_px(), fy = cam.fy_px(), cx = cam.cx(), cy = cam.cy();
    for (int i = 0; i < depth.height; ++i) {
        for (int j = 0; j < depth.width; ++j) {
            std::size_t k = static_cast<std::size_t>(i) * depth.width + j;
            if (!depth.valid[k]) continue;
            double d = depth.values[k];
            Eigen::Vector3d xc((j + 0.5 - cx) / fx * d, (i + 0.5 - cy) / fy * d, d);
            pm.points[k] = rt * (xc - t);
            pm.valid[k] = 1;
        }
    }
    return pm;
}

std::vector<Projection> project(const PointMap& points, const Camera& cam) {
    check_focal(cam);
    std::vector<Projection> out(points.points.size());
    for (std::size_t k = 0; k < points.points.size(); ++k) {
        if (!points.valid[k]) continue;
        out[k] = project_point(points.points[k], cam);
    }
    return out;
}

namespace {

// Express every camera relative to new_ref: R' = R * R0^T, t' = t - R' t0.
void reroot(std::vector<Camera>& cams, const Camera& new_ref) {
    Eigen::Matrix3d r0t = new_ref.rotation().transpose();
    Eigen::Vector3d t0 = new_ref.translation();
    for (auto& c : cams) {
        Eigen::Matrix3d r = c.rotation() * r0t;
        Eigen::Vector3d t = c.translation() - r * t0;
        c.q = rotmat_to_quat(r);
        c.t = {t.x(), t.y(), t.z()};
    }
    // Pin the reference to exact identity.
}

}  // namespace

SceneBundle normalize_scene(const SceneBundle& bundle) {
    if (bundle.num_frames < 1) throw std::runtime_error("normalize_scene: empty bundle");
    SceneBundle out = bundle;
    Camera ref = out.cameras[0];
    reroot(out.cameras, ref);
    out.cameras[0].q = {1.0, 0.0, 0.0, 0.0};
    out.cameras[0].t = {0.0, 0.0, 0.0};

    double dist_sum = 0.0;
    std::size_t count = 0;
    for (int i = 0; i < out.num_frames; ++i) {
        PointMap pm = unproject(out.depths[i], out.cameras[i]);
        for (std::size_t k = 0; k < pm.points.size(); ++k) {
            if (!pm.valid[k]) continue;
            dist_sum += pm.points[k].norm();
            ++count;
        }
    }
    if (count == 0) throw std::runtime_error("normalize_scene: no valid depth pixels");
    double scale = dist_sum / static_cast<double>(count);
    if (scale < 1e-300) throw std::runtime_error("normalize_scene: degenerate zero-scale scene");
    for (auto& c : out.cameras)
        for (double& ti : c.t) ti /= scale;
    for (auto& d : out.depths)
        for (double& v : d.values) v /= scale;
    return out;
}

SceneBundle subset_bundle(const SceneBundle& bundle, const std::vector<int>& selected) {
    if (selected.empty()) throw std::runtime_error("subset_bundle: empty selection");
    SceneBundle out;
    out.num_frames = static_cast<int>(selected.size());
    out.height = bundle.height;
    out.width = bundle.width;
    out.reference_index = 0;
    std::size_t frame_px = static_cast<std::size_t>(3) * bundle.height * bundle.width;
    out.images.resize(frame_px * selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
        int s = selected[i];
        if (s < 0 || s >= bundle.num_frames) throw std::runtime_error("subset_bundle: index out of range");
        std::copy(bundle.images.begin() + s * frame_px, bundle.images.begin() + (s + 1) * frame_px,
                  out.images.begin() + i * frame_px);
        out.cameras.push_back(bundle.cameras[s]);
        out.depths.push_back(bundle.depths[s]);
        if (bundle.has_dynamic_masks()) out.dynamic_masks.push_back(bundle.dynamic_masks[s]);
    }
    Camera ref = out.cameras[0];
    reroot(out.cameras, ref);
    out.cameras[0].q = {1.0, 0.0, 0.0, 0.0};
    out.cameras[0].t = {0.0, 0.0, 0.0};
    return out;
}

std::optional<Eigen::Matrix3d> fundamental_matrix(const Camera& cam_a, const Camera& cam_b) {
    check_focal(cam_a);
    check_focal(cam_b);
    Eigen::Matrix3d r_rel = cam_b.rotation() * cam_a.rotation().transpose();
    Eigen::Vector3d t_rel = cam_b.translation() - r_rel * cam_a.translation();
    if (t_rel.norm() < 1e-12) return std::nullopt;  // pure rotation, no epipolar geometry
    Eigen::Matrix3d tx;
    tx << 0, -t_rel.z(), t_rel.y(), t_rel.z(), 0, -t_rel.x(), -t_rel.y(), t_rel.x(), 0;
    Eigen::Matrix3d e = tx * r_rel;
    return cam_b.intrinsics().transpose().inverse() * e * cam_a.intrinsics().inverse();
}

std::optional<double> sampson_distance(double ua, double va, double ub, double vb,
                                       const Camera& cam_a, const Camera& cam_b) {
    auto f = fundamental_matrix(cam_a, cam_b);
    if (!f) return std::nullopt;
    Eigen::Vector3d xa(ua, va, 1.0), xb(ub, vb, 1.0);
    Eigen::Vector3d fxa = (*f) * xa;
    Eigen::Vector3d ftxb = f->transpose() * xb;
    double num = xb.dot(fxa);
    double den = fxa.x() * fxa.x() + fxa.y() * fxa.y() + ftxb.x() * ftxb.x() + ftxb.y() * ftxb.y();
    if (den < 1e-300) return 0.0;
    return num * num / den;
}

}  // namespace mvr
