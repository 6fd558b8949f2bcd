#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace mvr {

// Pinhole camera with the 9-vector parameterization (q, t, f). Extrinsics map
// reference-frame points into this camera's frame: X_cam = R(q) * X_ref + t.
// f holds focal lengths normalized by half image width/height; the principal
// point sits at the image center.
struct Camera {
    std::array<double, 4> q{1.0, 0.0, 0.0, 0.0};  // (w, x, y, z)
    std::array<double, 3> t{0.0, 0.0, 0.0};
    std::array<double, 2> f{1.0, 1.0};
    int width = 0;
    int height = 0;

    double fx_px() const { return f[0] * width * 0.5; }
    double fy_px() const { return f[1] * height * 0.5; }
    double cx() const { return width * 0.5; }
    double cy() const { return height * 0.5; }

    Eigen::Matrix3d rotation() const;
    Eigen::Vector3d translation() const { return Eigen::Vector3d(t[0], t[1], t[2]); }
    Eigen::Vector3d center() const;  // camera center in the reference frame
    Eigen::Matrix3d intrinsics() const;

    std::array<double, 9> nine_vector() const {
        return {q[0], q[1], q[2], q[3], t[0], t[1], t[2], f[0], f[1]};
    }
    static Camera from_nine_vector(const std::array<double, 9>& g, int width, int height);
};

struct DepthMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;       // H*W, row-major
    std::vector<std::uint8_t> valid;  // H*W

    DepthMap() = default;
    DepthMap(int h, int w) : height(h), width(w), values(h * w, 0.0), valid(h * w, 0) {}
    std::size_t npix() const { return values.size(); }
};

struct PointMap {
    int height = 0;
    int width = 0;
    std::vector<Eigen::Vector3d> points;  // H*W, reference frame
    std::vector<std::uint8_t> valid;

    PointMap() = default;
    PointMap(int h, int w) : height(h), width(w), points(h * w), valid(h * w, 0) {}
};

struct SceneBundle {
    int num_frames = 0;
    int height = 0;
    int width = 0;
    std::vector<double> images;  // N*3*H*W in [0,1]
    std::vector<Camera> cameras;
    std::vector<DepthMap> depths;
    // Optional per-frame dynamic-region masks (H*W each); pixels flagged here
    // keep their depth but are excluded from positive-pair construction.
    std::vector<std::vector<std::uint8_t>> dynamic_masks;
    int reference_index = 0;

    double pixel(int frame, int channel, int row, int col) const {
        return images[((static_cast<std::size_t>(frame) * 3 + channel) * height + row) * width + col];
    }
    double& pixel(int frame, int channel, int row, int col) {
        return images[((static_cast<std::size_t>(frame) * 3 + channel) * height + row) * width + col];
    }
    bool has_dynamic_masks() const { return !dynamic_masks.empty(); }
    bool is_dynamic(int frame, int row, int col) const {
        return has_dynamic_masks() && dynamic_masks[frame][row * width + col] != 0;
    }
};

// Quaternion algebra. quat_to_rotmat requires |q| within 1e-6 of 1.
Eigen::Matrix3d quat_to_rotmat(const std::array<double, 4>& q);
std::array<double, 4> rotmat_to_quat(const Eigen::Matrix3d& r);
// Normalizes and flips to the w >= 0 hemisphere. Throws on near-zero norm.
std::array<double, 4> canonicalize_quat(const std::array<double, 4>& q);

struct Projection {
    double u = 0.0;  // pixel x
    double v = 0.0;  // pixel y
    double depth = 0.0;
    bool in_frustum = false;  // inside [0,W)x[0,H) with positive depth
};

Projection project_point(const Eigen::Vector3d& point_ref, const Camera& cam);
Eigen::Vector3d unproject_pixel(double u, double v, double depth, const Camera& cam);
PointMap unproject(const DepthMap& depth, const Camera& cam);
// Project a point map back into a camera: pixel coordinates plus camera-frame
// depth. Out-of-frustum is a flag, never an error.
std::vector<Projection> project(const PointMap& points, const Camera& cam);

// Rescale ground truth to unit space: camera 0 becomes identity, translations
// and depths are divided by the mean distance of valid unprojected points to
// the origin. Throws if no valid depth pixel exists.
SceneBundle normalize_scene(const SceneBundle& bundle);

// Re-root a bundle on a subset of frames; selected[0] becomes the reference.
SceneBundle subset_bundle(const SceneBundle& bundle, const std::vector<int>& selected);

// First-order epipolar residual in px^2. Returns nullopt when the two camera
// centers coincide (epipolar geometry degenerate).
std::optional<double> sampson_distance(double ua, double va, double ub, double vb,
                                       const Camera& cam_a, const Camera& cam_b);

// Fundamental matrix mapping homogeneous pixels of cam_a to epipolar lines in
// cam_b. Nullopt on zero baseline.
std::optional<Eigen::Matrix3d> fundamental_matrix(const Camera& cam_a, const Camera& cam_b);

}  // namespace mvr
