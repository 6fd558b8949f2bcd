#include "mvrecon/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "mvrecon/rng.hpp"

namespace mvr {

namespace {

struct Hit {
    double depth = 0.0;  // camera-frame z of the hit point
    int object = -1;     // -1 = miss
    Eigen::Vector3d point = Eigen::Vector3d::Zero();
};

// Scene geometry as a ray-cast closure: (origin, direction with unit
// camera-z) -> nearest hit. Direction is scaled so the ray parameter equals
// camera depth.
using Caster = std::function<Hit(const Eigen::Vector3d&, const Eigen::Vector3d&)>;

constexpr double kEps = 1e-9;

Hit cast_plane(const Eigen::Vector3d& c, const Eigen::Vector3d& dir, const Eigen::Vector3d& n,
               double d, int object) {
    Hit h;
    double denom = n.dot(dir);
    if (std::fabs(denom) < kEps) return h;
    double s = (d - n.dot(c)) / denom;
    if (s <= kEps) return h;
    h.depth = s;
    h.object = object;
    h.point = c + s * dir;
    return h;
}

// Exit of a ray starting inside the axis-aligned box [lo, hi]^3.
Hit cast_box_interior(const Eigen::Vector3d& c, const Eigen::Vector3d& dir, double lo, double hi) {
    double best = std::numeric_limits<double>::infinity();
    for (int ax = 0; ax < 3; ++ax) {
        if (std::fabs(dir[ax]) < kEps) continue;
        for (double bound : {lo, hi}) {
            double s = (bound - c[ax]) / dir[ax];
            if (s > kEps && s < best) best = s;
        }
    }
    Hit h;
    if (!std::isfinite(best)) return h;
    h.depth = best;
    h.object = 0;
    h.point = c + best * dir;
    return h;
}

// Entry of a ray into the axis-aligned box [lo, hi] (slab method).
Hit cast_box_exterior(const Eigen::Vector3d& c, const Eigen::Vector3d& dir,
                      const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, int object) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    for (int ax = 0; ax < 3; ++ax) {
        if (std::fabs(dir[ax]) < kEps) {
            if (c[ax] < lo[ax] || c[ax] > hi[ax]) return {};
            continue;
        }
        double t0 = (lo[ax] - c[ax]) / dir[ax];
        double t1 = (hi[ax] - c[ax]) / dir[ax];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
    }
    Hit h;
    if (tmax < tmin || tmax <= kEps) return h;
    double s = tmin > kEps ? tmin : tmax;
    h.depth = s;
    h.object = object;
    h.point = c + s * dir;
    return h;
}

Camera look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target, double focal, int w,
               int h) {
    Eigen::Vector3d z = (target - center).normalized();
    Eigen::Vector3d up(0.0, 1.0, 0.0);
    if (std::fabs(up.dot(z)) > 0.999) up = Eigen::Vector3d(1.0, 0.0, 0.0);
    Eigen::Vector3d x = up.cross(z).normalized();
    Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d r;
    r.row(0) = x;
    r.row(1) = y;
    r.row(2) = z;
    Camera cam;
    cam.q = rotmat_to_quat(r);
    Eigen::Vector3d t = -r * center;
    cam.t = {t.x(), t.y(), t.z()};
    cam.f = {focal, focal};
    cam.width = w;
    cam.height = h;
    return cam;
}

std::array<double, 3> shade(const Eigen::Vector3d& p, int object) {
    if (object == 1) {  // dynamic object: reddish with its own pattern
        return {0.8 + 0.2 * std::sin(5.0 * p.x() + 3.0 * p.y()),
                0.15 + 0.1 * std::sin(4.0 * p.z()), 0.1};
    }
    return {0.5 + 0.5 * std::sin(3.1 * p.x() + 1.7 * p.y() + 2.3 * p.z()),
            0.5 + 0.5 * std::sin(2.2 * p.x() - 1.3 * p.y() + 0.7 * p.z() + 1.0),
            0.5 + 0.5 * std::sin(-1.9 * p.x() + 2.9 * p.y() + 1.1 * p.z() + 2.0)};
}

void render(SceneBundle& b, int frame, const Caster& cast, bool dynamic_object_mask) {
    const Camera& cam = b.cameras[frame];
    Eigen::Matrix3d rt = cam.rotation().transpose();
    Eigen::Vector3d c = cam.center();
    for (int i = 0; i < b.height; ++i)
        for (int j = 0; j < b.width; ++j) {
            Eigen::Vector3d dc((j + 0.5 - cam.cx()) / cam.fx_px(),
                               (i + 0.5 - cam.cy()) / cam.fy_px(), 1.0);
            Hit h = cast(c, rt * dc);
            std::size_t k = static_cast<std::size_t>(i) * b.width + j;
            if (h.object < 0) continue;
            b.depths[frame].values[k] = h.depth;
            b.depths[frame].valid[k] = 1;
            auto rgb = shade(h.point, h.object);
            for (int ch = 0; ch < 3; ++ch)
                b.pixel(frame, ch, i, j) = std::clamp(rgb[ch], 0.0, 1.0);
            if (dynamic_object_mask && h.object == 1) b.dynamic_masks[frame][k] = 1;
        }
}

Hit nearer(const Hit& a, const Hit& b) {
    if (a.object < 0) return b;
    if (b.object < 0) return a;
    return a.depth <= b.depth ? a : b;
}

}  // namespace

SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "plane") return SceneKind::plane;
    if (s == "box-room") return SceneKind::box_room;
    if (s == "orbit") return SceneKind::orbit;
    if (s == "dynamic-translating-object") return SceneKind::dynamic_translating_object;
    throw std::runtime_error("unknown scene kind: " + s);
}

SceneBundle make_synthetic(const SyntheticConfig& cfg) {
    if (cfg.num_frames < 1) throw std::runtime_error("make_synthetic: need at least one frame");
    SceneBundle b;
    b.num_frames = cfg.num_frames;
    b.height = cfg.height;
    b.width = cfg.width;
    b.images.assign(static_cast<std::size_t>(cfg.num_frames) * 3 * cfg.height * cfg.width, 0.0);
    for (int f = 0; f < cfg.num_frames; ++f) b.depths.emplace_back(cfg.height, cfg.width);

    bool dyn = cfg.kind == SceneKind::dynamic_translating_object;
    if (dyn)
        b.dynamic_masks.assign(cfg.num_frames,
                               std::vector<std::uint8_t>(
                                   static_cast<std::size_t>(cfg.height) * cfg.width, 0));

    Rng rng(cfg.seed);
    int n = cfg.num_frames;

    switch (cfg.kind) {
        case SceneKind::plane:
        case SceneKind::dynamic_translating_object: {
            Eigen::Vector3d pn(0.0, 0.0, 1.0);
            double pd = 3.0;
            for (int f = 0; f < n; ++f) {
                double s = n > 1 ? static_cast<double>(f) / (n - 1) - 0.5 : 0.0;
                Eigen::Vector3d c(0.8 * s + 0.05 * rng.uniform(-1, 1),
                                  0.2 * std::sin(2.1 * f) + 0.05 * rng.uniform(-1, 1),
                                  0.1 * rng.uniform(-1, 1));
                Eigen::Vector3d target(0.3 * rng.uniform(-1, 1), 0.3 * rng.uniform(-1, 1), pd);
                b.cameras.push_back(look_at(c, target, cfg.focal, cfg.width, cfg.height));
            }
            for (int f = 0; f < n; ++f) {
                Eigen::Vector3d lo, hi;
                if (dyn) {
                    // The object slides along x across frames.
                    double ox = -0.6 + 1.2 * (n > 1 ? static_cast<double>(f) / (n - 1) : 0.5);
                    lo = Eigen::Vector3d(ox - 0.25, -0.25, 1.8);
                    hi = Eigen::Vector3d(ox + 0.25, 0.25, 2.3);
                }
                Caster cast = [&](const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
                    Hit h = cast_plane(c, d, pn, pd, 0);
                    if (dyn) h = nearer(h, cast_box_exterior(c, d, lo, hi, 1));
                    return h;
                };
                render(b, f, cast, dyn);
            }
            break;
        }
        case SceneKind::box_room: {
            double lo = -2.0, hi = 2.0;
            for (int f = 0; f < n; ++f) {
                Eigen::Vector3d c(0.6 * rng.uniform(-1, 1), 0.6 * rng.uniform(-1, 1),
                                  0.6 * rng.uniform(-1, 1));
                double th = 2.0 * M_PI * f / n + 0.3 * rng.uniform(-1, 1);
                Eigen::Vector3d target = c + Eigen::Vector3d(std::cos(th), 0.2 * rng.uniform(-1, 1),
                                                             std::sin(th));
                b.cameras.push_back(look_at(c, target, cfg.focal, cfg.width, cfg.height));
            }
            Caster cast = [&](const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
                return cast_box_interior(c, d, lo, hi);
            };
            for (int f = 0; f < n; ++f) render(b, f, cast, false);
            break;
        }
        case SceneKind::orbit: {
            // Ring of cameras above a ground plane (y points down), all aimed
            // at the same ground point; the subtended angle at that point
            // between opposite cameras is 2*atan(radius/height).
            Eigen::Vector3d pn(0.0, 1.0, 0.0);
            double pd = cfg.orbit_height;
            for (int f = 0; f < n; ++f) {
                double th = 2.0 * M_PI * f / n;
                Eigen::Vector3d c(cfg.orbit_radius * std::cos(th), 0.0,
                                  cfg.orbit_radius * std::sin(th));
                b.cameras.push_back(
                    look_at(c, Eigen::Vector3d(0.0, pd, 0.0), cfg.focal, cfg.width, cfg.height));
            }
            Caster cast = [&](const Eigen::Vector3d& c, const Eigen::Vector3d& d) {
                return cast_plane(c, d, pn, pd, 0);
            };
            for (int f = 0; f < n; ++f) render(b, f, cast, false);
            break;
        }
    }
    return b;
}

}  // namespace mvr
