#include "mvrecon/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvr {

namespace {

void jitter_frame(SceneBundle& b, int frame, const AugmentationSpec& spec, Rng& rng) {
    double bf = 1.0 + rng.uniform(-spec.brightness, spec.brightness);
    double cf = 1.0 + rng.uniform(-spec.contrast, spec.contrast);
    double sf = 1.0 + rng.uniform(-spec.saturation, spec.saturation);
    double hu = rng.uniform(-spec.hue, spec.hue);

    std::size_t npix = static_cast<std::size_t>(b.height) * b.width;
    double mean_gray = 0.0;
    for (std::size_t k = 0; k < npix; ++k) {
        int i = static_cast<int>(k) / b.width, j = static_cast<int>(k) % b.width;
        mean_gray += 0.299 * b.pixel(frame, 0, i, j) + 0.587 * b.pixel(frame, 1, i, j) +
                     0.114 * b.pixel(frame, 2, i, j);
    }
    mean_gray /= static_cast<double>(npix);

    double th = hu * 2.0 * M_PI, ct = std::cos(th), st = std::sin(th);
    for (std::size_t k = 0; k < npix; ++k) {
        int i = static_cast<int>(k) / b.width, j = static_cast<int>(k) % b.width;
        double r = b.pixel(frame, 0, i, j), g = b.pixel(frame, 1, i, j), bl = b.pixel(frame, 2, i, j);
        r *= bf;
        g *= bf;
        bl *= bf;
        double gray = 0.299 * r + 0.587 * g + 0.114 * bl;
        r = mean_gray * bf + cf * (r - mean_gray * bf);
        g = mean_gray * bf + cf * (g - mean_gray * bf);
        bl = mean_gray * bf + cf * (bl - mean_gray * bf);
        r = gray + sf * (r - gray);
        g = gray + sf * (g - gray);
        bl = gray + sf * (bl - gray);
        // Hue rotation in YIQ space.
        double y = 0.299 * r + 0.587 * g + 0.114 * bl;
        double ii = 0.596 * r - 0.274 * g - 0.322 * bl;
        double q = 0.211 * r - 0.523 * g + 0.312 * bl;
        double i2 = ct * ii - st * q, q2 = st * ii + ct * q;
        r = y + 0.956 * i2 + 0.621 * q2;
        g = y - 0.272 * i2 - 0.647 * q2;
        bl = y - 1.106 * i2 + 1.703 * q2;
        b.pixel(frame, 0, i, j) = std::clamp(r, 0.0, 1.0);
        b.pixel(frame, 1, i, j) = std::clamp(g, 0.0, 1.0);
        b.pixel(frame, 2, i, j) = std::clamp(bl, 0.0, 1.0);
    }
}

void blur_frame(SceneBundle& b, int frame, double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kern(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kern[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kern[i + radius];
    }
    for (double& k : kern) k /= ksum;

    std::vector<double> tmp(static_cast<std::size_t>(b.height) * b.width);
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < b.height; ++i)
            for (int j = 0; j < b.width; ++j) {
                double s = 0.0;
                for (int d = -radius; d <= radius; ++d)
                    s += kern[d + radius] * b.pixel(frame, c, i, std::clamp(j + d, 0, b.width - 1));
                tmp[static_cast<std::size_t>(i) * b.width + j] = s;
            }
        for (int i = 0; i < b.height; ++i)
            for (int j = 0; j < b.width; ++j) {
                double s = 0.0;
                for (int d = -radius; d <= radius; ++d)
                    s += kern[d + radius] *
                         tmp[static_cast<std::size_t>(std::clamp(i + d, 0, b.height - 1)) * b.width + j];
                b.pixel(frame, c, i, j) = s;
            }
    }
}

void mask_rect(SceneBundle& b, int frame, int r0, int c0, int r1, int c1) {
    r0 = std::clamp(r0, 0, b.height);
    r1 = std::clamp(r1, 0, b.height);
    c0 = std::clamp(c0, 0, b.width);
    c1 = std::clamp(c1, 0, b.width);
    for (int i = r0; i < r1; ++i)
        for (int j = c0; j < c1; ++j) {
            for (int c = 0; c < 3; ++c) b.pixel(frame, c, i, j) = 0.0;
            if (!b.depths.empty()) b.depths[frame].valid[static_cast<std::size_t>(i) * b.width + j] = 0;
        }
}

// One clockwise quarter turn of every spatial field; square images only.
void rotate_quarter(SceneBundle& b) {
    if (b.height != b.width)
        throw std::runtime_error("augment: 90-degree rotation needs square images");
    int n = b.height;
    auto rot_plane = [n](auto& get, auto& set) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) set(i, j, get(n - 1 - j, i));
    };
    for (int f = 0; f < b.num_frames; ++f) {
        for (int c = 0; c < 3; ++c) {
            std::vector<double> src(static_cast<std::size_t>(n) * n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) src[static_cast<std::size_t>(i) * n + j] = b.pixel(f, c, i, j);
            auto get = [&](int i, int j) { return src[static_cast<std::size_t>(i) * n + j]; };
            auto set = [&](int i, int j, double v) { b.pixel(f, c, i, j) = v; };
            rot_plane(get, set);
        }
        if (!b.depths.empty()) {
            DepthMap src = b.depths[f];
            auto getv = [&](int i, int j) { return src.values[static_cast<std::size_t>(i) * n + j]; };
            auto setv = [&](int i, int j, double v) {
                b.depths[f].values[static_cast<std::size_t>(i) * n + j] = v;
            };
            rot_plane(getv, setv);
            auto getm = [&](int i, int j) {
                return static_cast<double>(src.valid[static_cast<std::size_t>(i) * n + j]);
            };
            auto setm = [&](int i, int j, double v) {
                b.depths[f].valid[static_cast<std::size_t>(i) * n + j] = static_cast<std::uint8_t>(v);
            };
            rot_plane(getm, setm);
        }
        if (b.has_dynamic_masks()) {
            std::vector<std::uint8_t> src = b.dynamic_masks[f];
            auto getd = [&](int i, int j) {
                return static_cast<double>(src[static_cast<std::size_t>(i) * n + j]);
            };
            auto setd = [&](int i, int j, double v) {
                b.dynamic_masks[f][static_cast<std::size_t>(i) * n + j] = static_cast<std::uint8_t>(v);
            };
            rot_plane(getd, setd);
        }
        if (!b.cameras.empty()) {
            // Clockwise image rotation: the new camera sees (x,y,z)->(-y,x,z)
            // and the focal pair swaps.
            Camera& cam = b.cameras[f];
            Eigen::Matrix3d rz;
            rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
            Eigen::Matrix3d r = rz * cam.rotation();
            Eigen::Vector3d t = rz * cam.translation();
            cam.q = rotmat_to_quat(r);
            cam.t = {t.x(), t.y(), t.z()};
            std::swap(cam.f[0], cam.f[1]);
        }
    }
}

std::array<double, 4> safe_quat(double w, double x, double y, double z) {
    double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (n < 1e-9) return {1.0, 0.0, 0.0, 0.0};  // degenerate prediction
    return canonicalize_quat({w, x, y, z});
}

std::array<double, 9> reroot_camera(const std::array<double, 9>& g_frame,
                                    const std::array<double, 9>& g_ref) {
    auto qa = safe_quat(g_frame[0], g_frame[1], g_frame[2], g_frame[3]);
    auto qr = safe_quat(g_ref[0], g_ref[1], g_ref[2], g_ref[3]);
    Eigen::Matrix3d ra = quat_to_rotmat(qa), rr = quat_to_rotmat(qr);
    Eigen::Vector3d ta(g_frame[4], g_frame[5], g_frame[6]), tr(g_ref[4], g_ref[5], g_ref[6]);
    Eigen::Matrix3d rel = ra * rr.transpose();
    Eigen::Vector3d t = ta - rel * tr;
    auto q = canonicalize_quat(rotmat_to_quat(rel));
    return {q[0], q[1], q[2], q[3], t.x(), t.y(), t.z(), g_frame[7], g_frame[8]};
}

}  // namespace

SceneBundle augment(const SceneBundle& bundle, const AugmentationSpec& spec, Rng& rng,
                    AugmentationRecord& record, int quarter_turns) {
    SceneBundle b = bundle;
    for (int f = 0; f < b.num_frames; ++f) {
        if (spec.brightness > 0 || spec.contrast > 0 || spec.saturation > 0 || spec.hue > 0)
            jitter_frame(b, f, spec, rng);
        if (spec.blur_sigma_max > 0)
            blur_frame(b, f, rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max));
        if (spec.mask_prob > 0 && rng.uniform() < spec.mask_prob) {
            int mh = static_cast<int>(rng.uniform_int(spec.mask_side_min, spec.mask_side_max));
            int mw = static_cast<int>(rng.uniform_int(spec.mask_side_min, spec.mask_side_max));
            int r0 = static_cast<int>(rng.uniform_int(0, b.height - 1));
            int c0 = static_cast<int>(rng.uniform_int(0, b.width - 1));
            mask_rect(b, f, r0, c0, r0 + mh, c0 + mw);
        }
    }

    int qt = quarter_turns;
    if (qt < 0) qt = spec.rotate90 ? static_cast<int>(rng.uniform_int(0, 3)) : 0;
    for (int k = 0; k < qt; ++k) rotate_quarter(b);
    record.quarter_turns = qt;

    std::vector<int> perm(b.num_frames);
    for (int i = 0; i < b.num_frames; ++i) perm[i] = i;
    if (spec.fixed_permutation) {
        perm = *spec.fixed_permutation;
        if (static_cast<int>(perm.size()) != b.num_frames)
            throw std::runtime_error("augment: fixed permutation has wrong length");
    } else if (spec.permute_frames) {
        perm = rng.permutation(b.num_frames);
    }
    record.permutation = perm;

    SceneBundle out = b;
    out.reference_index = 0;
    for (int i = 0; i < b.num_frames; ++i) {
        int src = perm[i];
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < b.height; ++y)
                for (int x = 0; x < b.width; ++x) out.pixel(i, c, y, x) = b.pixel(src, c, y, x);
        if (!b.depths.empty()) out.depths[i] = b.depths[src];
        if (!b.cameras.empty()) out.cameras[i] = b.cameras[src];
        if (b.has_dynamic_masks()) out.dynamic_masks[i] = b.dynamic_masks[src];
    }
    return out;
}

void ema_update(ParamStore& teacher, const ParamStore& student, double m) {
    for (const auto& name : teacher.names()) {
        Tensor& t = teacher(name)->value;
        const Tensor& s = student(name)->value;
        if (t.shape != s.shape) throw std::runtime_error("ema_update: shape mismatch for " + name);
        for (std::size_t i = 0; i < t.size(); ++i) t.v[i] = m * t.v[i] + (1.0 - m) * s.v[i];
    }
}

DistillLosses distill_step(ParamStore& student, const ParamStore& teacher,
                           const SceneBundle& bundle, const ModelConfig& model,
                           const DistillConfig& cfg, Rng& rng) {
    int qt = cfg.spec.rotate90 ? static_cast<int>(rng.uniform_int(0, 3)) : 0;
    Rng rng_t = rng.fork();
    Rng rng_s = cfg.shared_augmentation ? rng_t : rng.fork();
    AugmentationRecord rec_t, rec_s;
    SceneBundle aug_t = augment(bundle, cfg.spec, rng_t, rec_t, qt);
    SceneBundle aug_s = augment(bundle, cfg.spec, rng_s, rec_s, qt);

    ModelOutputs out_t = forward_model(aug_t, teacher, model);
    ModelOutputs out_s = forward_model(aug_s, student, model);

    int n = bundle.num_frames;
    std::vector<int> pos_t(n), pos_s(n);  // original frame -> stream position
    for (int i = 0; i < n; ++i) {
        pos_t[rec_t.permutation[i]] = i;
        pos_s[rec_s.permutation[i]] = i;
    }

    namespace a = ad;
    // l2 token matching at the tapped layers, teacher detached.
    a::Var feat = a::constant(Tensor::scalar(0.0));
    std::size_t feat_count = 0;
    for (std::size_t tap = 0; tap < out_s.trunk.taps.size(); ++tap)
        for (int o = 0; o < n; ++o) {
            const a::Var& sv = out_s.trunk.taps[tap].frames[pos_s[o]];
            a::Var tv = a::constant(out_t.trunk.taps[tap].frames[pos_t[o]]->value);
            feat = a::add(feat, a::sum(a::square(a::sub(sv, tv))));
            feat_count += sv->value.size();
        }
    feat = a::mul_const(feat, 1.0 / static_cast<double>(feat_count));

    // l1 regression of cameras onto teacher predictions. When the two streams
    // picked different reference frames the teacher targets are re-expressed
    // relative to its prediction of the student's reference; with matching
    // references the raw predictions are directly comparable.
    int sref = rec_s.permutation[0];
    bool same_ref = rec_t.permutation[0] == sref;
    auto teacher_g9 = [&](int o) {
        std::array<double, 9> g{};
        const auto& v = out_t.cameras[pos_t[o]].g9->value.v;
        for (int i = 0; i < 9; ++i) g[i] = v[i];
        return g;
    };
    std::array<double, 9> gref = teacher_g9(sref);
    a::Var cam = a::constant(Tensor::scalar(0.0));
    for (int o = 0; o < n; ++o) {
        std::array<double, 9> target = same_ref ? teacher_g9(o) : reroot_camera(teacher_g9(o), gref);
        if (target[0] < 0.0)
            for (int i = 0; i < 4; ++i) target[i] = -target[i];
        const a::Var& g9 = out_s.cameras[pos_s[o]].g9;
        double sflip = g9->value.v[0] < 0.0 ? -1.0 : 1.0;
        a::Var g = a::reshape(g9, {1, 9});
        a::Var q = a::mul_const(a::slice_cols(g, 0, 4), sflip);
        a::Var rest = a::slice_cols(g, 4, 9);
        Tensor tt({1, 9}, std::vector<double>(target.begin(), target.end()));
        cam = a::add(cam, a::sum(a::abs(a::sub(a::concat_cols({q, rest}), a::constant(tt)))));
    }
    cam = a::mul_const(cam, 1.0 / static_cast<double>(n));

    // l1 depth regression; the shared rotation keeps pixel grids aligned.
    a::Var dep = a::constant(Tensor::scalar(0.0));
    std::size_t dep_count = 0;
    for (int o = 0; o < n; ++o) {
        const auto& sd = out_s.depths[pos_s[o]];
        a::Var td = a::constant(out_t.depths[pos_t[o]].depth->value);
        dep = a::add(dep, a::sum(a::abs(a::sub(sd.depth, td))));
        dep_count += sd.depth->value.size();
    }
    dep = a::mul_const(dep, 1.0 / static_cast<double>(dep_count));

    a::Var total = a::add(a::add(a::mul_const(feat, cfg.feature_weight),
                                 a::mul_const(cam, cfg.camera_weight)),
                          a::mul_const(dep, cfg.depth_weight));
    ad::backward(total);
    // Frozen parameters keep a zero gradient by contract.
    for (const auto& name : student.names()) {
        auto& e = student.entry(name);
        if (!e.trainable) e.var->grad.fill(0.0);
    }

    DistillLosses losses;
    losses.feature = feat->value.v[0];
    losses.camera = cam->value.v[0];
    losses.depth = dep->value.v[0];
    losses.total = total->value.v[0];
    return losses;
}

}  // namespace mvr
