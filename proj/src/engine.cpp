#include "mvrecon/engine.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mvrecon/heads.hpp"
#include "mvrecon/io.hpp"

namespace mvr {

double Schedule::lr(int step) const {
    if (total_steps <= 0) throw std::runtime_error("Schedule: total_steps not set");
    double warmup = warmup_fraction * total_steps;
    double s = static_cast<double>(step);
    if (warmup > 0.0 && s < warmup) return peak_lr * s / warmup;
    double span = total_steps - warmup;
    if (span <= 0.0) return 0.0;
    double u = (s - warmup) / span;
    return peak_lr * 0.5 * (1.0 + std::cos(M_PI * u));
}

AdamW::AdamW(ParamStore& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
    for (const auto& name : params_.names()) {
        const Tensor& val = params_(name)->value;
        m_.emplace_back(val.shape);
        v_.emplace_back(val.shape);
    }
}

void AdamW::step(double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    const auto& names = params_.names();
    for (std::size_t pi = 0; pi < names.size(); ++pi) {
        auto& e = params_.entry(names[pi]);
        if (!e.trainable) continue;
        Tensor& p = e.var->value;
        const Tensor& g = e.var->grad;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double gi = g.v[i];
            if (std::isnan(gi)) throw std::runtime_error("AdamW: NaN gradient in " + names[pi]);
            m_[pi].v[i] = cfg_.beta1 * m_[pi].v[i] + (1.0 - cfg_.beta1) * gi;
            v_[pi].v[i] = cfg_.beta2 * v_[pi].v[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = m_[pi].v[i] / bc1;
            double vhat = v_[pi].v[i] / bc2;
            p.v[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p.v[i]);
        }
    }
}

double clip_gradients(ParamStore& params, double clip_norm) {
    double sq = 0.0;
    for (const auto& name : params.names()) {
        auto& e = params.entry(name);
        if (!e.trainable) continue;
        for (double g : e.var->grad.v) sq += g * g;
    }
    double norm = std::sqrt(sq);
    if (norm > clip_norm && norm > 0.0) {
        double s = clip_norm / norm;
        for (const auto& name : params.names()) {
            auto& e = params.entry(name);
            if (!e.trainable) continue;
            for (double& g : e.var->grad.v) g *= s;
        }
    }
    return norm;
}

TrainResult train_toy(ParamStore& params, const std::vector<SceneBundle>& data,
                      const TrainConfig& cfg,
                      const std::function<void(int, const LossBreakdown&)>& on_step) {
    if (data.empty()) throw std::runtime_error("train_toy: no data");
    TrainResult result;
    Rng rng(cfg.seed);
    AdamW opt(params, cfg.adamw);

    std::ofstream log;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        log.open(cfg.out_dir + "/loss_log.jsonl");
    }

    for (int step = 0; step < cfg.schedule.total_steps; ++step) {
        const SceneBundle& base = data[rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1)];
        int hi = std::min(cfg.max_frames, base.num_frames);
        int lo = std::min(cfg.min_frames, hi);
        int nf = static_cast<int>(rng.uniform_int(lo, hi));
        std::vector<int> perm = rng.permutation(base.num_frames);
        perm.resize(nf);
        SceneBundle bundle = normalize_scene(subset_bundle(base, perm));

        params.zero_grads();
        ModelOutputs out = forward_model(bundle, params, cfg.model);
        LossBreakdown bd;
        Rng pair_rng = rng.fork();
        ad::Var loss = total_loss(out, bundle, cfg.weights, cfg.pairs, cfg.model.patch_size,
                                  pair_rng, &bd);
        if (!std::isfinite(bd.total)) {
            result.aborted_nan = true;
            break;
        }
        ad::backward(loss);
        clip_gradients(params, cfg.schedule.clip_norm);
        opt.step(cfg.schedule.lr(step));

        result.history.push_back(bd);
        result.steps_completed = step + 1;
        if (log.is_open())
            log << "{\"step\":" << step << ",\"total\":" << bd.total << ",\"cam\":" << bd.cam
                << ",\"depth\":" << bd.depth << ",\"point\":" << bd.point
                << ",\"match\":" << bd.match << ",\"frames\":" << nf << "}\n";
        if (on_step) on_step(step, bd);
        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
            (step + 1) % cfg.checkpoint_every == 0)
            save_tensors(params.snapshot(), cfg.out_dir + "/ckpt_" + std::to_string(step + 1));
    }
    if (!cfg.out_dir.empty()) save_tensors(params.snapshot(), cfg.out_dir + "/ckpt_final");
    return result;
}

}  // namespace mvr
