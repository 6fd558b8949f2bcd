#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mvrecon/distill.hpp"
#include "mvrecon/engine.hpp"
#include "mvrecon/heads.hpp"
#include "mvrecon/io.hpp"
#include "mvrecon/metrics.hpp"
#include "mvrecon/quality.hpp"
#include "mvrecon/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mvr;

namespace {

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    if (j.contains("num_blocks")) cfg.num_blocks = j["num_blocks"];
    if (j.contains("hidden_dim")) cfg.hidden_dim = j["hidden_dim"];
    if (j.contains("num_heads")) cfg.num_heads = j["num_heads"];
    if (j.contains("patch_size")) cfg.patch_size = j["patch_size"];
    if (j.contains("num_registers")) cfg.num_registers = j["num_registers"];
    if (j.contains("register_attention_ratio"))
        cfg.register_attention_ratio = j["register_attention_ratio"];
    if (j.contains("mlp_ratio")) cfg.mlp_ratio = j["mlp_ratio"];
    if (j.contains("depth_upsample")) cfg.depth_upsample = j["depth_upsample"];
    return cfg;
}

// A data path is either one bundle (has manifest.json) or a directory of
// bundle subdirectories; subdirectories are visited in sorted order.
std::vector<std::string> bundle_dirs(const std::string& data) {
    if (fs::exists(fs::path(data) / "manifest.json")) return {data};
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(data))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json"))
            dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw std::runtime_error("no bundles found under " + data);
    return dirs;
}

json camera_to_json(const Camera& c) {
    return json{{"q", c.q}, {"t", c.t}, {"f", c.f}};
}

void write_json(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

int cmd_make_synthetic(const std::string& kind, int frames, int size, double focal,
                       std::uint64_t seed, const std::string& out) {
    SyntheticConfig cfg;
    cfg.kind = scene_kind_from_string(kind);
    cfg.num_frames = frames;
    cfg.height = cfg.width = size;
    cfg.focal = focal;
    cfg.seed = seed;
    save_bundle(make_synthetic(cfg), out);
    std::cout << "wrote " << kind << " bundle (" << frames << " frames, " << size << "x" << size
              << ") to " << out << "\n";
    return 0;
}

// Forward a bundle through a freshly initialized model and save the
// predictions as a bundle (predicted cameras + depths over the input images).
int cmd_demo_forward(const std::string& data, const std::string& config_path, std::uint64_t seed,
                     const std::string& out) {
    SceneBundle bundle = normalize_scene(load_bundle(data));
    json jc = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        f >> jc;
    }
    ModelConfig cfg = model_config_from_json(jc);
    cfg.image_h = bundle.height;
    cfg.image_w = bundle.width;
    cfg.validate();

    Rng rng(seed);
    ParamStore params = init_params(cfg, rng);
    ModelOutputs outputs = forward_model(bundle, params, cfg);

    SceneBundle pred = bundle;
    json report;
    report["frames"] = bundle.num_frames;
    report["parameters"] = params.num_scalars();
    for (int f = 0; f < bundle.num_frames; ++f) {
        pred.cameras[f] = outputs.cameras[f].to_camera(bundle.width, bundle.height);
        const auto& dv = outputs.depths[f].depth->value.v;
        pred.depths[f].values.assign(dv.begin(), dv.end());
        pred.depths[f].valid.assign(dv.size(), 1);
        double mind = dv[0], maxd = dv[0];
        for (double d : dv) {
            mind = std::min(mind, d);
            maxd = std::max(maxd, d);
        }
        report["cameras"].push_back(camera_to_json(pred.cameras[f]));
        report["depth_range"].push_back({mind, maxd});
    }
    fs::create_directories(out);
    save_bundle(pred, out + "/pred");
    write_json(out + "/forward.json", report);
    std::cout << "forward pass over " << bundle.num_frames << " frames done; report at " << out
              << "/forward.json\n";
    return 0;
}

int cmd_train_toy(const std::string& data, const std::string& config_path, int steps,
                  std::uint64_t seed, bool ssl, const std::string& init_dir,
                  const std::string& out) {
    std::vector<SceneBundle> bundles;
    for (const auto& dir : bundle_dirs(data)) bundles.push_back(load_bundle(dir));

    json jc = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        f >> jc;
    }
    TrainConfig cfg;
    cfg.model = model_config_from_json(jc);
    cfg.model.image_h = bundles[0].height;
    cfg.model.image_w = bundles[0].width;
    cfg.model.validate();
    cfg.schedule.total_steps = steps;
    cfg.schedule.peak_lr = jc.value("peak_lr", 1e-3);
    cfg.min_frames = jc.value("min_frames", 1);
    cfg.max_frames = jc.value("max_frames", 4);
    cfg.seed = seed;
    cfg.out_dir = out;

    Rng rng(seed ^ 0x5eedULL);
    ParamStore params = init_params(cfg.model, rng);
    if (!init_dir.empty()) params.load_snapshot(load_tensors(init_dir));

    if (!ssl) {
        TrainResult res = train_toy(params, bundles, cfg, [](int step, const LossBreakdown& bd) {
            if (step % 50 == 0)
                std::cout << "step " << step << " total " << bd.total << " cam " << bd.cam
                          << " depth " << bd.depth << " point " << bd.point << "\n";
        });
        if (res.aborted_nan) {
            std::cerr << "aborted on non-finite loss after " << res.steps_completed << " steps\n";
            return 2;
        }
        std::cout << "trained " << res.steps_completed << " steps; final total "
                  << (res.history.empty() ? 0.0 : res.history.back().total) << "\n";
        return 0;
    }

    // Self-distillation phase: EMA teacher, frozen heads.
    params.set_trainable_prefix("camhead.", false);
    params.set_trainable_prefix("depthhead.", false);
    TeacherState teacher{params.clone(), 0.999};
    AdamW opt(params, cfg.adamw);
    DistillConfig dc;
    fs::create_directories(out);
    std::ofstream log(out + "/loss_log.jsonl");
    Rng step_rng(seed);
    for (int step = 0; step < steps; ++step) {
        const SceneBundle& base =
            bundles[step_rng.uniform_int(0, static_cast<std::int64_t>(bundles.size()) - 1)];
        SceneBundle bundle = normalize_scene(base);
        params.zero_grads();
        Rng srng = step_rng.fork();
        DistillLosses dl = distill_step(params, teacher.params, bundle, cfg.model, dc, srng);
        clip_gradients(params, cfg.schedule.clip_norm);
        opt.step(cfg.schedule.lr(step));
        ema_update(teacher.params, params, teacher.decay);
        log << "{\"step\":" << step << ",\"total\":" << dl.total << ",\"feature\":" << dl.feature
            << ",\"camera\":" << dl.camera << ",\"depth\":" << dl.depth << "}\n";
        if (step % 20 == 0) std::cout << "ssl step " << step << " total " << dl.total << "\n";
    }
    save_tensors(params.snapshot(), out + "/ckpt_final");
    save_tensors(teacher.params.snapshot(), out + "/ckpt_teacher");
    std::cout << "ssl phase done (" << steps << " steps)\n";
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& out) {
    std::vector<std::string> preds = bundle_dirs(pred_path), gts = bundle_dirs(gt_path);
    if (preds.size() != gts.size())
        throw std::runtime_error("eval: prediction/ground-truth sequence counts differ");

    json report;
    report["sequences"] = json::array();
    double auc_sum = 0, absrel_sum = 0, delta_sum = 0, pe_sum = 0;
    std::string table = "sequence  auc@3  absrel  delta1.25  point_err\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
        SceneBundle pred = load_bundle(preds[i]);
        SceneBundle gt = normalize_scene(load_bundle(gts[i]));
        int skipped = 0;
        double auc = pose_auc(pred.cameras, gt.cameras, 3.0, &skipped);
        std::vector<std::vector<double>> pd;
        for (const auto& d : pred.depths) pd.push_back(d.values);
        DepthMetrics dm = depth_metrics(pd, gt.depths, DepthAlignment::median_scale);
        double pe = point_error(pd, pred.cameras, gt);

        json row;
        row["name"] = fs::path(gts[i]).filename().string();
        row["auc3"] = auc;
        row["zero_baseline_pairs_skipped"] = skipped;
        row["abs_rel"] = dm.abs_rel;
        row["delta_1.25"] = dm.delta_125;
        row["point_error"] = pe;
        report["sequences"].push_back(row);
        table += row["name"].get<std::string>() + "  " + std::to_string(auc) + "  " +
                 std::to_string(dm.abs_rel) + "  " + std::to_string(dm.delta_125) + "  " +
                 std::to_string(pe) + "\n";
        auc_sum += auc;
        absrel_sum += dm.abs_rel;
        delta_sum += dm.delta_125;
        pe_sum += pe;
    }
    double n = static_cast<double>(preds.size());
    report["aggregate"] = {{"auc3", auc_sum / n},
                           {"abs_rel", absrel_sum / n},
                           {"delta_1.25", delta_sum / n},
                           {"point_error", pe_sum / n}};
    fs::create_directories(out);
    write_json(out + "/metrics.json", report);
    write_text_file(out + "/metrics.txt", table);
    std::cout << table;
    return 0;
}

int cmd_filter(const std::string& data, std::uint64_t seed, const std::string& out) {
    fs::create_directories(out);
    std::string csv = "sequence,accept,parallax_deg,linearity,completeness,noise_fraction,"
                      "consistency,fov_x,reasons\n";
    for (const auto& dir : bundle_dirs(data)) {
        SceneBundle bundle = load_bundle(dir);
        Rng rng(seed);
        QualityFeatures f = compute_quality(bundle, rng);
        GateResult gate = heuristic_gate(f);
        double consistency = 0.0;
        if (bundle.num_frames >= 2) {
            ConsistencyResult cr = multi_view_consistency(bundle);
            consistency = cr.valid_fraction;
            if (cr.rejected) {
                gate.accept = false;
                gate.reasons.push_back("multi-view consistency below 5%");
            }
        }
        std::string name = fs::path(dir).filename().string();
        json row;
        row["name"] = name;
        row["accept"] = gate.accept;
        row["reasons"] = gate.reasons;
        row["features"] = {{"s_trans", f.s_trans},
                           {"s_rot", f.s_rot},
                           {"median_max_parallax", f.median_max_parallax},
                           {"linearity", f.linearity},
                           {"planarity", f.planarity},
                           {"scattering", f.scattering},
                           {"completeness", f.completeness},
                           {"noise_fraction", f.noise_fraction},
                           {"registration_ratio", f.registration_ratio},
                           {"fov_x", f.fov_x},
                           {"fov_y", f.fov_y},
                           {"distortion_ratio", f.distortion_ratio},
                           {"valid_depth_fraction", f.valid_depth_fraction},
                           {"multi_view_consistency", consistency}};
        write_json(out + "/" + name + ".json", row);
        std::string reasons;
        for (const auto& r : gate.reasons) reasons += (reasons.empty() ? "" : "; ") + r;
        csv += name + "," + (gate.accept ? "accept" : "reject") + "," +
               std::to_string(f.median_max_parallax) + "," + std::to_string(f.linearity) + "," +
               std::to_string(f.completeness) + "," + std::to_string(f.noise_fraction) + "," +
               std::to_string(consistency) + "," + std::to_string(f.fov_x) + ",\"" + reasons +
               "\"\n";
        std::cout << name << ": " << (gate.accept ? "accept" : "reject") << "\n";
    }
    write_text_file(out + "/report.csv", csv);
    return 0;
}

int cmd_flops(int frames, int tokens, int blocks, double ratio, int dim, const std::string& out) {
    FlopsConfig cfg;
    cfg.frames = frames;
    cfg.image_tokens = tokens;
    cfg.blocks = blocks;
    cfg.ratio = ratio;
    cfg.dim = dim;
    FlopsReport rep = flops_report(cfg);
    std::cout << rep.table();
    if (!out.empty()) {
        fs::create_directories(out);
        write_text_file(out + "/flops.json", rep.to_json() + "\n");
        write_text_file(out + "/flops.txt", rep.table());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feed-forward multi-view reconstruction toolkit"};
    app.require_subcommand(1);

    std::string kind = "plane", data, config, out, pred, gt, init_dir;
    int frames = 4, size = 32, steps = 100;
    int fl_frames = 24, fl_tokens = 672, fl_blocks = 24, fl_dim = 128;
    double focal = 1.5, ratio = 0.25;
    std::uint64_t seed = 0;
    bool ssl = false;

    auto* mk = app.add_subcommand("make-synthetic", "Generate an exact synthetic scene bundle");
    mk->add_option("--kind", kind,
                   "plane | box-room | orbit | dynamic-translating-object");
    mk->add_option("--frames", frames);
    mk->add_option("--size", size, "square image side in pixels");
    mk->add_option("--focal", focal, "normalized focal length");
    mk->add_option("--seed", seed);
    mk->add_option("--out", out)->required();

    auto* df = app.add_subcommand("demo-forward", "Run one forward pass of a fresh model");
    df->add_option("--data", data)->required();
    df->add_option("--config", config);
    df->add_option("--seed", seed);
    df->add_option("--out", out)->required();

    auto* tr = app.add_subcommand("train-toy", "Toy training loop (supervised or --ssl)");
    tr->add_option("--data", data)->required();
    tr->add_option("--config", config);
    tr->add_option("--steps", steps);
    tr->add_option("--seed", seed);
    tr->add_flag("--ssl", ssl, "run the teacher-student distillation phase");
    tr->add_option("--init", init_dir, "checkpoint directory to start from");
    tr->add_option("--out", out)->required();

    auto* ev = app.add_subcommand("eval", "Pose/depth/point metrics for predictions");
    ev->add_option("--pred", pred)->required();
    ev->add_option("--gt", gt)->required();
    ev->add_option("--out", out)->required();

    auto* fi = app.add_subcommand("filter", "Sequence-quality features and accept/reject gate");
    fi->add_option("--data", data)->required();
    fi->add_option("--seed", seed);
    fi->add_option("--out", out)->required();

    auto* fp = app.add_subcommand("flops", "Analytic attention-schedule cost model");
    fp->add_option("--frames", fl_frames);
    fp->add_option("--tokens", fl_tokens, "image tokens per frame");
    fp->add_option("--blocks", fl_blocks);
    fp->add_option("--ratio", ratio, "fraction of global layers replaced by register attention");
    fp->add_option("--dim", fl_dim);
    fp->add_option("--out", out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (mk->parsed()) return cmd_make_synthetic(kind, frames, size, focal, seed, out);
        if (df->parsed()) return cmd_demo_forward(data, config, seed, out);
        if (tr->parsed()) return cmd_train_toy(data, config, steps, seed, ssl, init_dir, out);
        if (ev->parsed()) return cmd_eval(pred, gt, out);
        if (fi->parsed()) return cmd_filter(data, seed, out);
        if (fp->parsed()) return cmd_flops(fl_frames, fl_tokens, fl_blocks, ratio, fl_dim, out);
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"" << e.what() << "\"}\n";
        return 1;
    }
    return 0;
}
