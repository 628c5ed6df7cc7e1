// Copyright Contributors to the SemSplat Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface: scene synthesis, rendering, per-scene fitting,
// loss evaluation, metric reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "semsplat/io/bundle.hpp"
#include "semsplat/semsplat.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

LogLevel log_level() {
    const char* env = std::getenv("SEMSPLAT_LOG");
    if (!env) return LogLevel::kError;
    const std::string v(env);
    if (v == "debug") return LogLevel::kDebug;
    if (v == "info") return LogLevel::kInfo;
    return LogLevel::kError;
}

void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::kInfo) std::cerr << "semsplat: " << msg << "\n";
}

semsplat::LossWeights load_weights_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": JSON parse error at byte offset " + std::to_string(e.byte));
    }
    semsplat::LossWeights w;
    w.lambda_lpips = j.value("lambda_lpips", w.lambda_lpips);
    w.lambda_sem = j.value("lambda_sem", w.lambda_sem);
    w.lambda_geo = j.value("lambda_geo", w.lambda_geo);
    w.conf_ratio = j.value("conf_ratio", w.conf_ratio);
    semsplat::validate_weights(w);
    return w;
}

json weights_to_json(const semsplat::LossWeights& w) {
    return json{{"lambda_lpips", w.lambda_lpips},
                {"lambda_sem", w.lambda_sem},
                {"lambda_geo", w.lambda_geo},
                {"conf_ratio", w.conf_ratio}};
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error(path + ": write failed");
}

semsplat::ImageBuffer stack_views(const std::vector<const semsplat::ImageBuffer*>& bufs) {
    int height = 0;
    for (const auto* b : bufs) height += b->height;
    semsplat::ImageBuffer out(bufs.front()->width, height, bufs.front()->channels);
    std::size_t offset = 0;
    for (const auto* b : bufs) {
        std::copy(b->data.begin(), b->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += b->data.size();
    }
    return out;
}

struct CommonFlags {
    std::uint64_t seed = 0;
    int threads = semsplat::hardware_threads();
    int resolution = 48;
    std::string weights_path;
    std::optional<double> conf_ratio;
};

semsplat::LossWeights resolve_weights(const CommonFlags& flags) {
    semsplat::LossWeights w;
    if (!flags.weights_path.empty()) w = load_weights_file(flags.weights_path);
    if (flags.conf_ratio) w.conf_ratio = *flags.conf_ratio;
    semsplat::validate_weights(w);
    return w;
}

constexpr const char* kSynthSpecUsage =
    "scene spec must be a JSON object with at least one of the keys: "
    "gaussians, views, classes, sem_dim, compressed_dim, backdrop, spread";

semsplat::SynthSpec parse_synth_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open for reading");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": JSON parse error at byte offset " + std::to_string(e.byte) + "; " +
                                 kSynthSpecUsage);
    }
    if (!j.is_object() || j.empty()) throw std::runtime_error(path + ": empty scene spec; " + kSynthSpecUsage);
    semsplat::SynthSpec spec;
    spec.gaussians = j.value("gaussians", spec.gaussians);
    spec.views = j.value("views", spec.views);
    spec.classes = j.value("classes", spec.classes);
    spec.sem_dim = j.value("sem_dim", spec.sem_dim);
    spec.compressed_dim = j.value("compressed_dim", spec.compressed_dim);
    spec.backdrop = j.value("backdrop", spec.backdrop);
    spec.spread = j.value("spread", spec.spread);
    return spec;
}

void run_synth(const std::string& spec_path, const std::string& out_dir, const CommonFlags& flags) {
    const semsplat::SynthSpec spec = parse_synth_spec(spec_path);
    log_info("synthesizing " + std::to_string(spec.gaussians) + " gaussians, " + std::to_string(spec.views) +
             " views at " + std::to_string(flags.resolution) + "px");
    const semsplat::Bundle bundle = semsplat::synthesize_bundle(spec, flags.resolution, flags.seed, flags.threads);
    semsplat::write_bundle(out_dir, bundle);
    log_info("bundle written to " + out_dir);
}

void run_render(const std::string& scene_path, const std::string& camera_path, const std::string& out_dir,
                const CommonFlags& flags) {
    const semsplat::GaussianScene scene = semsplat::read_scene(scene_path);
    const auto violations = semsplat::validate_scene(scene);
    if (!violations.empty()) throw std::runtime_error(scene_path + ": " + violations.front());
    const semsplat::Camera camera = semsplat::read_camera(camera_path);
    const semsplat::RenderOutput out = semsplat::render(scene, camera, {flags.threads});
    fs::create_directories(out_dir);
    const fs::path base(out_dir);
    semsplat::write_ppm((base / "color.ppm").string(), out.color);
    semsplat::write_fmap((base / "color.fmap").string(), out.color);
    semsplat::write_fmap((base / "features.fmap").string(), out.features);
    semsplat::write_fmap((base / "depth.fmap").string(), out.depth);
    semsplat::write_fmap((base / "alpha.fmap").string(), out.alpha);
}

void run_fit(const std::string& bundle_dir, const std::string& out_dir, int iterations, double lr, double perturb,
             const std::string& init_path, const std::string& train_spec, const CommonFlags& flags) {
    const semsplat::Bundle gt = semsplat::read_bundle(bundle_dir);

    std::vector<semsplat::FitView> views;
    std::vector<semsplat::Camera> cameras;
    for (const auto& view : gt.views) {
        semsplat::FitView fv;
        fv.camera = view.camera;
        fv.target = view.color;
        fv.teacher = view.teacher;
        fv.reference = semsplat::reference_from_view(view);
        views.push_back(std::move(fv));
        cameras.push_back(view.camera);
    }

    semsplat::GaussianScene init = init_path.empty() ? gt.scene : semsplat::read_scene(init_path);
    if (perturb > 0.0) {
        semsplat::Rng rng(flags.seed);
        init = semsplat::perturb_scene(init, perturb, rng);
    }

    semsplat::FitConfig cfg;
    cfg.iterations = iterations;
    cfg.lr = lr;
    cfg.weights = resolve_weights(flags);
    cfg.seed = flags.seed;
    cfg.threads = flags.threads;
    cfg.train_geometry = train_spec.find("geometry") != std::string::npos;
    cfg.train_semantics = train_spec.find("semantics") != std::string::npos;
    cfg.train_codec = train_spec.find("codec") != std::string::npos;

    log_info("fitting " + std::to_string(init.primitives.size()) + " gaussians for " + std::to_string(iterations) +
             " iterations");
    const semsplat::FitResult result = semsplat::fit_scene(init, gt.codec, views, cfg);

    semsplat::Bundle out;
    out.scene = semsplat::encode_features(result.scene, result.codec);
    out.codec = result.codec;
    out.prototypes = gt.prototypes;
    out.seed = flags.seed;
    out.resolution = gt.resolution;
    out.views = semsplat::render_bundle_views(out.scene, out.codec, out.prototypes, cameras, flags.threads);
    semsplat::write_bundle(out_dir, out);

    json trace;
    trace["iterations"] = iterations;
    trace["lr"] = lr;
    trace["seed"] = flags.seed;
    trace["perturb"] = perturb;
    trace["weights"] = weights_to_json(cfg.weights);
    trace["trace"] = json::array();
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        const auto& t = result.trace[i];
        trace["trace"].push_back(json{{"iter", static_cast<int>(i)},
                                      {"l_rgb", t.l_rgb},
                                      {"l_sem", t.l_sem},
                                      {"l_geo", t.l_geo},
                                      {"l_total", t.l_total}});
    }
    write_json_file((fs::path(out_dir) / "trace.json").string(), trace);
    log_info("fitted bundle written to " + out_dir);
}

void check_bundles_compatible(const semsplat::Bundle& pred, const semsplat::Bundle& gt) {
    if (pred.views.size() != gt.views.size()) throw std::runtime_error("bundles have different view counts");
    for (std::size_t v = 0; v < pred.views.size(); ++v)
        if (!pred.views[v].color.same_shape(gt.views[v].color))
            throw std::runtime_error("bundle view " + std::to_string(v) + " has mismatched dimensions");
}

void run_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& protos_path,
              const std::string& out_path) {
    const semsplat::Bundle pred = semsplat::read_bundle(pred_dir);
    const semsplat::Bundle gt = semsplat::read_bundle(gt_dir);
    check_bundles_compatible(pred, gt);
    const semsplat::PrototypeSet protos =
        protos_path.empty() ? gt.prototypes : semsplat::read_prototypes(protos_path);

    std::vector<const semsplat::ImageBuffer*> pred_color, gt_color, pred_depth, gt_depth, depth_mask;
    std::vector<semsplat::ImageBuffer> pred_labels, gt_labels;
    double ssim_sum = 0.0;
    for (std::size_t v = 0; v < pred.views.size(); ++v) {
        pred_color.push_back(&pred.views[v].color);
        gt_color.push_back(&gt.views[v].color);
        pred_depth.push_back(&pred.views[v].depth);
        gt_depth.push_back(&gt.views[v].depth);
        depth_mask.push_back(&pred.views[v].alpha);
        pred_labels.push_back(semsplat::segment(pred.views[v].teacher, protos).labels);
        gt_labels.push_back(semsplat::segment(gt.views[v].teacher, protos).labels);
        ssim_sum += semsplat::ssim(pred.views[v].color, gt.views[v].color);
    }

    semsplat::MetricReport report;
    report.psnr = semsplat::psnr(stack_views(pred_color), stack_views(gt_color));
    report.ssim = ssim_sum / static_cast<double>(pred.views.size());
    const semsplat::ImageBuffer mask = stack_views(depth_mask);
    const auto [rel, tau] = semsplat::depth_metrics(stack_views(pred_depth), stack_views(gt_depth), &mask);
    report.rel = rel;
    report.tau = tau;

    std::vector<const semsplat::ImageBuffer*> pl, gl;
    for (const auto& b : pred_labels) pl.push_back(&b);
    for (const auto& b : gt_labels) gl.push_back(&b);
    const semsplat::SegMetrics seg =
        semsplat::seg_metrics(stack_views(pl), stack_views(gl), protos.num_classes());
    report.miou = seg.miou;
    report.acc = seg.acc;
    for (int c = 0; c < protos.num_classes(); ++c)
        if (std::isfinite(seg.per_class_iou[static_cast<std::size_t>(c)]))
            report.per_class_iou[protos.labels[static_cast<std::size_t>(c)]] =
                seg.per_class_iou[static_cast<std::size_t>(c)];

    json j;
    if (std::isinf(report.psnr))
        j["psnr"] = "inf";
    else
        j["psnr"] = report.psnr;
    j["ssim"] = report.ssim;
    j["rel"] = report.rel;
    j["tau"] = report.tau;
    j["miou"] = report.miou;
    j["acc"] = report.acc;
    j["per_class_iou"] = json::object();
    for (const auto& [label, iou] : report.per_class_iou) j["per_class_iou"][label] = iou;

    if (!out_path.empty()) write_json_file(out_path, j);
    std::cout << j.dump(2) << "\n";
}

void run_losses(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_path,
                const CommonFlags& flags) {
    const semsplat::Bundle pred = semsplat::read_bundle(pred_dir);
    const semsplat::Bundle gt = semsplat::read_bundle(gt_dir);
    check_bundles_compatible(pred, gt);
    const semsplat::LossWeights weights = resolve_weights(flags);

    std::vector<semsplat::ImageBuffer> pred_color, gt_color, pred_teacher, gt_teacher;
    std::vector<semsplat::PredictedPointMap> pred_points;
    std::vector<semsplat::ReferencePointMap> refs;
    for (std::size_t v = 0; v < pred.views.size(); ++v) {
        pred_color.push_back(pred.views[v].color);
        gt_color.push_back(gt.views[v].color);
        pred_teacher.push_back(pred.views[v].teacher);
        gt_teacher.push_back(gt.views[v].teacher);
        semsplat::PredictedPointMap pm;
        pm.width = pred.views[v].points.width;
        pm.height = pred.views[v].points.height;
        for (int y = 0; y < pm.height; ++y)
            for (int x = 0; x < pm.width; ++x) {
                const double* p = pred.views[v].points.pixel(x, y);
                pm.points.emplace_back(p[0], p[1], p[2]);
            }
        pred_points.push_back(std::move(pm));
        refs.push_back(semsplat::reference_from_view(gt.views[v]));
    }

    const semsplat::LossBreakdown rgb = semsplat::loss_rgb(pred_color, gt_color, weights);
    const semsplat::LossBreakdown sem = semsplat::loss_sem(pred_teacher, gt_teacher);
    const semsplat::LossBreakdown geo = semsplat::loss_geo(pred_points, refs, weights);

    json j;
    j["l_rgb"] = rgb.total;
    j["l_sem"] = sem.total;
    j["l_geo"] = geo.total;
    j["l_total"] = semsplat::loss_total(rgb.total, sem.total, geo.total, weights);
    j["per_view"] = json::array();
    for (std::size_t v = 0; v < rgb.per_view.size(); ++v)
        j["per_view"].push_back(
            json{{"l_rgb", rgb.per_view[v]}, {"l_sem", sem.per_view[v]}, {"l_geo", geo.per_view[v]}});

    if (!out_path.empty()) write_json_file(out_path, j);
    std::cout << j.dump(2) << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semsplat: differentiable semantic gaussian splatting at desk scale"};
    app.require_subcommand(1);

    CommonFlags flags;
    app.add_option("--seed", flags.seed, "random seed for all stochastic steps");
    app.add_option("--threads", flags.threads, "worker thread count (outputs are thread-count invariant)");
    app.add_option("--res", flags.resolution, "render resolution in pixels")->check(CLI::Range(8, 4096));
    app.add_option("--weights", flags.weights_path, "loss weights JSON file");
    double conf_ratio_flag = -1.0;
    auto* conf_opt = app.add_option("--conf-ratio", conf_ratio_flag, "confidence mask ratio in (0, 1]");

    auto* synth = app.add_subcommand("synth", "generate a ground-truth fixture bundle");
    std::string synth_spec, synth_out;
    synth->add_option("--spec", synth_spec, "scene spec JSON")->required();
    synth->add_option("--out", synth_out, "output bundle directory")->required();

    auto* render_cmd = app.add_subcommand("render", "render a scene from one camera");
    std::string render_scene, render_camera, render_out;
    render_cmd->add_option("--scene", render_scene, "scene file (SGS1)")->required();
    render_cmd->add_option("--camera", render_camera, "camera JSON")->required();
    render_cmd->add_option("--out", render_out, "output directory")->required();

    auto* fit = app.add_subcommand("fit", "fit a scene to a bundle's supervision");
    std::string fit_bundle, fit_out, fit_init;
    int fit_iters = 100;
    double fit_lr = 0.01;
    double fit_perturb = 0.0;
    std::string fit_train = "geometry,semantics,codec";
    fit->add_option("--bundle", fit_bundle, "ground-truth bundle directory")->required();
    fit->add_option("--out", fit_out, "output bundle directory")->required();
    fit->add_option("--iters", fit_iters, "iteration count")->check(CLI::PositiveNumber);
    fit->add_option("--lr", fit_lr, "learning rate")->check(CLI::PositiveNumber);
    fit->add_option("--perturb", fit_perturb, "seeded raw-parameter noise applied to the init scene");
    fit->add_option("--init", fit_init, "initial scene file (defaults to the bundle's scene)");
    fit->add_option("--train", fit_train, "trainable groups: geometry,semantics,codec");

    auto* eval_cmd = app.add_subcommand("eval", "metric report comparing two bundles");
    std::string eval_pred, eval_gt, eval_protos, eval_out;
    eval_cmd->add_option("--pred", eval_pred, "prediction bundle directory")->required();
    eval_cmd->add_option("--gt", eval_gt, "ground-truth bundle directory")->required();
    eval_cmd->add_option("--prototypes", eval_protos, "prototype JSON (defaults to the gt bundle's)");
    eval_cmd->add_option("--out", eval_out, "metric report JSON path");

    auto* losses_cmd = app.add_subcommand("losses", "loss report comparing two bundles");
    std::string losses_pred, losses_gt, losses_out;
    losses_cmd->add_option("--pred", losses_pred, "prediction bundle directory")->required();
    losses_cmd->add_option("--gt", losses_gt, "ground-truth bundle directory")->required();
    losses_cmd->add_option("--out", losses_out, "loss report JSON path");

    CLI11_PARSE(app, argc, argv);
    if (!conf_opt->empty()) flags.conf_ratio = conf_ratio_flag;

    try {
        if (*synth) run_synth(synth_spec, synth_out, flags);
        if (*render_cmd) run_render(render_scene, render_camera, render_out, flags);
        if (*fit) run_fit(fit_bundle, fit_out, fit_iters, fit_lr, fit_perturb, fit_init, fit_train, flags);
        if (*eval_cmd) run_eval(eval_pred, eval_gt, eval_protos, eval_out);
        if (*losses_cmd) run_losses(losses_pred, losses_gt, losses_out, flags);
    } catch (const std::exception& e) {
        std::cerr << "semsplat: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
