#include "contourforge/cli.hpp"

#include "contourforge/coarse.hpp"
#include "contourforge/contour.hpp"
#include "contourforge/error.hpp"
#include "contourforge/io.hpp"
#include "contourforge/levelset.hpp"
#include "contourforge/metrics.hpp"
#include "contourforge/morphology.hpp"
#include "contourforge/normals.hpp"
#include "contourforge/service.hpp"
#include "contourforge/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

namespace contourforge {

namespace fs = std::filesystem;
using nlohmann::json;

unsigned default_thread_count() {
    if (const char* env = std::getenv("CONTOURFORGE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 1024) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Loaders that name the offending file in their error message.
template <class F>
auto load(const fs::path& path, F&& fn) -> decltype(fn(path)) {
    try {
        return fn(path);
    } catch (const FormatError& e) {
        throw DomainError(path.string() + ": " + e.what());
    } catch (const json::exception& e) {
        throw DomainError(path.string() + ": " + e.what());
    }
}

ScalarField load_prob(const fs::path& p) {
    auto f = load(p, [](const fs::path& q) { return io::read_field_any(q); });
    if (f.channels() != 1) throw DomainError(p.string() + ": expected a single-channel probability map");
    return f;
}

BinaryMask load_mask(const fs::path& p) {
    return load(p, [](const fs::path& q) { return io::read_mask(q); });
}

json load_json(const fs::path& p) {
    return load(p, [](const fs::path& q) { return json::parse(io::read_file(q)); });
}

void require_same_shape(const ScalarField& f, const BinaryMask& m, std::string_view what) {
    if (f.width() != m.width() || f.height() != m.height()) {
        throw DomainError(fmt::format("{} is {}x{} but the probability map is {}x{}", what, m.width(), m.height(),
                                      f.width(), f.height()));
    }
}

void emit(std::ostream& out, const json& j) { out << j.dump() << '\n' << std::flush; }

template <class Work>
void parallel_for(std::size_t n, unsigned threads, Work&& work) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) work(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next++; i < n; i = next++) work(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct Globals {
    std::string log_level = "info";
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
};

struct EvolutionFlags {
    double lambda = 0.0;
    std::string lambda_text;
    double c = 0.0;
    int mu = 1;
    int steps = 50;
    int snapshot_every = 5;
    double balloon_threshold = 0.3;
    double sigma_y = 1.0;

    void add(CLI::App* cmd, const EvolutionParams& defaults) {
        lambda = defaults.lambda;
        c = defaults.c;
        mu = defaults.mu;
        steps = defaults.max_steps;
        snapshot_every = defaults.snapshot_every;
        balloon_threshold = defaults.balloon_threshold;
        sigma_y = defaults.sigma_y;
        cmd->add_option("--lambda", lambda_text, "GT weight in the speed function (number or inf)")
            ->default_str(fmt::format("{}", defaults.lambda));
        cmd->add_option("--c", c, "balloon velocity")->capture_default_str();
        cmd->add_option("--mu", mu, "curvature smoothing passes per step")->capture_default_str();
        cmd->add_option("--steps", steps, "maximum evolution steps")->capture_default_str()->check(CLI::NonNegativeNumber);
        cmd->add_option("--snapshot-every", snapshot_every, "trajectory snapshot cadence")
            ->capture_default_str()
            ->check(CLI::PositiveNumber);
        cmd->add_option("--balloon-threshold", balloon_threshold, "balloon acts where g > t * max g")
            ->capture_default_str();
        cmd->add_option("--sigma-y", sigma_y, "smoothing of the GT boundary term")->capture_default_str();
    }

    EvolutionParams params() const {
        EvolutionParams p;
        p.lambda = lambda;
        if (!lambda_text.empty()) {
            if (lambda_text == "inf" || lambda_text == "infinity") {
                p.lambda = std::numeric_limits<double>::infinity();
            } else {
                std::size_t used = 0;
                try {
                    p.lambda = std::stod(lambda_text, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != lambda_text.size()) throw CLI::ValidationError("--lambda", "expected a number or inf");
            }
        }
        p.c = c;
        p.mu = mu;
        p.max_steps = steps;
        p.snapshot_every = steps > 0 ? std::min(snapshot_every, steps) : snapshot_every;
        p.balloon_threshold = balloon_threshold;
        p.sigma_y = sigma_y;
        p.validate();
        return p;
    }
};

// ---- refine ---------------------------------------------------------------

struct RefineArgs {
    std::string prob;
    std::string init;
    std::string init_poly;
    std::string out;
    std::string trajectory;
    EvolutionFlags evo;
};

int cmd_refine(const RefineArgs& a, std::ostream& out) {
    const EvolutionParams params = a.evo.params();
    const ScalarField prob = load_prob(a.prob);
    BinaryMask init;
    if (!a.init.empty()) {
        init = load_mask(a.init);
    } else {
        const Polygon poly = load(a.init_poly, [](const fs::path& q) { return io::read_polygon(q); });
        init = polygon_to_mask(poly, prob.width(), prob.height());
    }
    require_same_shape(prob, init, "initial mask");
    if (!init.any()) throw DomainError("initial mask is empty");
    if (std::isinf(params.lambda)) throw DomainError("refine needs a finite --lambda");

    ScalarField y(prob.width(), prob.height(), 1);
    if (params.lambda > 0) y = smoothed_boundary_term(mask_to_boundary(init), params.sigma_y);
    const Trajectory traj = evolve(init, compute_g(prob, y, params.lambda), params);
    const BinaryMask& result = traj.final_snapshot().mask;
    io::write_mask(a.out, result);
    if (!a.trajectory.empty()) export_trajectory(traj, a.trajectory);
    spdlog::info("refine: {} steps, area {} -> {}", traj.steps_run, init.count(), result.count());

    emit(out, {{"command", "refine"},
               {"steps_run", traj.steps_run},
               {"early_stopped", traj.early_stopped},
               {"collapsed", traj.collapsed},
               {"area", result.count()},
               {"iou_vs_init", iou(result, init)},
               {"params", params.to_json()}});
    return kExitOk;
}

// ---- align ----------------------------------------------------------------

struct AlignArgs {
    std::string gt;
    std::string prob;
    std::string out;
    std::string boundary_out;
    std::string trajectory;
    std::string beta = "auto";
    EvolutionFlags evo;
};

int cmd_align(const AlignArgs& a, std::ostream& out) {
    const EvolutionParams params = a.evo.params();
    if (std::isinf(params.lambda)) throw DomainError("lambda = inf disables alignment; nothing to do");
    const ScalarField prob = load_prob(a.prob);
    const BinaryMask gt = load_mask(a.gt);
    require_same_shape(prob, gt, "GT region");
    LossWeights w;
    w.beta = a.beta == "auto" ? std::nullopt : std::optional<double>(std::stod(a.beta));
    w.validate();

    const AlignResult r = active_align(gt, prob, params, w);
    io::write_mask(a.out, r.region);
    if (!a.boundary_out.empty()) io::write_mask(a.boundary_out, r.boundary);
    if (!a.trajectory.empty()) export_trajectory(r.trajectory, a.trajectory);

    json scores = json::array();
    for (const auto& s : r.trajectory.snapshots) scores.push_back({{"step", s.step}, {"score", *s.score}});
    emit(out, {{"command", "align"},
               {"chosen_t", r.chosen_t},
               {"chosen_score", r.chosen_score},
               {"initial_score", r.initial_score},
               {"steps_run", r.trajectory.steps_run},
               {"snapshots", std::move(scores)},
               {"boundary_pixels", r.boundary.count()},
               {"params", params.to_json()}});
    return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string pred_dir;
    std::string gt_dir;
    int classes = 1;
    double tol = 0.0075;
    bool thin = false;
    int thresholds = 99;
    std::string out;
    std::string csv;
};

// "<image>_<class>.<ext>" -> (image, class)
std::optional<std::pair<std::string, int>> split_name(const fs::path& p) {
    const std::string stem = p.stem().string();
    const auto us = stem.rfind('_');
    if (us == std::string::npos || us == 0 || us + 1 == stem.size()) return std::nullopt;
    const std::string cls = stem.substr(us + 1);
    if (!std::all_of(cls.begin(), cls.end(), [](unsigned char ch) { return std::isdigit(ch); })) return std::nullopt;
    if (cls.size() > 6) return std::nullopt;
    return std::make_pair(stem.substr(0, us), std::stoi(cls));
}

std::map<std::pair<std::string, int>, fs::path> scan(const fs::path& dir, const std::set<std::string>& exts) {
    if (!fs::is_directory(dir)) throw DomainError(dir.string() + " is not a directory");
    std::map<std::pair<std::string, int>, fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || !exts.count(e.path().extension().string())) continue;
        if (auto key = split_name(e.path())) files[*key] = e.path();
    }
    return files;
}

int cmd_eval(const EvalArgs& a, unsigned threads, std::ostream& out, std::ostream& err) {
    const auto preds = scan(a.pred_dir, {".fpm", ".pgm"});
    const auto gts = scan(a.gt_dir, {".pgm"});
    if (preds.empty()) throw DomainError("no prediction files named <image>_<class>.fpm in " + a.pred_dir);

    std::set<std::string> images;
    for (const auto& [k, _] : preds) images.insert(k.first);
    for (const auto& [k, _] : gts) images.insert(k.first);
    std::vector<std::string> missing;
    for (const auto& img : images) {
        for (int k = 0; k < a.classes; ++k) {
            if (!preds.count({img, k})) missing.push_back(fmt::format("{}/{}_{}.fpm", a.pred_dir, img, k));
            if (!gts.count({img, k})) missing.push_back(fmt::format("{}/{}_{}.pgm", a.gt_dir, img, k));
        }
    }
    if (!missing.empty()) {
        for (const auto& m : missing) err << "missing: " << m << '\n';
        throw DomainError(fmt::format("{} prediction/GT files missing", missing.size()));
    }

    const std::vector<std::string> names(images.begin(), images.end());
    std::vector<ScalarField> pred_fields(names.size());
    std::vector<std::vector<BinaryMask>> gt_masks(names.size());
    parallel_for(names.size(), threads, [&](std::size_t i) {
        std::vector<ScalarField> channels;
        for (int k = 0; k < a.classes; ++k) {
            channels.push_back(load_prob(preds.at({names[i], k})));
            gt_masks[i].push_back(load_mask(gts.at({names[i], k})));
            require_same_shape(channels.back(), gt_masks[i].back(), "GT " + gts.at({names[i], k}).string());
        }
        const int w = channels[0].width();
        const int h = channels[0].height();
        std::vector<double> values;
        for (const auto& c : channels) {
            if (c.width() != w || c.height() != h) throw DomainError("class maps of " + names[i] + " differ in size");
            values.insert(values.end(), c.values().begin(), c.values().end());
        }
        pred_fields[i] = ScalarField(w, h, a.classes, std::move(values));
    });

    MatchParams mp;
    mp.tolerance_fraction = a.tol;
    mp.thin_predictions = a.thin;
    mp.thresholds = a.thresholds;
    mp.threads = threads;
    const EvalResult r = evaluate_dataset(pred_fields, gt_masks, mp);
    json full = r.to_json();
    full["images"] = names;
    io::write_file(a.out, full.dump(2) + "\n");
    if (!a.csv.empty()) io::write_file(a.csv, r.pr_csv());
    spdlog::info("eval: {} images, mean MF {:.4f}, mean AP {:.4f}", names.size(), r.mean_mf_ods, r.mean_ap);

    emit(out, {{"command", "eval"},
               {"images", names.size()},
               {"classes", a.classes},
               {"mean_mf_ods", r.mean_mf_ods},
               {"mean_ap", r.mean_ap},
               {"excluded_classes", r.excluded_classes}});
    return kExitOk;
}

// ---- simulate-coarse ------------------------------------------------------

struct CoarseArgs {
    std::string mask;
    double target = 4.0;
    std::string out;
    std::string report;
    std::string polygon_out;
};

int cmd_simulate_coarse(const CoarseArgs& a, unsigned threads, std::ostream& out) {
    if (!fs::is_directory(a.mask)) {
        const CoarseResult r = simulate_coarse(load_mask(a.mask), a.target);
        io::write_mask(a.out, r.coarse_mask);
        json rep = r.to_json();
        rep["target_err_px"] = a.target;
        if (!a.report.empty()) io::write_file(a.report, rep.dump(2) + "\n");
        if (!a.polygon_out.empty()) io::write_file(a.polygon_out, io::polygon_to_json(r.polygon).dump() + "\n");
        emit(out, {{"command", "simulate-coarse"},
                   {"clicks", r.clicks},
                   {"achieved_error_px", r.achieved_error_px},
                   {"iou_vs_fine", r.iou_vs_fine},
                   {"target_err_px", a.target}});
        return kExitOk;
    }

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.mask))
        if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DomainError("no .pgm masks in " + a.mask);
    fs::create_directories(a.out);

    std::vector<json> items(files.size());
    parallel_for(files.size(), threads, [&](std::size_t i) {
        const CoarseResult r = simulate_coarse(load_mask(files[i]), a.target);
        io::write_mask(fs::path(a.out) / files[i].filename(), r.coarse_mask);
        items[i] = r.to_json();
        items[i]["name"] = files[i].filename().string();
    });
    long total_clicks = 0;
    for (const auto& it : items) total_clicks += it["clicks"].get<long>();
    if (!a.report.empty()) {
        io::write_file(a.report,
                       json{{"target_err_px", a.target}, {"items", items}, {"total_clicks", total_clicks}}.dump(2) +
                           "\n");
    }
    emit(out, {{"command", "simulate-coarse"},
               {"items", items.size()},
               {"total_clicks", total_clicks},
               {"target_err_px", a.target}});
    return kExitOk;
}

// ---- train-toy ------------------------------------------------------------

int cmd_train_toy(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
                  std::ostream& out) {
    const json cfg = load_json(config_path);
    CircleTask task;
    TrainConfig tc;
    try {
        task = CircleTask::from_json(cfg.value("task", json::object()));
        tc = TrainConfig::from_json(cfg);
    } catch (const json::exception& e) {
        throw DomainError(config_path + ": " + e.what());
    }
    if (seed) tc.seed = *seed;

    const BinaryMask truth = task.true_region();
    const TrainReport r = train(task.initial_logits(tc.seed), task.noisy_region(), tc, truth);

    const BinaryMask true_boundary = mask_to_boundary(truth);
    const auto normals = estimate_normals(true_boundary.to_field(), tc.weights.normal_sigma);
    const auto profile = sharpness_profile(sigmoid(r.final_logits), true_boundary, normals, 2);
    const double ratio = sharpness_ratio(profile);

    json report = r.to_json();
    report["config"] = tc.to_json();
    report["task"] = task.to_json();
    report["sharpness_profile"] = profile;
    report["sharpness_ratio"] = ratio;
    fs::create_directories(out_dir);
    io::write_file(fs::path(out_dir) / "report.json", report.dump(2) + "\n");
    io::write_field(fs::path(out_dir) / "final_logits.fpm", r.final_logits);
    io::write_mask(fs::path(out_dir) / "final_region.pgm", r.final_region);

    const bool finite = std::all_of(r.loss_curve.begin(), r.loss_curve.end(),
                                    [](const IterationLoss& l) { return std::isfinite(l.total); });
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    emit(out, {{"command", "train-toy"},
               {"iterations", r.loss_curve.size()},
               {"final_total", r.loss_curve.empty() ? 0.0 : r.loss_curve.back().total},
               {"loss_finite", finite},
               {"alignments", r.alignments.size()},
               {"initial_boundary_error", opt(r.initial_boundary_error)},
               {"final_boundary_error", opt(r.final_boundary_error)},
               {"sharpness_ratio", ratio},
               {"seed", tc.seed}});
    return kExitOk;
}

// ---- normals --------------------------------------------------------------

int cmd_normals(const std::string& boundary, double sigma, const std::string& out_path, std::ostream& out) {
    if (!(sigma >= 0)) throw DomainError("--sigma must be >= 0");
    const ScalarField f = load(boundary, [](const fs::path& q) { return io::read_field_any(q); });
    const NormalField nf = estimate_normals(f, sigma);
    io::write_field(out_path, encode_normals(nf));
    emit(out, {{"command", "normals"},
               {"width", nf.width},
               {"height", nf.height},
               {"valid_pixels", nf.valid_count()},
               {"sigma", sigma}});
    return kExitOk;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string data;
    std::string cors_origin;
    std::size_t max_sessions = 64;
    int ttl_minutes = 30;
    std::size_t max_body_mb = 16;
};

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
    ServiceConfig cfg;
    cfg.max_sessions = a.max_sessions;
    cfg.idle_ttl = std::chrono::minutes(a.ttl_minutes);
    cfg.max_body_bytes = a.max_body_mb << 20;
    cfg.cors_origin = a.cors_origin;
    RefineService service(cfg);
    json maps = json::array();
    if (!a.data.empty()) {
        if (!fs::is_directory(a.data)) throw DomainError(a.data + " is not a directory");
        for (const auto& [name, id] : service.preload(a.data)) maps.push_back({{"file", name}, {"map_id", id}});
    }
    httplib::Server server;
    service.install(server);
    int port = a.port;
    if (port == 0) {
        port = server.bind_to_any_port(a.host);
        if (port < 0) throw DomainError(fmt::format("cannot bind {}", a.host));
    } else if (!server.bind_to_port(a.host, port)) {
        throw DomainError(fmt::format("cannot bind {}:{}", a.host, port));
    }
    emit(out, {{"command", "serve"}, {"host", a.host}, {"port", port}, {"maps", maps}});
    spdlog::info("listening on {}:{}", a.host, port);

    g_server = &server;
    const auto previous_int = std::signal(SIGINT, stop_server);
    const auto previous_term = std::signal(SIGTERM, stop_server);
    server.listen_after_bind();
    std::signal(SIGINT, previous_int);
    std::signal(SIGTERM, previous_term);
    g_server = nullptr;
    spdlog::info("server stopped");
    return kExitOk;
}

class LoggerScope {
public:
    LoggerScope(std::ostream& err, const std::string& level) : previous_(spdlog::default_logger()) {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
        auto logger = std::make_shared<spdlog::logger>("contourforge", sink);
        logger->set_pattern("[%l] %v");
        logger->set_level(spdlog::level::from_str(level));
        spdlog::set_default_logger(logger);
    }
    ~LoggerScope() { spdlog::set_default_logger(previous_); }

private:
    std::shared_ptr<spdlog::logger> previous_;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Boundary refinement toolkit: level-set refinement, alignment, evaluation", "contourforge"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "expand all help");

    Globals g;
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|critical|off")
        ->capture_default_str()
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));
    app.add_option("--threads", g.threads, "worker threads (default: CONTOURFORGE_THREADS or all cores)")
        ->check(CLI::Range(1u, 1024u));
    auto* seed_opt = app.add_option("--seed", "seed override for randomized commands");

    RefineArgs refine;
    auto* c_refine = app.add_subcommand("refine", "evolve an initial mask against a probability map");
    c_refine->add_option("--prob", refine.prob, "probability map (FPM1 or PGM)")->required();
    auto* init_pgm = c_refine->add_option("--init", refine.init, "initial mask (PGM)");
    auto* init_poly = c_refine->add_option("--init-poly", refine.init_poly, "initial polygon (JSON)");
    init_pgm->excludes(init_poly);
    c_refine->add_option("--out", refine.out, "refined mask (PGM)")->required();
    c_refine->add_option("--trajectory", refine.trajectory, "directory for trajectory snapshots");
    refine.evo.add(c_refine, EvolutionParams::coarse_to_fine_defaults());

    AlignArgs align;
    auto* c_align = app.add_subcommand("align", "actively align a noisy GT region to a prediction");
    c_align->add_option("--gt", align.gt, "GT region mask (PGM)")->required();
    c_align->add_option("--prob", align.prob, "probability map (FPM1 or PGM)")->required();
    c_align->add_option("--out", align.out, "aligned region (PGM)")->required();
    c_align->add_option("--boundary-out", align.boundary_out, "aligned boundary (PGM)");
    c_align->add_option("--trajectory", align.trajectory, "directory for trajectory snapshots");
    c_align->add_option("--beta", align.beta, "BCE class weight for scoring: auto or a number in [0,1]")
        ->capture_default_str();
    align.evo.add(c_align, EvolutionParams::alignment_defaults());

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "boundary precision/recall, MF(ODS) and AP");
    c_eval->add_option("--pred-dir", ev.pred_dir, "predictions <image>_<class>.fpm")->required();
    c_eval->add_option("--gt-dir", ev.gt_dir, "GT boundaries <image>_<class>.pgm")->required();
    c_eval->add_option("--classes", ev.classes, "number of classes")->capture_default_str()->check(CLI::Range(1, 4096));
    c_eval->add_option("--tol", ev.tol, "matching tolerance as a fraction of the image diagonal")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    c_eval->add_option("--thin", ev.thin, "thin predictions with test-time NMS")->capture_default_str();
    c_eval->add_option("--thresholds", ev.thresholds, "number of thresholds")
        ->capture_default_str()
        ->check(CLI::Range(1, 10000));
    c_eval->add_option("--out", ev.out, "EvalResult JSON")->required();
    c_eval->add_option("--csv", ev.csv, "PR table CSV");

    CoarseArgs co;
    auto* c_coarse = app.add_subcommand("simulate-coarse", "simulate a coarse annotation of a fine mask");
    c_coarse->add_option("--mask", co.mask, "fine mask PGM (or a directory of them)")->required();
    c_coarse->add_option("--target-err", co.target, "target boundary error in pixels")->required();
    c_coarse->add_option("--out", co.out, "coarse mask PGM (directory in directory mode)")->required();
    c_coarse->add_option("--report", co.report, "report JSON");
    c_coarse->add_option("--polygon-out", co.polygon_out, "simplified polygon JSON");

    std::string train_config;
    std::string train_out;
    auto* c_train = app.add_subcommand("train-toy", "train a logit field on the synthetic circle task");
    c_train->add_option("--config", train_config, "config JSON")->required();
    c_train->add_option("--out", train_out, "output directory")->required();

    std::string normals_in;
    std::string normals_out;
    double normals_sigma = kDefaultNormalSigma;
    auto* c_normals = app.add_subcommand("normals", "estimate boundary normals");
    c_normals->add_option("--boundary", normals_in, "boundary map (FPM1 or PGM)")->required();
    c_normals->add_option("--sigma", normals_sigma, "Gaussian sigma")->capture_default_str();
    c_normals->add_option("--out", normals_out, "encoded normals, 2-channel FPM1 (cos 2a, sin 2a)")->required();

    ServeArgs sv;
    auto* c_serve = app.add_subcommand("serve", "run the HTTP refinement service");
    c_serve->add_option("--port", sv.port, "TCP port (0 picks a free one)")->capture_default_str()->check(CLI::Range(0, 65535));
    c_serve->add_option("--host", sv.host, "bind address")->capture_default_str();
    c_serve->add_option("--data", sv.data, "directory of maps to preload");
    c_serve->add_option("--cors-origin", sv.cors_origin, "allowed CORS origin");
    c_serve->add_option("--max-sessions", sv.max_sessions, "session LRU capacity")->capture_default_str();
    c_serve->add_option("--ttl-minutes", sv.ttl_minutes, "idle session lifetime")->capture_default_str();
    c_serve->add_option("--max-body-mb", sv.max_body_mb, "request size limit")->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        CLI::App* failed = &app;
        for (auto* sub : app.get_subcommands()) failed = sub;
        err << failed->help();
        return kExitUsage;
    }
    if (refine.init.empty() && refine.init_poly.empty() && c_refine->parsed()) {
        err << "error: refine needs --init or --init-poly\n\n" << c_refine->help();
        return kExitUsage;
    }
    if (seed_opt->count() > 0) g.seed = seed_opt->as<std::uint64_t>();
    const unsigned threads = g.threads > 0 ? g.threads : default_thread_count();

    LoggerScope logger(err, g.log_level);
    try {
        if (c_refine->parsed()) return cmd_refine(refine, out);
        if (c_align->parsed()) return cmd_align(align, out);
        if (c_eval->parsed()) return cmd_eval(ev, threads, out, err);
        if (c_coarse->parsed()) return cmd_simulate_coarse(co, threads, out);
        if (c_train->parsed()) return cmd_train_toy(train_config, train_out, g.seed, out);
        if (c_normals->parsed()) return cmd_normals(normals_in, normals_sigma, normals_out, out);
        if (c_serve->parsed()) return cmd_serve(sv, out);
    } catch (const CLI::ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        spdlog::error("{}", e.what());
        return kExitDomain;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitDomain;
    }
    return kExitUsage;
}

}  // namespace contourforge
