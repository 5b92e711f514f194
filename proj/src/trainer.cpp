#include "contourforge/trainer.hpp"

#include "contourforge/coarse.hpp"
#include "contourforge/error.hpp"
#include "contourforge/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace contourforge {

void TrainConfig::validate() const {
    if (iterations < 0) throw DomainError("iterations must be >= 0");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw DomainError("learning_rate must be >= 0");
    if (align_every < 1) throw DomainError("align_every must be >= 1");
    if (align_warmup < 0 || align_warmup > iterations) throw DomainError("align_warmup must lie in [0, iterations]");
    weights.validate();
    evolution.validate();
    for (const auto& e : beta_schedule) {
        if (e.iteration < 0 || !(e.beta >= 0 && e.beta <= 1)) throw DomainError("invalid beta schedule entry");
    }
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    const nlohmann::json& t = j.contains("train") ? j["train"] : j;
    c.iterations = t.value("iterations", c.iterations);
    c.learning_rate = t.value("learning_rate", c.learning_rate);
    c.align_warmup = t.value("align_warmup", std::min(c.align_warmup, c.iterations));
    c.align_every = t.value("align_every", c.align_every);
    c.align = t.value("align", c.align);
    c.seed = j.value("seed", t.value("seed", c.seed));
    if (t.contains("beta_schedule")) {
        for (const auto& e : t["beta_schedule"]) {
            c.beta_schedule.push_back({e.at("iteration").get<int>(), e.at("beta").get<double>()});
        }
    }
    if (j.contains("loss")) c.weights = LossWeights::from_json(j["loss"]);
    if (j.contains("evolution")) c.evolution = EvolutionParams::from_json(j["evolution"], c.evolution);
    // An infinite lambda is the "never align" convention.
    if (std::isinf(c.evolution.lambda)) c.align = false;
    c.validate();
    return c;
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json schedule = nlohmann::json::array();
    for (const auto& e : beta_schedule) schedule.push_back({{"iteration", e.iteration}, {"beta", e.beta}});
    return {{"train",
             {{"iterations", iterations},
              {"learning_rate", learning_rate},
              {"align_warmup", align_warmup},
              {"align_every", align_every},
              {"align", align},
              {"beta_schedule", schedule}}},
            {"loss", weights.to_json()},
            {"evolution", evolution.to_json()},
            {"seed", seed}};
}

DivergenceError::DivergenceError(int iteration, double total)
    : std::runtime_error(fmt::format("training diverged at iteration {} (total loss {})", iteration, total)),
      iteration_(iteration) {}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json TrainReport::to_json() const {
    nlohmann::json curve = {{"bce", nlohmann::json::array()},
                            {"nms", nlohmann::json::array()},
                            {"dir", nlohmann::json::array()},
                            {"total", nlohmann::json::array()},
                            {"beta", nlohmann::json::array()}};
    for (const auto& l : loss_curve) {
        curve["bce"].push_back(l.bce);
        curve["nms"].push_back(l.nms);
        curve["dir"].push_back(l.dir);
        curve["total"].push_back(l.total);
        curve["beta"].push_back(l.beta);
    }
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : alignments) {
        events.push_back({{"iteration", e.iteration},
                          {"chosen_t", e.chosen_t},
                          {"initial_score", e.initial_score},
                          {"chosen_score", e.chosen_score},
                          {"accepted", e.accepted},
                          {"error_before", opt_json(e.error_before)},
                          {"error_after", opt_json(e.error_after)}});
    }
    return {{"iterations", loss_curve.size()},
            {"loss_curve", std::move(curve)},
            {"alignments", std::move(events)},
            {"initial_boundary_error", opt_json(initial_boundary_error)},
            {"final_boundary_error", opt_json(final_boundary_error)}};
}

TrainReport train(const ScalarField& initial_logits, const BinaryMask& noisy_gt_region, const TrainConfig& config,
                  const std::optional<BinaryMask>& true_reference) {
    config.validate();
    if (initial_logits.channels() != 1 || initial_logits.width() != noisy_gt_region.width() ||
        initial_logits.height() != noisy_gt_region.height()) {
        throw DomainError("train: logits must be single-channel and match the GT region");
    }
    if (true_reference && !true_reference->same_shape(noisy_gt_region)) {
        throw DomainError("train: reference mask shape differs");
    }
    if (!noisy_gt_region.any()) throw DomainError("train: empty GT region");

    auto error_vs_reference = [&](const BinaryMask& region) -> std::optional<double> {
        if (!true_reference) return std::nullopt;
        return boundary_error(region, *true_reference);
    };

    TrainReport report;
    report.loss_curve.reserve(static_cast<std::size_t>(config.iterations));
    ScalarField logits = initial_logits;
    BinaryMask region = noisy_gt_region;
    GroundTruth gt = GroundTruth::from_boundaries({mask_to_boundary(region)}, config.weights.normal_sigma);
    report.initial_boundary_error = error_vs_reference(region);

    for (int it = 0; it < config.iterations; ++it) {
        LossWeights w = config.weights;
        for (const auto& e : config.beta_schedule)
            if (it >= e.iteration) w.beta = e.beta;

        if (config.align && it >= config.align_warmup && (it - config.align_warmup) % config.align_every == 0) {
            const AlignResult ar = active_align(region, sigmoid(logits), config.evolution, w);
            AlignmentEvent ev;
            ev.iteration = it;
            ev.chosen_t = ar.chosen_t;
            ev.initial_score = ar.initial_score;
            ev.chosen_score = ar.chosen_score;
            ev.error_before = error_vs_reference(region);
            ev.accepted = ar.region.any();
            if (ev.accepted) {
                region = ar.region;
                gt = GroundTruth::from_boundaries({ar.boundary}, w.normal_sigma);
            } else {
                spdlog::warn("alignment at iteration {} collapsed; keeping the previous ground truth", it);
            }
            ev.error_after = error_vs_reference(region);
            report.alignments.push_back(ev);
        }

        LossBreakdown lb = total_loss(logits, gt, w);
        if (!std::isfinite(lb.total) || lb.total > 1e6) throw DivergenceError(it, lb.total);
        report.loss_curve.push_back({lb.bce, lb.nms, lb.dir, lb.total, lb.beta});

        auto z = logits.values();
        const auto g = lb.gradient.values();
        for (std::size_t i = 0; i < z.size(); ++i) z[i] -= config.learning_rate * g[i];
    }

    report.final_logits = std::move(logits);
    report.final_region = region;
    report.final_boundary_error = error_vs_reference(region);
    return report;
}

std::vector<double> sharpness_profile(const ScalarField& pred, const BinaryMask& gt_boundary,
                                      const NormalField& normals, int L) {
    if (L < 1) throw DomainError("sharpness_profile: L must be >= 1");
    std::vector<double> sum(static_cast<std::size_t>(2 * L + 1), 0.0);
    std::size_t n = 0;
    for (int y = 0; y < gt_boundary.height(); ++y) {
        for (int x = 0; x < gt_boundary.width(); ++x) {
            if (!gt_boundary.get(y, x) || !normals.is_valid(y, x)) continue;
            const auto line = sample_line(pred, 0, x, y, normals.at(y, x), L);
            if (!line) continue;
            const auto v = line->values();
            for (std::size_t t = 0; t < v.size(); ++t) sum[t] += v[t];
            ++n;
        }
    }
    if (n > 0)
        for (auto& s : sum) s /= static_cast<double>(n);
    return sum;
}

double sharpness_ratio(const std::vector<double>& profile) {
    if (profile.size() < 3 || profile.size() % 2 == 0) throw DomainError("sharpness_ratio: odd profile length >= 3 required");
    const std::size_t c = profile.size() / 2;
    const double side = 0.5 * (profile[c - 1] + profile[c + 1]);
    return profile[c] / std::max(side, 1e-12);
}

BinaryMask disc_mask(int width, int height, double cx, double cy, double radius) {
    BinaryMask m(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            m.set(y, x, dx * dx + dy * dy <= radius * radius);
        }
    }
    return m;
}

BinaryMask CircleTask::true_region() const {
    const double c = size / 2;
    return disc_mask(size, size, c, c, true_radius);
}

BinaryMask CircleTask::noisy_region() const {
    const double c = size / 2;
    return disc_mask(size, size, c, c, noisy_radius);
}

ScalarField CircleTask::blurred_truth() const {
    ScalarField f = gaussian_smooth(mask_to_boundary(true_region()).to_field(), blur_sigma);
    const double m = f.max_value();
    if (m > 0)
        for (auto& v : f.values()) v /= m;
    return f;
}

ScalarField CircleTask::initial_logits(std::uint64_t seed) const {
    ScalarField z = blurred_truth();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, init_noise > 0 ? init_noise : 1.0);
    for (auto& v : z.values()) {
        v = logit(std::clamp(v, 0.02, 0.98));
        if (init_noise > 0) v += noise(rng);
    }
    return z;
}

CircleTask CircleTask::from_json(const nlohmann::json& j) {
    CircleTask t;
    t.size = j.value("size", t.size);
    t.true_radius = j.value("true_radius", t.true_radius);
    t.noisy_radius = j.value("noisy_radius", t.noisy_radius);
    t.blur_sigma = j.value("blur_sigma", t.blur_sigma);
    t.init_noise = j.value("init_noise", t.init_noise);
    if (t.size < 8 || t.size > 4096) throw DomainError("task size must lie in [8, 4096]");
    if (!(t.true_radius > 0) || !(t.noisy_radius > 0)) throw DomainError("task radii must be > 0");
    if (2 * std::max(t.true_radius, t.noisy_radius) + 2 >= t.size) throw DomainError("task radii exceed the image");
    if (!(t.blur_sigma >= 0) || !(t.init_noise >= 0)) throw DomainError("blur_sigma and init_noise must be >= 0");
    return t;
}

nlohmann::json CircleTask::to_json() const {
    return {{"size", size},
            {"true_radius", true_radius},
            {"noisy_radius", noisy_radius},
            {"blur_sigma", blur_sigma},
            {"init_noise", init_noise}};
}

}  // namespace contourforge
