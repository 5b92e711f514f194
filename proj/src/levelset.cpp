#include "contourforge/levelset.hpp"

#include "contourforge/contour.hpp"
#include "contourforge/error.hpp"
#include "contourforge/io.hpp"
#include "contourforge/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace contourforge {

void EvolutionParams::validate() const {
    if (std::isnan(lambda) || lambda < 0) throw DomainError("lambda must be >= 0");
    if (!std::isfinite(c)) throw DomainError("balloon velocity c must be finite");
    if (mu < 0 || mu > 4) throw DomainError("mu must lie in [0, 4]");
    if (max_steps < 0) throw DomainError("max_steps must be >= 0");
    if (snapshot_every < 1) throw DomainError("snapshot_every must be >= 1");
    if (max_steps > 0 && snapshot_every > max_steps) throw DomainError("snapshot_every must be <= max_steps");
    if (!(balloon_threshold >= 0.0 && balloon_threshold <= 1.0)) {
        throw DomainError("balloon_threshold must lie in [0, 1]");
    }
    if (!(sigma_y >= 0.0)) throw DomainError("sigma_y must be >= 0");
}

EvolutionParams EvolutionParams::alignment_defaults() { return {}; }

EvolutionParams EvolutionParams::coarse_to_fine_defaults() {
    EvolutionParams p;
    p.lambda = 0.0;
    p.c = 1.0;
    return p;
}

EvolutionParams EvolutionParams::from_json(const nlohmann::json& j, EvolutionParams p) {
    if (j.contains("lambda")) {
        const auto& l = j["lambda"];
        if (l.is_string() && (l.get<std::string>() == "inf" || l.get<std::string>() == "infinity")) {
            p.lambda = std::numeric_limits<double>::infinity();
        } else {
            p.lambda = l.get<double>();
        }
    }
    p.c = j.value("c", p.c);
    p.mu = j.value("mu", p.mu);
    p.max_steps = j.value("max_steps", p.max_steps);
    p.snapshot_every = j.value("snapshot_every", p.snapshot_every);
    p.balloon_threshold = j.value("balloon_threshold", p.balloon_threshold);
    p.sigma_y = j.value("sigma_y", p.sigma_y);
    p.validate();
    return p;
}

nlohmann::json EvolutionParams::to_json() const {
    nlohmann::json j = {{"c", c},
                        {"mu", mu},
                        {"max_steps", max_steps},
                        {"snapshot_every", snapshot_every},
                        {"balloon_threshold", balloon_threshold},
                        {"sigma_y", sigma_y}};
    if (std::isinf(lambda)) {
        j["lambda"] = "inf";
    } else {
        j["lambda"] = lambda;
    }
    return j;
}

ScalarField compute_g(const ScalarField& pred, const ScalarField& gt_boundary, double lambda) {
    if (std::isnan(lambda) || lambda < 0) throw DomainError("compute_g: lambda must be >= 0");
    if (std::isinf(lambda)) {
        throw DomainError("compute_g: infinite lambda; the caller must skip alignment instead");
    }
    if (pred.channels() != 1 || gt_boundary.channels() != 1 || pred.width() != gt_boundary.width() ||
        pred.height() != gt_boundary.height()) {
        throw DomainError("compute_g: prediction and boundary must be single-channel and equally sized");
    }
    ScalarField g(pred.width(), pred.height(), 1);
    auto f = pred.values();
    auto y = gt_boundary.values();
    auto out = g.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = 1.0 / std::sqrt(1.0 + f[i]) + lambda / std::sqrt(1.0 + y[i]);
    }
    return g;
}

ScalarField smoothed_boundary_term(const BinaryMask& boundary, double sigma_y) {
    ScalarField s = gaussian_smooth(boundary.to_field(), sigma_y);
    const double m = s.max_value();
    if (m > 0) {
        for (auto& v : s.values()) v /= m;
    }
    return s;
}

namespace {

// numpy.gradient convention: central differences inside, one-sided at the border.
double diff_at(std::span<const double> v, int n, int stride, int i, std::size_t base) {
    if (n < 2) return 0.0;
    auto at = [&](int k) { return v[base + static_cast<std::size_t>(k) * stride]; };
    if (i == 0) return at(1) - at(0);
    if (i == n - 1) return at(n - 1) - at(n - 2);
    return 0.5 * (at(i + 1) - at(i - 1));
}

double mask_diff(const BinaryMask& u, int y, int x, bool along_x) {
    const int n = along_x ? u.width() : u.height();
    const int i = along_x ? x : y;
    if (n < 2) return 0.0;
    auto at = [&](int k) -> double { return along_x ? u.get(y, k) : u.get(k, x); };
    if (i == 0) return at(1) - at(0);
    if (i == n - 1) return at(n - 1) - at(n - 2);
    return 0.5 * (at(i + 1) - at(i - 1));
}

// Line elements of length 3 centered at the origin.
constexpr int kLines[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};

}  // namespace

SpeedField SpeedField::prepare(const ScalarField& g, double balloon_threshold) {
    if (g.channels() != 1) throw DomainError("speed field must be single-channel");
    SpeedField s;
    s.g = g;
    s.gx = ScalarField(g.width(), g.height(), 1);
    s.gy = ScalarField(g.width(), g.height(), 1);
    const auto v = g.values();
    for (int y = 0; y < g.height(); ++y) {
        for (int x = 0; x < g.width(); ++x) {
            s.gx.at(y, x) = diff_at(v, g.width(), 1, x, static_cast<std::size_t>(y) * g.width());
            s.gy.at(y, x) = diff_at(v, g.height(), g.width(), y, static_cast<std::size_t>(x));
        }
    }
    const double cutoff = balloon_threshold * (g.empty() ? 0.0 : g.max_value());
    s.balloon_region = BinaryMask(g.width(), g.height());
    auto bits = s.balloon_region.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = v[i] > cutoff ? 1 : 0;
    return s;
}

BinaryMask smooth_si(const BinaryMask& u) {
    BinaryMask out(u.width(), u.height());
    for (int y = 0; y < u.height(); ++y) {
        for (int x = 0; x < u.width(); ++x) {
            if (!u.get(y, x)) continue;
            bool any_line = false;
            for (const auto& d : kLines) {
                if (u.get_padded(y + d[1], x + d[0]) && u.get_padded(y - d[1], x - d[0])) {
                    any_line = true;
                    break;
                }
            }
            out.set(y, x, any_line);
        }
    }
    return out;
}

BinaryMask smooth_is(const BinaryMask& u) {
    BinaryMask out(u.width(), u.height());
    for (int y = 0; y < u.height(); ++y) {
        for (int x = 0; x < u.width(); ++x) {
            if (u.get(y, x)) {
                out.set(y, x, true);
                continue;
            }
            bool every_line = true;
            for (const auto& d : kLines) {
                if (!u.get_padded(y + d[1], x + d[0]) && !u.get_padded(y - d[1], x - d[0])) {
                    every_line = false;
                    break;
                }
            }
            out.set(y, x, every_line);
        }
    }
    return out;
}

BinaryMask curvature_pass(const BinaryMask& u, long pass_index) {
    return pass_index % 2 == 0 ? smooth_si(smooth_is(u)) : smooth_is(smooth_si(u));
}

EmbeddingState mgac_step(const EmbeddingState& state, const SpeedField& speed, const EvolutionParams& params) {
    const BinaryMask& u = state.u;
    if (u.width() != speed.g.width() || u.height() != speed.g.height()) {
        throw DomainError("mgac_step: g and u shapes differ");
    }
    BinaryMask res = u;

    if (params.c != 0.0) {
        const BinaryMask moved =
            params.c > 0 ? dilate(u, StructuringElement::cross3()) : erode(u, StructuringElement::cross3());
        auto r = res.bits();
        auto m = moved.bits();
        auto region = speed.balloon_region.bits();
        for (std::size_t i = 0; i < r.size(); ++i)
            if (region[i]) r[i] = m[i];
    }

    BinaryMask attracted = res;
    for (int y = 0; y < res.height(); ++y) {
        for (int x = 0; x < res.width(); ++x) {
            const double ux = mask_diff(res, y, x, true);
            const double uy = mask_diff(res, y, x, false);
            if (ux == 0.0 && uy == 0.0) continue;
            const double dot = speed.gx.at(y, x) * ux + speed.gy.at(y, x) * uy;
            if (dot > 0) {
                attracted.set(y, x, true);
            } else if (dot < 0) {
                attracted.set(y, x, false);
            }
        }
    }

    for (int i = 0; i < params.mu; ++i) {
        attracted = curvature_pass(attracted, static_cast<long>(state.step) * params.mu + i);
    }
    return {std::move(attracted), state.step + 1};
}

EmbeddingState mgac_step(const EmbeddingState& state, const ScalarField& g, const EvolutionParams& params) {
    return mgac_step(state, SpeedField::prepare(g, params.balloon_threshold), params);
}

Trajectory evolve(const BinaryMask& initial, const ScalarField& g, const EvolutionParams& params) {
    params.validate();
    if (!initial.any()) throw DomainError("evolve: initial mask is empty");
    const auto speed = SpeedField::prepare(g, params.balloon_threshold);

    Trajectory traj;
    auto snap = [&](const EmbeddingState& s) {
        traj.snapshots.push_back({s.step, s.u, mask_to_contours(s.u), std::nullopt});
    };

    EmbeddingState state{initial, 0};
    snap(state);
    int unchanged = 0;
    while (state.step < params.max_steps) {
        EmbeddingState next = mgac_step(state, speed, params);
        unchanged = next.u == state.u ? unchanged + 1 : 0;
        state = std::move(next);
        const bool collapsed = state.collapsed();
        const bool stop = unchanged >= 3 || collapsed;
        if (state.step % params.snapshot_every == 0 || stop || state.step == params.max_steps) {
            snap(state);
        }
        if (stop) {
            traj.early_stopped = unchanged >= 3;
            traj.collapsed = collapsed;
            break;
        }
    }
    traj.steps_run = state.step;
    return traj;
}

AlignResult active_align(const BinaryMask& gt_region, const ScalarField& pred, const EvolutionParams& params,
                         const LossWeights& weights) {
    if (!gt_region.any()) throw DomainError("active_align: empty ground-truth region");
    if (!std::isfinite(params.lambda)) {
        throw DomainError("active_align: lambda must be finite (skip alignment for lambda = inf)");
    }
    if (pred.channels() != 1 || pred.width() != gt_region.width() || pred.height() != gt_region.height()) {
        throw DomainError("active_align: prediction must be single-channel and match the region");
    }
    const auto y_term = smoothed_boundary_term(mask_to_boundary(gt_region), params.sigma_y);
    const auto g = compute_g(pred, y_term, params.lambda);

    AlignResult out;
    out.trajectory = evolve(gt_region, g, params);
    std::size_t best = 0;
    for (std::size_t i = 0; i < out.trajectory.snapshots.size(); ++i) {
        auto& s = out.trajectory.snapshots[i];
        const BinaryMask boundary = mask_to_boundary(s.mask);
        s.score = weighted_bce(pred, std::span<const BinaryMask>(&boundary, 1), weights).value;
        if (*s.score < *out.trajectory.snapshots[best].score) best = i;
    }
    const auto& chosen = out.trajectory.snapshots[best];
    out.region = chosen.mask;
    out.boundary = mask_to_boundary(chosen.mask);
    out.chosen_t = chosen.step;
    out.chosen_score = *chosen.score;
    out.initial_score = *out.trajectory.snapshots.front().score;
    return out;
}

void export_trajectory(const Trajectory& trajectory, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json index = nlohmann::json::array();
    for (const auto& s : trajectory.snapshots) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "step_%04d", s.step);
        const std::string mask_file = std::string(stem) + ".pgm";
        const std::string contour_file = std::string(stem) + ".json";
        io::write_mask(dir / mask_file, s.mask);
        nlohmann::json contours = nlohmann::json::array();
        for (const auto& p : s.contours) contours.push_back(io::polygon_to_json(p));
        io::write_file(dir / contour_file, contours.dump());
        nlohmann::json entry = {{"step", s.step}, {"mask", mask_file}, {"contour_file", contour_file}};
        entry["score"] = s.score ? nlohmann::json(*s.score) : nlohmann::json(nullptr);
        index.push_back(std::move(entry));
    }
    io::write_file(dir / "index.json", index.dump(2));
}

}  // namespace contourforge
