#pragma once

#include "contourforge/losses.hpp"
#include "contourforge/raster.hpp"

#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

namespace contourforge {

struct EvolutionParams {
    /// Weight of the ground-truth term in g; +infinity means alignment is disabled.
    double lambda = 1.0;
    /// Balloon velocity sign: > 0 dilates, < 0 erodes, 0 disables.
    double c = 0.0;
    /// Curvature smoothing passes per step.
    int mu = 1;
    int max_steps = 50;
    int snapshot_every = 5;
    /// Balloon acts where g > balloon_threshold * max(g).
    double balloon_threshold = 0.3;
    /// Gaussian sigma applied to the binary GT boundary before it enters g.
    double sigma_y = 1.0;

    void validate() const;

    static EvolutionParams alignment_defaults();
    static EvolutionParams coarse_to_fine_defaults();

    static EvolutionParams from_json(const nlohmann::json& j, EvolutionParams defaults);
    nlohmann::json to_json() const;
};

/// Binary embedding: true = inside (the phi < 0 region).
struct EmbeddingState {
    BinaryMask u;
    int step = 0;

    bool collapsed() const { return !u.any(); }
    bool full() const { return u.count() == u.size(); }
};

struct Snapshot {
    int step = 0;
    BinaryMask mask;
    std::vector<Polygon> contours;
    std::optional<double> score;
};

struct Trajectory {
    std::vector<Snapshot> snapshots;
    int steps_run = 0;
    bool early_stopped = false;
    bool collapsed = false;

    const Snapshot& final_snapshot() const { return snapshots.back(); }
};

/// g = 1/sqrt(1+f) + lambda/sqrt(1+y). Throws for lambda < 0 or non-finite
/// lambda (an infinite lambda means the caller skips alignment).
ScalarField compute_g(const ScalarField& pred, const ScalarField& gt_boundary, double lambda);

/// Binary boundary smoothed with sigma_y and rescaled to max 1 (all-zero stays zero).
ScalarField smoothed_boundary_term(const BinaryMask& boundary, double sigma_y);

/// g with its central-difference gradient and balloon region, reusable across steps.
struct SpeedField {
    ScalarField g;
    ScalarField gx;
    ScalarField gy;
    BinaryMask balloon_region;

    static SpeedField prepare(const ScalarField& g, double balloon_threshold);
};

// Curvature operators on binary masks (line elements of length 3 through
// each pixel: horizontal, vertical and both diagonals; background padded).
BinaryMask smooth_si(const BinaryMask& u);
BinaryMask smooth_is(const BinaryMask& u);
/// Curvature pass number `pass_index`: even -> SI(IS(u)), odd -> IS(SI(u)).
BinaryMask curvature_pass(const BinaryMask& u, long pass_index);

/// One morphological geodesic-active-contour step: balloon, attraction
/// (sign of grad g . grad u), then mu curvature passes. Smoothing passes
/// alternate globally, pass index = step * mu + i.
EmbeddingState mgac_step(const EmbeddingState& state, const SpeedField& speed, const EvolutionParams& params);
EmbeddingState mgac_step(const EmbeddingState& state, const ScalarField& g, const EvolutionParams& params);

/// Runs up to max_steps steps, snapshotting step 0, every snapshot_every
/// steps, and the final step. Stops early once u is unchanged for 3
/// consecutive steps, or when the embedding collapses to empty.
Trajectory evolve(const BinaryMask& initial, const ScalarField& g, const EvolutionParams& params);

struct AlignResult {
    BinaryMask region;
    BinaryMask boundary;
    int chosen_t = 0;
    double chosen_score = 0.0;
    double initial_score = 0.0;
    Trajectory trajectory;
};

/// Evolves the ground-truth region toward confident prediction ridges and
/// keeps the snapshot with the lowest weighted BCE against `pred`
/// (ties go to the earlier step).
AlignResult active_align(const BinaryMask& gt_region, const ScalarField& pred, const EvolutionParams& params,
                         const LossWeights& weights);

/// Writes step_NNNN.pgm masks, step_NNNN.json contours and index.json.
void export_trajectory(const Trajectory& trajectory, const std::filesystem::path& dir);

}  // namespace contourforge
