#pragma once

#include "contourforge/levelset.hpp"
#include "contourforge/losses.hpp"
#include "contourforge/normals.hpp"
#include "contourforge/raster.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace contourforge {

struct BetaScheduleEntry {
    int iteration = 0;
    double beta = 0.0;
};

struct TrainConfig {
    int iterations = 500;
    double learning_rate = 0.5;
    LossWeights weights;
    /// Ground truth stays fixed before this iteration (alignment off).
    int align_warmup = 100;
    int align_every = 50;
    bool align = true;
    EvolutionParams evolution = EvolutionParams::alignment_defaults();
    /// From each entry's iteration on, beta is fixed to its value.
    std::vector<BetaScheduleEntry> beta_schedule;
    std::uint64_t seed = 0;

    void validate() const;
    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct AlignmentEvent {
    int iteration = 0;
    int chosen_t = 0;
    double initial_score = 0.0;
    double chosen_score = 0.0;
    bool accepted = true;
    std::optional<double> error_before;
    std::optional<double> error_after;
};

struct IterationLoss {
    double bce = 0.0;
    double nms = 0.0;
    double dir = 0.0;
    double total = 0.0;
    double beta = 0.0;
};

struct TrainReport {
    std::vector<IterationLoss> loss_curve;
    std::vector<AlignmentEvent> alignments;
    ScalarField final_logits;
    BinaryMask final_region;
    std::optional<double> initial_boundary_error;
    std::optional<double> final_boundary_error;

    nlohmann::json to_json() const;
};

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int iteration, double total);
    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

/// Gradient descent on a free logit field with periodic active alignment of
/// the working ground-truth region.
TrainReport train(const ScalarField& initial_logits, const BinaryMask& noisy_gt_region, const TrainConfig& config,
                  const std::optional<BinaryMask>& true_reference = std::nullopt);

/// Mean prediction along GT normals at offsets -L..L over valid boundary pixels
/// whose sample line stays inside the image.
std::vector<double> sharpness_profile(const ScalarField& pred, const BinaryMask& gt_boundary,
                                      const NormalField& normals, int L = 2);

/// profile[L] / mean(profile[L-1], profile[L+1]).
double sharpness_ratio(const std::vector<double>& profile);

/// Synthetic circle task: true disc, a concentric noisy disc and initial
/// logits from the blurred true boundary (a stand-in for a pretrained model).
struct CircleTask {
    int size = 64;
    double true_radius = 10.0;
    double noisy_radius = 8.0;
    double blur_sigma = 2.0;
    /// Std-dev of Gaussian noise added to the initial logits (drawn from seed).
    double init_noise = 0.0;

    BinaryMask true_region() const;
    BinaryMask noisy_region() const;
    /// Blurred true boundary rescaled to max 1.
    ScalarField blurred_truth() const;
    ScalarField initial_logits(std::uint64_t seed) const;

    static CircleTask from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

BinaryMask disc_mask(int width, int height, double cx, double cy, double radius);

}  // namespace contourforge
