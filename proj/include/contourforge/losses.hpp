#pragma once

#include "contourforge/normals.hpp"
#include "contourforge/raster.hpp"

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace contourforge {

struct LossWeights {
    double alpha1 = 1.0;
    double alpha2 = 10.0;
    double alpha3 = 1.0;
    /// Softmax temperature of the thinning layer.
    double tau = 0.1;
    /// Samples per side along the normal.
    int L = 2;
    /// Fixed class-balance weight; nullopt selects |Y-|/|Y| per call.
    std::optional<double> beta;
    double normal_sigma = kDefaultNormalSigma;

    /// Throws DomainError when tau <= 0, L < 1, any alpha < 0, all alphas zero,
    /// or a fixed beta outside [0, 1].
    void validate() const;

    static LossWeights from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Ground-truth boundaries per class with their cached normals.
struct GroundTruth {
    std::vector<BinaryMask> boundaries;
    std::vector<NormalField> normals;

    static GroundTruth from_boundaries(std::vector<BinaryMask> boundaries,
                                       double sigma = kDefaultNormalSigma);
    int classes() const noexcept { return static_cast<int>(boundaries.size()); }
};

/// One loss term. `gradient` is with respect to the pre-sigmoid logits, even
/// though the term is evaluated on probabilities f (d/dz = f (1 - f) d/df).
struct LossTerm {
    double value = 0.0;
    ScalarField gradient;
    std::size_t terms = 0;    ///< pixels that contributed
    std::size_t skipped = 0;  ///< boundary pixels dropped (line left the image, invalid normal)
    double beta = 0.0;        ///< BCE only: the class-balance weight used

    double mean() const noexcept { return terms ? value / static_cast<double>(terms) : 0.0; }
};

struct LossBreakdown {
    double bce = 0.0;
    double nms = 0.0;
    double dir = 0.0;
    double total = 0.0;
    ScalarField gradient;

    double beta = 0.0;
    std::size_t nms_pixels = 0;
    std::size_t nms_skipped = 0;
    std::size_t dir_pixels = 0;
    std::size_t dir_skipped = 0;
    double nms_mean = 0.0;
    double dir_mean = 0.0;
    /// True when no boundary pixel was eligible for the NMS term.
    bool nms_empty = false;

    nlohmann::json to_json() const;
};

/// Sample points p_t = p + t (cos a, sin a), t = -L..L, with bilinear taps.
struct SampleLine {
    int x = 0;
    int y = 0;
    double angle = 0.0;
    std::vector<Point2> points;
    std::vector<BilinearSample> samples;

    std::vector<double> values() const;
};

/// nullopt when any sample point leaves the image.
std::optional<SampleLine> sample_line(const ScalarField& field, int channel, int x, int y, double angle,
                                      int L);

/// Softmax over the line samples divided by tau. Throws DomainError when the
/// normal at p is invalid; nullopt when the line leaves the image.
std::optional<std::vector<double>> nms_response(const ScalarField& probs, int channel,
                                                const NormalField& gt_normals, int x, int y,
                                                const LossWeights& weights);

/// |Y-| / |Y| over all classes.
double auto_beta(std::span<const BinaryMask> gt);

LossTerm weighted_bce(const ScalarField& probs, std::span<const BinaryMask> gt, const LossWeights& weights);

LossTerm nms_loss(const ScalarField& probs, std::span<const BinaryMask> gt_boundaries,
                  std::span<const NormalField> gt_normals, const LossWeights& weights);

/// Angular error between ground-truth normals and normals estimated from the
/// prediction, summed over valid positive boundary pixels.
LossTerm direction_loss(const ScalarField& probs, std::span<const BinaryMask> gt_boundaries,
                        std::span<const NormalField> gt_normals, const LossWeights& weights);

/// Same angular error given both normal fields directly (no gradient).
double direction_loss_from_normals(const NormalField& gt, const NormalField& pred, const BinaryMask& pixels);

LossBreakdown total_loss(const ScalarField& logits, const GroundTruth& gt, const LossWeights& weights);

}  // namespace contourforge
