#pragma once

#include "contourforge/normals.hpp"
#include "contourforge/raster.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace contourforge {

/// Test-time thinning: keeps f(p) where f(p) >= the bilinear samples at
/// p +- (cos a, sin a), zero elsewhere. Samples outside the image are ignored;
/// pixels without a valid normal are kept.
ScalarField nms_thin(const ScalarField& pred, const NormalField& normals);

struct MatchCounts {
    std::size_t matched = 0;
    std::size_t pred_total = 0;
    std::size_t gt_total = 0;
};

/// Maximum-cardinality bipartite matching (Hopcroft-Karp) between true pixels
/// of `pred` and `gt`, with edges where Euclidean distance <= d_max.
MatchCounts match_boundaries(const BinaryMask& pred, const BinaryMask& gt, double d_max);

/// |a & b| / |a | b|; 1 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

struct MatchParams {
    double tolerance_fraction = 0.0075;
    bool thin_predictions = false;
    int thresholds = 99;
    double normal_sigma = kDefaultNormalSigma;
    unsigned threads = 1;

    void validate() const;
};

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
};

struct ClassEval {
    int class_index = 0;
    std::vector<PrPoint> pr;
    std::size_t gt_pixels = 0;
    /// Undefined (nullopt) when the class has no ground-truth boundary anywhere.
    std::optional<double> mf_ods;
    std::optional<double> ods_threshold;
    std::optional<double> ap;
};

struct EvalResult {
    std::vector<ClassEval> classes;
    double mean_mf_ods = 0.0;
    double mean_ap = 0.0;
    std::vector<int> excluded_classes;
    MatchParams params;

    nlohmann::json to_json() const;
    std::string pr_csv() const;
};

/// Threshold i of n: i / (n + 1), i = 1..n; a pixel is predicted when value >= threshold.
std::vector<double> threshold_grid(int n);

/// Area under the interpolated (non-increasing) PR curve starting at recall 0.
double average_precision(const std::vector<PrPoint>& pr);

/// preds[i] holds K channels for image i; gts[i][k] is the class-k boundary.
EvalResult evaluate_dataset(const std::vector<ScalarField>& preds, const std::vector<std::vector<BinaryMask>>& gts,
                            const MatchParams& params);

}  // namespace contourforge
