#pragma once

#include "contourforge/levelset.hpp"
#include "contourforge/raster.hpp"

#include <nlohmann/json.hpp>

namespace contourforge {

/// Ramer-Douglas-Peucker on a closed polygon: split at the two vertices
/// farthest apart, simplify both chains. Output vertices are a subset of
/// the input (order preserved, never fewer than 3); epsilon 0 is the identity.
Polygon simplify_polygon(const Polygon& poly, double epsilon);

/// Mean symmetric distance between the boundaries of two non-empty masks.
double boundary_error(const BinaryMask& a, const BinaryMask& b);

struct CoarseResult {
    BinaryMask coarse_mask;
    Polygon polygon;
    int clicks = 0;
    double achieved_error_px = 0.0;
    double epsilon = 0.0;
    double erosion_radius = 0.0;
    double iou_vs_fine = 0.0;

    nlohmann::json to_json() const;
};

/// Erode by a disc of radius ceil(target/2), polygonize the largest component
/// and binary-search the RDP tolerance in [0, 4 target] (12 rounds) for an
/// achieved boundary error near `target_err_px`. Among candidates within 20%
/// of the target the one with fewest clicks wins; otherwise the closest.
CoarseResult simulate_coarse(const BinaryMask& fine, double target_err_px);

/// Coarse-to-fine evolution (lambda 0, balloon c 1) driven by `pred`.
BinaryMask refine_coarse(const BinaryMask& coarse, const ScalarField& pred, int steps);
Trajectory refine_coarse(const BinaryMask& coarse, const ScalarField& pred, const EvolutionParams& params);

}  // namespace contourforge
