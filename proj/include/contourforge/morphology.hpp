#pragma once

#include "contourforge/raster.hpp"

#include <vector>

namespace contourforge {

// Binary morphology. Pixels outside the image are background for both
// dilation and erosion, so masks never stick to the frame.

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se);

/// Pixels of `mask` with at least one false 4-neighbor (the image border counts as false).
BinaryMask mask_to_boundary(const BinaryMask& mask);

/// Exact Euclidean distance from every pixel to the nearest true pixel.
/// Throws DomainError("no foreground") for an empty mask.
ScalarField distance_transform(const BinaryMask& mask);

/// 8-connected component labels (0 = background, 1..n = components) and n.
struct ComponentLabels {
    std::vector<int> labels;
    int count = 0;
};
ComponentLabels label_components(const BinaryMask& mask);

/// The largest 8-connected component (first in raster order on ties); empty input gives empty output.
BinaryMask largest_component(const BinaryMask& mask);

}  // namespace contourforge
