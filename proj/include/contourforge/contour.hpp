#pragma once

#include "contourforge/raster.hpp"

#include <vector>

namespace contourforge {

/// Border following over 8-connected foreground. Produces one closed polygon
/// per outer border and one per hole border. Vertices are pixel centers of
/// border pixels. Outer borders have positive signed_area(), holes negative.
///
/// Components too thin to enclose area with three distinct centers (single
/// pixels, two-pixel pairs) are emitted as a small diamond around the pixel
/// centers so every polygon satisfies the closed-polygon invariants.
std::vector<Polygon> mask_to_contours(const BinaryMask& mask);

/// Even-odd fill sampled at pixel centers. Centers lying exactly on an edge
/// count as inside, so the square (2,2)-(8,2)-(8,8)-(2,8) covers 7x7 pixels.
/// Throws DomainError for open or degenerate polygons.
BinaryMask polygon_to_mask(const Polygon& poly, int width, int height);

/// Rebuilds a mask from mask_to_contours output: outer polygons paint
/// inside-or-on pixels, holes clear strictly-inside pixels, largest area first.
BinaryMask contours_to_mask(const std::vector<Polygon>& contours, int width, int height);

/// Mean distance of polygon vertices from `center` (radial profile helper).
double mean_radius(const Polygon& poly, Point2 center);

}  // namespace contourforge
