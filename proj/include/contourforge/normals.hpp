#pragma once

#include "contourforge/raster.hpp"

#include <cstdint>
#include <vector>

namespace contourforge {

inline constexpr double kDefaultNormalSigma = 1.5;
inline constexpr double kNormalSupportThreshold = 1e-3;

/// Unoriented boundary normals: angle in [0, pi) plus a per-pixel validity flag.
struct NormalField {
    int width = 0;
    int height = 0;
    std::vector<double> angle;
    std::vector<std::uint8_t> valid;

    NormalField() = default;
    NormalField(int w, int h)
        : width(w), height(h), angle(static_cast<std::size_t>(w) * h, 0.0),
          valid(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t index(int y, int x) const noexcept { return static_cast<std::size_t>(y) * width + x; }
    bool is_valid(int y, int x) const { return valid[index(y, x)] != 0; }
    double at(int y, int x) const { return angle[index(y, x)]; }
    std::size_t valid_count() const noexcept;
};

/// Smoothed field and its second derivatives (central differences on the
/// Gaussian-smoothed input, edge replication).
struct Hessian {
    ScalarField smoothed;
    ScalarField fxx;
    ScalarField fyy;
    ScalarField fxy;
};

Hessian hessian(const ScalarField& field, double sigma);

/// Adjoint of hessian(): given d/d(fxx, fyy, fxy), returns d/d(input).
ScalarField hessian_transpose(const ScalarField& d_fxx, const ScalarField& d_fyy,
                              const ScalarField& d_fxy, double sigma);

/// Orientation of the Hessian eigenvector with the largest-magnitude
/// eigenvalue, reduced mod pi, with its partial derivatives. `valid` is false
/// for an isotropic Hessian (no preferred direction).
struct HessianAngle {
    bool valid = false;
    double angle = 0.0;
    double d_fxx = 0.0;
    double d_fyy = 0.0;
    double d_fxy = 0.0;
};
HessianAngle hessian_normal_angle(double fxx, double fyy, double fxy) noexcept;

/// Per-pixel normals of a single-channel boundary map. Valid where the
/// smoothed response exceeds 1e-3 and the Hessian is not isotropic.
NormalField estimate_normals(const ScalarField& boundary, double sigma = kDefaultNormalSigma);

/// Difference between two unoriented directions, in [0, pi/2].
double angular_difference(double a, double b) noexcept;

/// Reduce an angle into [0, pi).
double wrap_angle_pi(double a) noexcept;

/// Two-channel (cos 2t, sin 2t) encoding; invalid pixels are (0, 0).
ScalarField encode_normals(const NormalField& normals);
NormalField decode_normals(const ScalarField& encoded);

}  // namespace contourforge
