#include "contourforge/normals.hpp"

#include "contourforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace contourforge {

std::size_t NormalField::valid_count() const noexcept {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

namespace {

struct Tap {
    int dx;
    int dy;
    double w;
};

constexpr Tap kDxx[] = {{-1, 0, 1.0}, {0, 0, -2.0}, {1, 0, 1.0}};
constexpr Tap kDyy[] = {{0, -1, 1.0}, {0, 0, -2.0}, {0, 1, 1.0}};
constexpr Tap kDxy[] = {{1, 1, 0.25}, {-1, 1, -0.25}, {1, -1, -0.25}, {-1, -1, 0.25}};

template <std::size_t N>
void apply_stencil(const ScalarField& in, ScalarField& out, const Tap (&taps)[N]) {
    const int w = in.width();
    const int h = in.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (const auto& t : taps) {
                acc += t.w * in.at(std::clamp(y + t.dy, 0, h - 1), std::clamp(x + t.dx, 0, w - 1));
            }
            out.at(y, x) = acc;
        }
    }
}

template <std::size_t N>
void scatter_stencil(const ScalarField& grad, ScalarField& acc, const Tap (&taps)[N]) {
    const int w = grad.width();
    const int h = grad.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double g = grad.at(y, x);
            if (g == 0.0) continue;
            for (const auto& t : taps) {
                acc.at(std::clamp(y + t.dy, 0, h - 1), std::clamp(x + t.dx, 0, w - 1)) += t.w * g;
            }
        }
    }
}

constexpr double kIsotropicEps = 1e-12;

}  // namespace

Hessian hessian(const ScalarField& field, double sigma) {
    if (field.channels() != 1) throw DomainError("hessian: single-channel input required");
    Hessian hs;
    hs.smoothed = gaussian_smooth(field, sigma);
    hs.fxx = ScalarField(field.width(), field.height(), 1);
    hs.fyy = ScalarField(field.width(), field.height(), 1);
    hs.fxy = ScalarField(field.width(), field.height(), 1);
    apply_stencil(hs.smoothed, hs.fxx, kDxx);
    apply_stencil(hs.smoothed, hs.fyy, kDyy);
    apply_stencil(hs.smoothed, hs.fxy, kDxy);
    return hs;
}

ScalarField hessian_transpose(const ScalarField& d_fxx, const ScalarField& d_fyy,
                              const ScalarField& d_fxy, double sigma) {
    ScalarField d_smoothed(d_fxx.width(), d_fxx.height(), 1);
    scatter_stencil(d_fxx, d_smoothed, kDxx);
    scatter_stencil(d_fyy, d_smoothed, kDyy);
    scatter_stencil(d_fxy, d_smoothed, kDxy);
    return gaussian_smooth_transpose(d_smoothed, sigma);
}

double wrap_angle_pi(double a) noexcept {
    double r = std::fmod(a, std::numbers::pi);
    if (r < 0) r += std::numbers::pi;
    if (r >= std::numbers::pi) r = 0.0;
    return r;
}

HessianAngle hessian_normal_angle(double fxx, double fyy, double fxy) noexcept {
    // Principal axis of the larger eigenvalue is 0.5 * atan2(2 fxy, fxx - fyy);
    // the larger-magnitude eigenvalue is the smaller one when the trace is negative.
    const double X = fxx - fyy;
    const double Y = 2.0 * fxy;
    const double r2 = X * X + Y * Y;
    HessianAngle out;
    if (std::sqrt(r2) < kIsotropicEps) return out;
    double theta = 0.5 * std::atan2(Y, X);
    if (fxx + fyy < 0) theta += 0.5 * std::numbers::pi;
    out.valid = true;
    out.angle = wrap_angle_pi(theta);
    const double d_dx = -0.5 * Y / r2;
    const double d_dy = 0.5 * X / r2;
    out.d_fxx = d_dx;
    out.d_fyy = -d_dx;
    out.d_fxy = 2.0 * d_dy;
    return out;
}

NormalField estimate_normals(const ScalarField& boundary, double sigma) {
    if (boundary.channels() != 1) {
        throw DomainError("estimate_normals: multi-channel input; call per class");
    }
    const auto hs = hessian(boundary, sigma);
    NormalField nf(boundary.width(), boundary.height());
    for (int y = 0; y < boundary.height(); ++y) {
        for (int x = 0; x < boundary.width(); ++x) {
            if (!(hs.smoothed.at(y, x) > kNormalSupportThreshold)) continue;
            const auto a = hessian_normal_angle(hs.fxx.at(y, x), hs.fyy.at(y, x), hs.fxy.at(y, x));
            if (!a.valid) continue;
            nf.angle[nf.index(y, x)] = a.angle;
            nf.valid[nf.index(y, x)] = 1;
        }
    }
    return nf;
}

double angular_difference(double a, double b) noexcept {
    const double d = wrap_angle_pi(a - b);
    return std::min(d, std::numbers::pi - d);
}

ScalarField encode_normals(const NormalField& normals) {
    ScalarField out(normals.width, normals.height, 2);
    for (int y = 0; y < normals.height; ++y) {
        for (int x = 0; x < normals.width; ++x) {
            if (!normals.is_valid(y, x)) continue;
            const double t = normals.at(y, x);
            out.at(0, y, x) = std::cos(2 * t);
            out.at(1, y, x) = std::sin(2 * t);
        }
    }
    return out;
}

NormalField decode_normals(const ScalarField& encoded) {
    if (encoded.channels() != 2) throw DomainError("normal encoding must have 2 channels");
    NormalField nf(encoded.width(), encoded.height());
    for (int y = 0; y < encoded.height(); ++y) {
        for (int x = 0; x < encoded.width(); ++x) {
            const double c = encoded.at(0, y, x);
            const double s = encoded.at(1, y, x);
            if (c == 0.0 && s == 0.0) continue;
            nf.angle[nf.index(y, x)] = wrap_angle_pi(0.5 * std::atan2(s, c));
            nf.valid[nf.index(y, x)] = 1;
        }
    }
    return nf;
}

}  // namespace contourforge
