#include "contourforge/raster.hpp"

#include "contourforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace contourforge {

ScalarField::ScalarField(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
        throw DomainError("ScalarField: invalid shape");
    }
    values_.assign(plane_size() * static_cast<std::size_t>(channels), fill);
}

ScalarField::ScalarField(int width, int height, int channels, std::vector<double> values)
    : width_(width), height_(height), channels_(channels), values_(std::move(values)) {
    if (width < 0 || height < 0 || channels < 1 ||
        values_.size() != plane_size() * static_cast<std::size_t>(channels)) {
        throw DomainError("ScalarField: value count does not match shape");
    }
}

std::span<double> ScalarField::plane(int c) {
    return std::span<double>(values_).subspan(static_cast<std::size_t>(c) * plane_size(),
                                              plane_size());
}

std::span<const double> ScalarField::plane(int c) const {
    return std::span<const double>(values_).subspan(static_cast<std::size_t>(c) * plane_size(),
                                                    plane_size());
}

ScalarField ScalarField::channel(int c) const {
    if (c < 0 || c >= channels_) throw DomainError("channel index out of range");
    auto p = plane(c);
    return ScalarField(width_, height_, 1, std::vector<double>(p.begin(), p.end()));
}

bool ScalarField::same_shape(const ScalarField& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
}

bool ScalarField::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double ScalarField::max_value() const {
    if (values_.empty()) throw DomainError("max of empty field");
    return *std::max_element(values_.begin(), values_.end());
}

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw DomainError("BinaryMask: invalid shape");
    bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

ScalarField BinaryMask::to_field() const {
    std::vector<double> v(bits_.begin(), bits_.end());
    return ScalarField(width_, height_, 1, std::move(v));
}

BinaryMask BinaryMask::complement() const {
    BinaryMask out = *this;
    for (auto& b : out.bits_) b = b ? 0 : 1;
    return out;
}

namespace {
void require_same(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw DomainError("mask shape mismatch");
}
}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    require_same(a, b);
    BinaryMask out(a.width(), a.height());
    auto o = out.bits();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.bits()[i] & b.bits()[i];
    return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
    require_same(a, b);
    BinaryMask out(a.width(), a.height());
    auto o = out.bits();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a.bits()[i] | b.bits()[i];
    return out;
}

BinaryMask threshold(const ScalarField& field, double level, int channel) {
    BinaryMask out(field.width(), field.height());
    auto p = field.plane(channel);
    auto o = out.bits();
    for (std::size_t i = 0; i < p.size(); ++i) o[i] = p[i] >= level ? 1 : 0;
    return out;
}

double Polygon::signed_area() const {
    const std::size_t n = vertices.size();
    if (n < 3) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = vertices[i];
        const auto& b = vertices[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return 0.5 * acc;
}

double Polygon::perimeter() const {
    const std::size_t n = vertices.size();
    if (n < 2) return 0.0;
    double len = 0.0;
    const std::size_t edges = closed ? n : n - 1;
    for (std::size_t i = 0; i < edges; ++i) {
        const auto& a = vertices[i];
        const auto& b = vertices[(i + 1) % n];
        len += std::hypot(b.x - a.x, b.y - a.y);
    }
    return len;
}

void validate_polygon(const Polygon& poly) {
    if (!poly.closed) throw DomainError("polygon must be closed");
    if (poly.vertices.size() < 3) throw DomainError("degenerate polygon: fewer than 3 vertices");
    const std::size_t n = poly.vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = poly.vertices[i];
        if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
            throw DomainError("polygon vertex is not finite");
        }
        if (v == poly.vertices[(i + 1) % n]) {
            throw DomainError("degenerate polygon: consecutive identical vertices");
        }
    }
}

StructuringElement StructuringElement::disc(int radius) {
    if (radius < 1) throw DomainError("disc radius must be >= 1");
    return {SeShape::Disc, radius};
}

std::vector<std::array<int, 2>> StructuringElement::offsets() const {
    std::vector<std::array<int, 2>> out;
    switch (shape) {
        case SeShape::Cross3:
            out = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
            break;
        case SeShape::Square3:
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) out.push_back({dx, dy});
            break;
        case SeShape::Disc: {
            if (radius < 1) throw DomainError("disc radius must be >= 1");
            const int r2 = radius * radius;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    if (dx * dx + dy * dy <= r2) out.push_back({dx, dy});
            break;
        }
    }
    return out;
}

BilinearSample bilinear_sample(const ScalarField& field, int channel, double x, double y) {
    if (!sample_in_domain(field, x, y) || !std::isfinite(x) || !std::isfinite(y)) {
        throw DomainError("bilinear_sample: coordinate (" + std::to_string(x) + ", " +
                          std::to_string(y) + ") outside image");
    }
    if (channel < 0 || channel >= field.channels()) {
        throw DomainError("bilinear_sample: channel out of range");
    }
    const int x0 = std::min(static_cast<int>(std::floor(x)), field.width() - 1);
    const int y0 = std::min(static_cast<int>(std::floor(y)), field.height() - 1);
    const int x1 = std::min(x0 + 1, field.width() - 1);
    const int y1 = std::min(y0 + 1, field.height() - 1);
    const double fx = x - x0;
    const double fy = y - y0;

    BilinearSample s;
    s.taps = {BilinearTap{x0, y0, (1 - fx) * (1 - fy)}, BilinearTap{x1, y0, fx * (1 - fy)},
              BilinearTap{x0, y1, (1 - fx) * fy}, BilinearTap{x1, y1, fx * fy}};
    for (const auto& t : s.taps) s.value += t.weight * field.at(channel, t.y, t.x);
    return s;
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma >= 0.0)) throw DomainError("gaussian sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    const double sum = std::accumulate(k.begin(), k.end(), 0.0);
    for (auto& v : k) v /= sum;
    return k;
}

namespace {

// One separable pass with edge replication. `transpose` scatters instead of
// gathering, which is the adjoint of the forward pass.
void blur_pass(std::span<const double> in, std::span<double> out, int w, int h,
               const std::vector<double>& k, bool horizontal, bool transpose) {
    const int r = static_cast<int>(k.size() / 2);
    std::fill(out.begin(), out.end(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) {
                const int sx = horizontal ? std::clamp(x + t, 0, w - 1) : x;
                const int sy = horizontal ? y : std::clamp(y + t, 0, h - 1);
                const std::size_t j = static_cast<std::size_t>(sy) * w + sx;
                if (transpose) {
                    out[j] += k[t + r] * in[i];
                } else {
                    acc += k[t + r] * in[j];
                }
            }
            if (!transpose) out[i] = acc;
        }
    }
}

ScalarField smooth_impl(const ScalarField& field, double sigma, bool transpose) {
    const auto k = gaussian_kernel(sigma);
    if (k.size() == 1) return field;
    ScalarField out(field.width(), field.height(), field.channels());
    std::vector<double> tmp(field.plane_size());
    for (int c = 0; c < field.channels(); ++c) {
        if (!transpose) {
            blur_pass(field.plane(c), tmp, field.width(), field.height(), k, true, false);
            blur_pass(tmp, out.plane(c), field.width(), field.height(), k, false, false);
        } else {
            blur_pass(field.plane(c), tmp, field.width(), field.height(), k, false, true);
            blur_pass(tmp, out.plane(c), field.width(), field.height(), k, true, true);
        }
    }
    return out;
}

}  // namespace

ScalarField gaussian_smooth(const ScalarField& field, double sigma) {
    return smooth_impl(field, sigma, false);
}

ScalarField gaussian_smooth_transpose(const ScalarField& grad_out, double sigma) {
    return smooth_impl(grad_out, sigma, true);
}

double sigmoid(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

ScalarField sigmoid(const ScalarField& logits) {
    ScalarField out = logits;
    for (auto& v : out.values()) v = sigmoid(v);
    return out;
}

}  // namespace contourforge
