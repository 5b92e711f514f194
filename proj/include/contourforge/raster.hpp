#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace contourforge {

/// H x W x K real raster. Storage is channel-major, then row-major.
class ScalarField {
public:
    ScalarField() = default;
    ScalarField(int width, int height, int channels = 1, double fill = 0.0);
    ScalarField(int width, int height, int channels, std::vector<double> values);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double& at(int c, int y, int x) { return values_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return values_[index(c, y, x)]; }
    double& at(int y, int x) { return values_[index(0, y, x)]; }
    double at(int y, int x) const { return values_[index(0, y, x)]; }

    std::span<double> plane(int c);
    std::span<const double> plane(int c) const;
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    /// Single-channel copy of channel `c`.
    ScalarField channel(int c) const;
    bool same_shape(const ScalarField& other) const noexcept;
    bool all_finite() const noexcept;
    double max_value() const;

    friend bool operator==(const ScalarField&, const ScalarField&) = default;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> values_;
};

/// H x W boolean raster, row-major.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool get(int y, int x) const { return bits_[index(y, x)] != 0; }
    void set(int y, int x, bool v) { bits_[index(y, x)] = v ? 1 : 0; }
    /// Out-of-image reads return false (background padding).
    bool get_padded(int y, int x) const {
        return x >= 0 && y >= 0 && x < width_ && y < height_ && get(y, x);
    }
    bool in_bounds(int y, int x) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    std::span<const std::uint8_t> bits() const noexcept { return bits_; }
    std::span<std::uint8_t> bits() noexcept { return bits_; }

    std::size_t count() const noexcept;
    bool any() const noexcept { return count() > 0; }
    bool same_shape(const BinaryMask& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }
    ScalarField to_field() const;
    BinaryMask complement() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t index(int y, int x) const noexcept {
        return static_cast<std::size_t>(y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
/// Pixels with value >= threshold.
BinaryMask threshold(const ScalarField& field, double level, int channel = 0);

/// Pixel-center convention: (0,0) is the center of the top-left pixel.
struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

struct Polygon {
    std::vector<Point2> vertices;
    bool closed = true;

    std::size_t size() const noexcept { return vertices.size(); }
    /// Shoelace area, positive for outer contours produced by mask_to_contours.
    double signed_area() const;
    double perimeter() const;
};

/// Throws DomainError when the closed-polygon invariants do not hold.
void validate_polygon(const Polygon& poly);

enum class SeShape { Disc, Cross3, Square3 };

struct StructuringElement {
    SeShape shape = SeShape::Cross3;
    int radius = 1;

    static StructuringElement disc(int radius);
    static StructuringElement cross3() { return {SeShape::Cross3, 1}; }
    static StructuringElement square3() { return {SeShape::Square3, 1}; }

    /// (dx, dy) offsets covered by the element, origin included.
    std::vector<std::array<int, 2>> offsets() const;
};

struct BilinearTap {
    int x = 0;
    int y = 0;
    double weight = 0.0;
};

struct BilinearSample {
    double value = 0.0;
    std::array<BilinearTap, 4> taps{};
};

/// Bilinear interpolation inside [0, w-1] x [0, h-1]; throws DomainError
/// outside. The taps expose the four (pixel, weight) pairs so callers can
/// route gradients back to the grid.
BilinearSample bilinear_sample(const ScalarField& field, int channel, double x, double y);

/// True when (x, y) lies inside the bilinear sampling domain.
inline bool sample_in_domain(const ScalarField& field, double x, double y) noexcept {
    return x >= 0.0 && y >= 0.0 && x <= field.width() - 1 && y <= field.height() - 1;
}

/// Normalized 1-D Gaussian taps for offsets -r..r, r = ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian blur per channel with edge replication.
ScalarField gaussian_smooth(const ScalarField& field, double sigma);

/// Adjoint of gaussian_smooth (same sigma): maps d(out) to d(in).
ScalarField gaussian_smooth_transpose(const ScalarField& grad_out, double sigma);

double sigmoid(double z) noexcept;
double logit(double p) noexcept;
ScalarField sigmoid(const ScalarField& logits);

}  // namespace contourforge
