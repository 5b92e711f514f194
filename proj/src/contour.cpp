#include "contourforge/contour.hpp"

#include "contourforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace contourforge {

namespace {

// Clockwise on screen (y grows downward): E, SE, S, SW, W, NW, N, NE.
constexpr int kDi[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kDj[8] = {1, 1, 0, -1, -1, -1, 0, 1};

int direction_of(int di, int dj) {
    for (int d = 0; d < 8; ++d)
        if (kDi[d] == di && kDj[d] == dj) return d;
    return -1;
}

struct Cell {
    int i = 0;
    int j = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

Polygon fallback_diamond(const std::vector<Cell>& cells) {
    constexpr double r = 0.25;
    Polygon p;
    const Point2 a{static_cast<double>(cells[0].j - 1), static_cast<double>(cells[0].i - 1)};
    if (cells.size() == 1) {
        p.vertices = {{a.x + r, a.y}, {a.x, a.y + r}, {a.x - r, a.y}, {a.x, a.y - r}};
        return p;
    }
    const Point2 b{static_cast<double>(cells[1].j - 1), static_cast<double>(cells[1].i - 1)};
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const double nx = -(b.y - a.y) / len * r;
    const double ny = (b.x - a.x) / len * r;
    const Point2 mid{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
    p.vertices = {a, {mid.x + nx, mid.y + ny}, b, {mid.x - nx, mid.y - ny}};
    return p;
}

}  // namespace

std::vector<Polygon> mask_to_contours(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    const int pw = w + 2;
    std::vector<int> f(static_cast<std::size_t>(pw) * (h + 2), 0);
    auto at = [&](int i, int j) -> int& { return f[static_cast<std::size_t>(i) * pw + j]; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) at(y + 1, x + 1) = mask.get(y, x) ? 1 : 0;

    std::vector<Polygon> out;
    int nbd = 1;
    for (int i = 1; i <= h; ++i) {
        for (int j = 1; j <= w; ++j) {
            const int fij = at(i, j);
            if (fij == 0) continue;
            const bool outer = fij == 1 && at(i, j - 1) == 0;
            const bool hole = !outer && fij >= 1 && at(i, j + 1) == 0;
            if (!outer && !hole) continue;

            ++nbd;
            const Cell start{i, j};
            Cell c2 = outer ? Cell{i, j - 1} : Cell{i, j + 1};
            std::vector<Cell> cells{start};

            // Clockwise search for the first nonzero neighbor.
            const int d0 = direction_of(c2.i - i, c2.j - j);
            int found = -1;
            for (int k = 0; k < 8; ++k) {
                const int d = (d0 + k) % 8;
                if (at(i + kDi[d], j + kDj[d]) != 0) {
                    found = d;
                    break;
                }
            }
            if (found < 0) {
                at(i, j) = -nbd;
            } else {
                const Cell c1{i + kDi[found], j + kDj[found]};
                c2 = c1;
                Cell c3 = start;
                while (true) {
                    const int d2 = direction_of(c2.i - c3.i, c2.j - c3.j);
                    bool east_zero = false;
                    Cell c4{};
                    for (int k = 1; k <= 8; ++k) {
                        const int d = (d2 - k + 8) % 8;
                        const Cell n{c3.i + kDi[d], c3.j + kDj[d]};
                        if (at(n.i, n.j) != 0) {
                            c4 = n;
                            break;
                        }
                        if (d == 0) east_zero = true;
                    }
                    if (east_zero) {
                        at(c3.i, c3.j) = -nbd;
                    } else if (at(c3.i, c3.j) == 1) {
                        at(c3.i, c3.j) = nbd;
                    }
                    if (c4 == start && c3 == c1) break;
                    cells.push_back(c4);
                    c2 = c3;
                    c3 = c4;
                }
            }

            const std::set<Cell> distinct(cells.begin(), cells.end());
            Polygon poly;
            if (distinct.size() < 3) {
                std::vector<Cell> uniq(distinct.begin(), distinct.end());
                poly = fallback_diamond(uniq);
            } else {
                poly.vertices.reserve(cells.size());
                for (const auto& c : cells)
                    poly.vertices.push_back({static_cast<double>(c.j - 1), static_cast<double>(c.i - 1)});
            }
            const double area = poly.signed_area();
            if ((outer && area < 0) || (!outer && area > 0)) {
                std::reverse(poly.vertices.begin(), poly.vertices.end());
            }
            out.push_back(std::move(poly));
        }
    }
    return out;
}

namespace {

constexpr double kOnEdgeEps = 1e-9;

// Marks inside (even-odd, ray toward +x) and on-edge pixel centers.
void rasterize(const Polygon& poly, int width, int height, std::vector<std::uint8_t>& inside,
               std::vector<std::uint8_t>& on_edge) {
    inside.assign(static_cast<std::size_t>(width) * height, 0);
    on_edge.assign(inside.size(), 0);
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    std::vector<double> xs;
    for (int y = 0; y < height; ++y) {
        xs.clear();
        const double py = y;
        for (std::size_t e = 0; e < n; ++e) {
            const Point2& a = v[e];
            const Point2& b = v[(e + 1) % n];
            if ((a.y > py) != (b.y > py)) {
                xs.push_back(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        std::sort(xs.begin(), xs.end());
        // A center at x is inside iff an odd number of crossings lie strictly right of it.
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            const int x0 = std::max(0, static_cast<int>(std::ceil(std::max(xs[k], -1.0))));
            const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::min(xs[k + 1], width + 1.0))) - 1);
            for (int x = x0; x <= x1; ++x) inside[static_cast<std::size_t>(y) * width + x] = 1;
        }
    }
    for (std::size_t e = 0; e < n; ++e) {
        const Point2& a = v[e];
        const Point2& b = v[(e + 1) % n];
        const int ylo = std::max(0, static_cast<int>(std::ceil(std::min(a.y, b.y) - kOnEdgeEps)));
        const int yhi =
            std::min(height - 1, static_cast<int>(std::floor(std::max(a.y, b.y) + kOnEdgeEps)));
        for (int y = ylo; y <= yhi; ++y) {
            if (std::abs(b.y - a.y) < kOnEdgeEps) {
                if (std::abs(a.y - y) > kOnEdgeEps) continue;
                const int xlo = std::max(0, static_cast<int>(std::ceil(std::min(a.x, b.x) - kOnEdgeEps)));
                const int xhi =
                    std::min(width - 1, static_cast<int>(std::floor(std::max(a.x, b.x) + kOnEdgeEps)));
                for (int x = xlo; x <= xhi; ++x) on_edge[static_cast<std::size_t>(y) * width + x] = 1;
            } else {
                const double ex = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                const double rx = std::round(ex);
                if (std::abs(ex - rx) < kOnEdgeEps && rx >= 0 && rx < width) {
                    on_edge[static_cast<std::size_t>(y) * width + static_cast<int>(rx)] = 1;
                }
            }
        }
    }
}

}  // namespace

BinaryMask polygon_to_mask(const Polygon& poly, int width, int height) {
    validate_polygon(poly);
    std::vector<std::uint8_t> inside, on_edge;
    rasterize(poly, width, height, inside, on_edge);
    BinaryMask out(width, height);
    auto bits = out.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = inside[i] | on_edge[i];
    return out;
}

BinaryMask contours_to_mask(const std::vector<Polygon>& contours, int width, int height) {
    std::vector<std::size_t> order(contours.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(contours[a].signed_area()) > std::abs(contours[b].signed_area());
    });
    BinaryMask out(width, height);
    std::vector<std::uint8_t> inside, on_edge;
    auto bits = out.bits();
    for (std::size_t idx : order) {
        const Polygon& poly = contours[idx];
        validate_polygon(poly);
        rasterize(poly, width, height, inside, on_edge);
        const bool hole = poly.signed_area() < 0;
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (hole) {
                if (inside[i] && !on_edge[i]) bits[i] = 0;
            } else if (inside[i] || on_edge[i]) {
                bits[i] = 1;
            }
        }
    }
    return out;
}

double mean_radius(const Polygon& poly, Point2 center) {
    if (poly.vertices.empty()) throw DomainError("mean_radius of empty polygon");
    double acc = 0.0;
    for (const auto& v : poly.vertices) acc += std::hypot(v.x - center.x, v.y - center.y);
    return acc / static_cast<double>(poly.vertices.size());
}

}  // namespace contourforge
