#include "contourforge/morphology.hpp"

#include "contourforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace contourforge {

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
    const auto offs = se.offsets();
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            for (const auto& [dx, dy] : offs) {
                // Reflected element; all supported elements are symmetric anyway.
                if (mask.get_padded(y - dy, x - dx)) {
                    out.set(y, x, true);
                    break;
                }
            }
        }
    }
    return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se) {
    const auto offs = se.offsets();
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.get(y, x)) continue;
            bool keep = true;
            for (const auto& [dx, dy] : offs) {
                if (!mask.get_padded(y + dy, x + dx)) {
                    keep = false;
                    break;
                }
            }
            out.set(y, x, keep);
        }
    }
    return out;
}

BinaryMask mask_to_boundary(const BinaryMask& mask) {
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.get(y, x)) continue;
            const bool edge = !mask.get_padded(y - 1, x) || !mask.get_padded(y + 1, x) ||
                              !mask.get_padded(y, x - 1) || !mask.get_padded(y, x + 1);
            out.set(y, x, edge);
        }
    }
    return out;
}

namespace {

constexpr double kFar = 1e20;

// Squared distance lower envelope of parabolas (Felzenszwalb & Huttenlocher).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
            std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[k] && k > 0) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

ScalarField distance_transform(const BinaryMask& mask) {
    if (!mask.any()) throw DomainError("no foreground");
    const int w = mask.width();
    const int h = mask.height();
    ScalarField sq(w, h, 1);
    const int n = std::max(w, h);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    for (int x = 0; x < w; ++x) {
        f.resize(h);
        d.resize(h);
        for (int y = 0; y < h; ++y) f[y] = mask.get(y, x) ? 0.0 : kFar;
        edt_1d(f, d, v, z);
        for (int y = 0; y < h; ++y) sq.at(y, x) = d[y];
    }
    for (int y = 0; y < h; ++y) {
        f.resize(w);
        d.resize(w);
        for (int x = 0; x < w; ++x) f[x] = sq.at(y, x);
        edt_1d(f, d, v, z);
        for (int x = 0; x < w; ++x) sq.at(y, x) = std::sqrt(d[x]);
    }
    return sq;
}

ComponentLabels label_components(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    ComponentLabels out;
    out.labels.assign(static_cast<std::size_t>(w) * h, 0);
    std::vector<int> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!mask.get(y, x) || out.labels[idx] != 0) continue;
            const int label = ++out.count;
            out.labels[idx] = label;
            stack.assign(1, static_cast<int>(idx));
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cy = cur / w;
                const int cx = cur % w;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int ny = cy + dy;
                        const int nx = cx + dx;
                        if (!mask.get_padded(ny, nx)) continue;
                        const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                        if (out.labels[nidx] != 0) continue;
                        out.labels[nidx] = label;
                        stack.push_back(static_cast<int>(nidx));
                    }
                }
            }
        }
    }
    return out;
}

BinaryMask largest_component(const BinaryMask& mask) {
    const auto comps = label_components(mask);
    BinaryMask out(mask.width(), mask.height());
    if (comps.count == 0) return out;
    std::vector<std::size_t> sizes(comps.count + 1, 0);
    for (int l : comps.labels) ++sizes[l];
    int best = 1;
    for (int l = 2; l <= comps.count; ++l)
        if (sizes[l] > sizes[best]) best = l;
    auto bits = out.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = comps.labels[i] == best ? 1 : 0;
    return out;
}

}  // namespace contourforge
