#pragma once

#include "contourforge/raster.hpp"

#include <cmath>
#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace cf_test {

using namespace contourforge;

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(CF_FIXTURE_DIR) / name; }

inline BinaryMask random_mask(std::mt19937_64& rng, int w, int h, double p = 0.5) {
    std::bernoulli_distribution coin(p);
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(y, x, coin(rng));
    return m;
}

inline ScalarField random_field(std::mt19937_64& rng, int w, int h, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    ScalarField f(w, h, 1);
    for (auto& v : f.values()) v = u(rng);
    return f;
}

/// Star-shaped blob: radius R (1 + sum_k a_k cos(k t + phi_k)), k = 2..4.
inline BinaryMask random_blob(std::mt19937_64& rng, int n, double r_lo, double r_hi, double wobble = 0.12) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double R = r_lo + (r_hi - r_lo) * u(rng);
    double a[5] = {};
    double ph[5] = {};
    for (int k = 2; k < 5; ++k) {
        a[k] = wobble * u(rng) / (k - 1);
        ph[k] = 2 * M_PI * u(rng);
    }
    const double cx = n / 2.0 + 4 * (u(rng) - 0.5);
    const double cy = n / 2.0 + 4 * (u(rng) - 0.5);
    BinaryMask m(n, n);
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double t = std::atan2(y - cy, x - cx);
            double r = R;
            for (int k = 2; k < 5; ++k) r += R * a[k] * std::cos(k * t + ph[k]);
            m.set(y, x, std::hypot(x - cx, y - cy) <= r);
        }
    }
    return m;
}

/// Probability ring exp(-(r - r0)^2 / (2 s^2)) around (cx, cy).
inline ScalarField ring_field(int w, int h, double cx, double cy, double r0, double s = 1.0) {
    ScalarField f(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double d = std::hypot(x - cx, y - cy) - r0;
            f.at(y, x) = std::exp(-d * d / (2 * s * s));
        }
    }
    return f;
}

/// Exact maximum matching by DP over subsets of the gt side (gt side up to ~16 pixels).
inline std::size_t exact_matching(const BinaryMask& pred, const BinaryMask& gt, double dmax) {
    std::vector<std::pair<int, int>> p, g;
    for (int y = 0; y < pred.height(); ++y)
        for (int x = 0; x < pred.width(); ++x) {
            if (pred.get(y, x)) p.push_back({x, y});
            if (gt.get(y, x)) g.push_back({x, y});
        }
    const std::size_t full = std::size_t{1} << g.size();
    std::vector<int> best(full, -1);
    best[0] = 0;
    for (const auto& [px, py] : p) {
        std::vector<int> next = best;
        for (std::size_t used = 0; used < full; ++used) {
            if (best[used] < 0) continue;
            for (std::size_t j = 0; j < g.size(); ++j) {
                if (used & (std::size_t{1} << j)) continue;
                if (std::hypot(px - g[j].first, py - g[j].second) > dmax) continue;
                const std::size_t to = used | (std::size_t{1} << j);
                next[to] = std::max(next[to], best[used] + 1);
            }
        }
        best = std::move(next);
    }
    return static_cast<std::size_t>(*std::max_element(best.begin(), best.end()));
}

}  // namespace cf_test
