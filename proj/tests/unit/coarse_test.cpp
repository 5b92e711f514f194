#include "contourforge/coarse.hpp"
#include "contourforge/contour.hpp"
#include "contourforge/error.hpp"
#include "contourforge/io.hpp"
#include "contourforge/metrics.hpp"
#include "contourforge/morphology.hpp"
#include "contourforge/trainer.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <set>

using namespace contourforge;

namespace {

BinaryMask square(int n, int x0, int y0, int side) {
    BinaryMask m(n, n);
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) m.set(y, x, true);
    return m;
}

double seg_dist(Point2 p, Point2 a, Point2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy);
}

/// Largest distance from any input vertex to the simplified closed polygon.
double max_deviation(const Polygon& in, const Polygon& out) {
    double worst = 0;
    for (const auto& p : in.vertices) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < out.size(); ++i)
            best = std::min(best, seg_dist(p, out.vertices[i], out.vertices[(i + 1) % out.size()]));
        worst = std::max(worst, best);
    }
    return worst;
}

/// True when `sub` appears in order within some rotation of `full`.
bool is_cyclic_subsequence(const Polygon& sub, const Polygon& full) {
    const std::size_t n = full.size();
    for (std::size_t start = 0; start < n; ++start) {
        std::size_t j = 0;
        for (std::size_t k = 0; k < n && j < sub.size(); ++k)
            if (sub.vertices[j] == full.vertices[(start + k) % n]) ++j;
        if (j == sub.size()) return true;
    }
    return false;
}

/// Brute force: mean over boundary(a) of the distance to the nearest boundary(b) pixel, symmetrized.
double brute_boundary_error(const BinaryMask& a, const BinaryMask& b) {
    const auto ba = mask_to_boundary(a), bb = mask_to_boundary(b);
    auto one_way = [](const BinaryMask& from, const BinaryMask& to) {
        double sum = 0;
        std::size_t n = 0;
        for (int y = 0; y < from.height(); ++y)
            for (int x = 0; x < from.width(); ++x) {
                if (!from.get(y, x)) continue;
                double best = std::numeric_limits<double>::infinity();
                for (int v = 0; v < to.height(); ++v)
                    for (int u = 0; u < to.width(); ++u)
                        if (to.get(v, u)) best = std::min(best, std::hypot(u - x, v - y));
                sum += best;
                ++n;
            }
        return sum / n;
    };
    return 0.5 * (one_way(ba, bb) + one_way(bb, ba));
}

}  // namespace

TEST(Simplify, SquareContourToCorners) {
    const auto contours = mask_to_contours(square(30, 5, 5, 12));
    ASSERT_EQ(contours.size(), 1u);
    const auto s = simplify_polygon(contours[0], 1.0);
    ASSERT_EQ(s.size(), 4u);
    std::set<std::pair<double, double>> got, want{{5, 5}, {16, 5}, {16, 16}, {5, 16}};
    for (const auto& v : s.vertices) got.insert({v.x, v.y});
    EXPECT_EQ(got, want);
}

TEST(Simplify, ZeroEpsilonIsIdentity) {
    std::mt19937_64 rng(51);
    const auto contours = mask_to_contours(cf_test::random_blob(rng, 40, 8, 15));
    const auto s = simplify_polygon(contours[0], 0.0);
    EXPECT_EQ(s.vertices, contours[0].vertices);
    EXPECT_THROW(simplify_polygon(contours[0], -1.0), DomainError);
}

TEST(Simplify, OctagonWithinTolerance) {
    Polygon oct;
    for (int k = 0; k < 8; ++k) oct.vertices.push_back({10 * std::cos(k * M_PI / 4), 10 * std::sin(k * M_PI / 4)});
    const auto s = simplify_polygon(oct, 3.0);
    EXPECT_GE(s.size(), 4u);
    EXPECT_LE(s.size(), 8u);
    EXPECT_LE(max_deviation(oct, s), 3.0);
    EXPECT_TRUE(is_cyclic_subsequence(s, oct));
}

TEST(SimplifyProperty, SubsetAndWithinEpsilon) {
    std::mt19937_64 rng(52);
    for (int trial = 0; trial < 40; ++trial) {
        const auto poly = mask_to_contours(cf_test::random_blob(rng, 48, 8, 18, 0.3))[0];
        for (double eps : {0.5, 1.5, 4.0, 9.0}) {
            const auto s = simplify_polygon(poly, eps);
            ASSERT_GE(s.size(), 3u);
            ASSERT_LE(max_deviation(poly, s), eps + 1e-9);
            ASSERT_TRUE(is_cyclic_subsequence(s, poly));
        }
    }
}

TEST(BoundaryError, IdenticalIsZero) {
    const auto m = square(20, 4, 4, 10);
    EXPECT_EQ(boundary_error(m, m), 0.0);
}

TEST(BoundaryError, SquareVsErodedSquare) {
    const auto sq = square(24, 2, 2, 20);
    const auto er = square(24, 4, 4, 16);
    const double e = boundary_error(sq, er);
    EXPECT_NEAR(e, 2.0, 0.1);
    EXPECT_DOUBLE_EQ(e, brute_boundary_error(sq, er));
}

TEST(BoundaryError, ConcentricDiscs) {
    // Centered on the image middle (11.5, 11.5); a pixel-centered pair gives 2.64.
    const auto a = disc_mask(24, 24, 11.5, 11.5, 5), b = disc_mask(24, 24, 11.5, 11.5, 8);
    const double e = boundary_error(a, b);
    EXPECT_NEAR(e, 3.0, 0.1);
    EXPECT_NEAR(e, brute_boundary_error(a, b), 1e-12);
}

TEST(BoundaryError, Errors) {
    EXPECT_THROW(boundary_error(BinaryMask(5, 5), square(5, 1, 1, 2)), DomainError);
    EXPECT_THROW(boundary_error(square(5, 1, 1, 2), square(6, 1, 1, 2)), DomainError);
}

TEST(SimulateCoarse, LargeSquareTargetFour) {
    const auto r = simulate_coarse(io::read_mask(cf_test::fixture("square.pgm")), 4.0);
    EXPECT_EQ(r.clicks, 4);
    EXPECT_EQ(r.clicks, static_cast<int>(r.polygon.size()));
    EXPECT_GE(r.achieved_error_px, 2.0 - 0.1);
    EXPECT_LE(r.achieved_error_px, 4.0);
    EXPECT_EQ(r.erosion_radius, 2.0);
    const auto j = r.to_json();
    for (const char* k : {"clicks", "achieved_error_px", "iou_vs_fine"}) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(SimulateCoarse, TinyMaskRejected) {
    try {
        simulate_coarse(square(9, 3, 3, 3), 4.0);
        FAIL();
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("object below coarsening scale"), std::string::npos);
    }
    EXPECT_THROW(simulate_coarse(square(9, 3, 3, 3), 0.5), DomainError);
}

TEST(SimulateCoarseProperty, ContainmentAndMonotoneClicks) {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        const auto fine = cf_test::random_blob(rng, 128, 40, 48);
        int prev = std::numeric_limits<int>::max();
        for (double target : {4.0, 8.0, 16.0, 32.0}) {
            const auto r = simulate_coarse(fine, target);
            ASSERT_EQ(mask_and(r.coarse_mask, fine), r.coarse_mask) << "trial " << trial;
            ASSERT_LE(r.clicks, prev) << "trial " << trial << " target " << target;
            ASSERT_EQ(r.clicks, static_cast<int>(r.polygon.size()));
            prev = r.clicks;
        }
    }
}

TEST(RefineCoarse, StepsZeroIsIdentity) {
    const auto m = disc_mask(40, 40, 20, 20, 6);
    EXPECT_EQ(refine_coarse(m, cf_test::ring_field(40, 40, 20, 20, 10), 0), m);
}

TEST(RefineCoarse, RidgeOnBoundaryKeepsMask) {
    const auto m = disc_mask(64, 64, 32, 32, 10);
    const auto ridge = smoothed_boundary_term(mask_to_boundary(m), 1.0);
    EXPECT_GT(iou(refine_coarse(m, ridge, 50), m), 0.95);
}

TEST(RefineCoarse, ErodedDiscGrowsToRidge) {
    const auto truth = disc_mask(64, 64, 32, 32, 10);
    const auto coarse = disc_mask(64, 64, 32, 32, 6);
    const auto refined = refine_coarse(coarse, cf_test::ring_field(64, 64, 32, 32, 10), 50);
    EXPECT_GE(iou(refined, truth) - iou(coarse, truth), 0.15);
}

TEST(RefineCoarseProperty, TerminatesWithinSteps) {
    std::mt19937_64 rng(54);
    for (int trial = 0; trial < 10; ++trial) {
        const auto fine = cf_test::random_blob(rng, 64, 16, 24);
        const auto coarse = simulate_coarse(fine, 8.0).coarse_mask;
        EvolutionParams p = EvolutionParams::coarse_to_fine_defaults();
        p.max_steps = 17;
        p.snapshot_every = 4;
        const auto traj = refine_coarse(coarse, smoothed_boundary_term(mask_to_boundary(fine), 1.5), p);
        EXPECT_LE(traj.steps_run, 17);
        EXPECT_EQ(traj.final_snapshot().step, traj.steps_run);
    }
}
