#include "contourforge/coarse.hpp"

#include "contourforge/contour.hpp"
#include "contourforge/error.hpp"
#include "contourforge/io.hpp"
#include "contourforge/metrics.hpp"
#include "contourforge/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace contourforge {

namespace {

double segment_distance(Point2 p, Point2 a, Point2 b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

// Marks kept vertices on the chain first..last (indices taken modulo n).
void rdp_chain(const std::vector<Point2>& v, std::size_t first, std::size_t last, double eps,
               std::vector<char>& keep) {
    const std::size_t n = v.size();
    std::vector<std::pair<std::size_t, std::size_t>> stack{{first, last}};
    while (!stack.empty()) {
        auto [a, b] = stack.back();
        stack.pop_back();
        const std::size_t span = (b + n - a) % n;
        if (span < 2) continue;
        double best = -1.0;
        std::size_t best_k = a;
        for (std::size_t s = 1; s < span; ++s) {
            const std::size_t k = (a + s) % n;
            const double d = segment_distance(v[k], v[a], v[b]);
            if (d > best) {
                best = d;
                best_k = k;
            }
        }
        if (best > eps) {
            keep[best_k] = 1;
            stack.emplace_back(a, best_k);
            stack.emplace_back(best_k, b);
        }
    }
}

}  // namespace

Polygon simplify_polygon(const Polygon& poly, double epsilon) {
    if (!(epsilon >= 0.0)) throw DomainError("simplify_polygon: epsilon must be >= 0");
    validate_polygon(poly);
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    if (epsilon == 0.0 || n <= 3) return poly;

    std::size_t ia = 0;
    std::size_t ib = 1;
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::hypot(v[i].x - v[j].x, v[i].y - v[j].y);
            if (d > far) {
                far = d;
                ia = i;
                ib = j;
            }
        }
    }
    std::vector<char> keep(n, 0);
    keep[ia] = keep[ib] = 1;
    rdp_chain(v, ia, ib, epsilon, keep);
    rdp_chain(v, ib, ia, epsilon, keep);

    if (std::count(keep.begin(), keep.end(), 1) < 3) {
        // Two anchors only: add the vertex farthest from their chord.
        double best = -1.0;
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < n; ++k) {
            if (keep[k]) continue;
            const double d = segment_distance(v[k], v[ia], v[ib]);
            if (d > best) {
                best = d;
                best_k = k;
            }
        }
        keep[best_k] = 1;
    }

    Polygon out;
    for (std::size_t k = 0; k < n; ++k)
        if (keep[k]) out.vertices.push_back(v[k]);
    return out;
}

double boundary_error(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw DomainError("boundary_error: mask shapes differ");
    if (!a.any() || !b.any()) throw DomainError("boundary_error: empty mask");
    const BinaryMask ba = mask_to_boundary(a);
    const BinaryMask bb = mask_to_boundary(b);
    auto directed = [](const BinaryMask& from, const BinaryMask& to) {
        const ScalarField dt = distance_transform(to);
        double sum = 0.0;
        std::size_t n = 0;
        const auto bits = from.bits();
        const auto d = dt.values();
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (!bits[i]) continue;
            sum += d[i];
            ++n;
        }
        return sum / static_cast<double>(n);
    };
    return 0.5 * (directed(ba, bb) + directed(bb, ba));
}

nlohmann::json CoarseResult::to_json() const {
    return {{"clicks", clicks},
            {"achieved_error_px", achieved_error_px},
            {"iou_vs_fine", iou_vs_fine},
            {"epsilon", epsilon},
            {"erosion_radius", erosion_radius},
            {"polygon", io::polygon_to_json(polygon)}};
}

CoarseResult simulate_coarse(const BinaryMask& fine, double target_err_px) {
    if (!(target_err_px >= 1.0)) throw DomainError("simulate_coarse: target error must be >= 1 px");
    if (!fine.any()) throw DomainError("simulate_coarse: empty fine mask");

    const int radius = static_cast<int>(std::ceil(target_err_px / 2.0));
    const BinaryMask core = largest_component(erode(fine, StructuringElement::disc(radius)));
    if (!core.any()) throw DomainError("object below coarsening scale");

    const auto contours = mask_to_contours(core);
    const Polygon* outer = nullptr;
    for (const auto& c : contours) {
        if (!outer || c.signed_area() > outer->signed_area()) outer = &c;
    }
    if (!outer || outer->signed_area() <= 0) throw DomainError("object below coarsening scale");

    struct Candidate {
        CoarseResult r;
        bool valid = false;
    };
    auto evaluate = [&](double eps) {
        Candidate c;
        c.r.polygon = simplify_polygon(*outer, eps);
        c.r.coarse_mask = mask_and(polygon_to_mask(c.r.polygon, fine.width(), fine.height()), fine);
        if (!c.r.coarse_mask.any()) return c;
        c.r.clicks = static_cast<int>(c.r.polygon.vertices.size());
        c.r.achieved_error_px = boundary_error(c.r.coarse_mask, fine);
        c.r.epsilon = eps;
        c.r.erosion_radius = radius;
        c.valid = true;
        return c;
    };
    const double band = 0.2 * target_err_px;
    auto key = [&](const CoarseResult& r) {
        const double miss = std::abs(r.achieved_error_px - target_err_px);
        return std::make_pair(miss <= band ? 0.0 : miss, r.clicks);
    };

    Candidate best;
    auto consider = [&](Candidate c) {
        if (!c.valid) return;
        if (!best.valid || key(c.r) < key(best.r)) best = std::move(c);
    };

    double lo = 0.0;
    double hi = 4.0 * target_err_px;
    consider(evaluate(lo));
    consider(evaluate(hi));
    for (int it = 0; it < 12; ++it) {
        const double mid = 0.5 * (lo + hi);
        Candidate c = evaluate(mid);
        if (!c.valid || c.r.achieved_error_px > target_err_px) {
            hi = mid;
        } else {
            lo = mid;
        }
        consider(std::move(c));
    }
    if (!best.valid) throw DomainError("object below coarsening scale");
    best.r.iou_vs_fine = iou(best.r.coarse_mask, fine);
    return best.r;
}

Trajectory refine_coarse(const BinaryMask& coarse, const ScalarField& pred, const EvolutionParams& params) {
    if (!coarse.any()) throw DomainError("refine_coarse: empty coarse mask");
    const ScalarField no_gt(pred.width(), pred.height(), 1);
    return evolve(coarse, compute_g(pred, no_gt, params.lambda), params);
}

BinaryMask refine_coarse(const BinaryMask& coarse, const ScalarField& pred, int steps) {
    if (steps < 0) throw DomainError("refine_coarse: steps must be >= 0");
    if (!coarse.any()) throw DomainError("refine_coarse: empty coarse mask");
    if (steps == 0) return coarse;
    EvolutionParams params = EvolutionParams::coarse_to_fine_defaults();
    params.max_steps = steps;
    params.snapshot_every = steps;
    return refine_coarse(coarse, pred, params).final_snapshot().mask;
}

}  // namespace contourforge
