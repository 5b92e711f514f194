#include "contourforge/losses.hpp"

#include "contourforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace contourforge {

namespace {

constexpr double kProbEps = 1e-7;
constexpr double kAcosClamp = 1e-6;

void check_classes(const ScalarField& probs, std::span<const BinaryMask> gt) {
    if (static_cast<int>(gt.size()) != probs.channels()) {
        throw DomainError("class count mismatch: prediction has " + std::to_string(probs.channels()) +
                          " channels, ground truth " + std::to_string(gt.size()));
    }
    for (const auto& m : gt) {
        if (m.width() != probs.width() || m.height() != probs.height()) {
            throw DomainError("shape mismatch between prediction and ground truth");
        }
    }
}

void check_normals(const ScalarField& probs, std::span<const NormalField> normals) {
    if (static_cast<int>(normals.size()) != probs.channels()) {
        throw DomainError("normal field count does not match class count");
    }
    for (const auto& n : normals) {
        if (n.width != probs.width() || n.height != probs.height()) {
            throw DomainError("shape mismatch between prediction and normals");
        }
    }
}

// d/dz = f (1 - f) d/df
void chain_to_logits(ScalarField& grad, const ScalarField& probs) {
    auto g = grad.values();
    auto f = probs.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= f[i] * (1.0 - f[i]);
}

}  // namespace

void LossWeights::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("tau must be > 0");
    if (L < 1) throw DomainError("L must be >= 1");
    if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0) throw DomainError("loss weights must be nonnegative");
    if (alpha1 == 0 && alpha2 == 0 && alpha3 == 0) throw DomainError("loss weights must not all be zero");
    if (beta && !(*beta >= 0.0 && *beta <= 1.0)) throw DomainError("fixed beta must lie in [0, 1]");
    if (!(normal_sigma >= 0.0)) throw DomainError("normal sigma must be >= 0");
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
    LossWeights w;
    w.alpha1 = j.value("alpha1", w.alpha1);
    w.alpha2 = j.value("alpha2", w.alpha2);
    w.alpha3 = j.value("alpha3", w.alpha3);
    w.tau = j.value("tau", w.tau);
    w.L = j.value("L", w.L);
    w.normal_sigma = j.value("normal_sigma", w.normal_sigma);
    if (j.contains("beta")) {
        const auto& b = j["beta"];
        if (b.is_string()) {
            if (b.get<std::string>() != "auto") throw DomainError("loss.beta must be \"auto\" or a number");
        } else if (b.is_number()) {
            w.beta = b.get<double>();
        } else if (!b.is_null()) {
            throw DomainError("loss.beta must be \"auto\" or a number");
        }
    }
    w.validate();
    return w;
}

nlohmann::json LossWeights::to_json() const {
    nlohmann::json j = {{"alpha1", alpha1}, {"alpha2", alpha2}, {"alpha3", alpha3},
                        {"tau", tau},       {"L", L},           {"normal_sigma", normal_sigma}};
    if (beta) {
        j["beta"] = *beta;
    } else {
        j["beta"] = "auto";
    }
    return j;
}

GroundTruth GroundTruth::from_boundaries(std::vector<BinaryMask> boundaries, double sigma) {
    GroundTruth gt;
    gt.normals.reserve(boundaries.size());
    for (const auto& b : boundaries) gt.normals.push_back(estimate_normals(b.to_field(), sigma));
    gt.boundaries = std::move(boundaries);
    return gt;
}

nlohmann::json LossBreakdown::to_json() const {
    return {{"bce", bce},           {"nms", nms},
            {"dir", dir},           {"total", total},
            {"beta", beta},         {"nms_pixels", nms_pixels},
            {"nms_skipped", nms_skipped}, {"dir_pixels", dir_pixels},
            {"dir_skipped", dir_skipped}, {"nms_mean", nms_mean},
            {"dir_mean", dir_mean}, {"nms_empty", nms_empty}};
}

std::vector<double> SampleLine::values() const {
    std::vector<double> v;
    v.reserve(samples.size());
    for (const auto& s : samples) v.push_back(s.value);
    return v;
}

std::optional<SampleLine> sample_line(const ScalarField& field, int channel, int x, int y, double angle,
                                      int L) {
    SampleLine line;
    line.x = x;
    line.y = y;
    line.angle = angle;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (int t = -L; t <= L; ++t) {
        // Offsets below 1e-12 are rounding noise from cos/sin of axis angles.
        double px = x + t * c;
        double py = y + t * s;
        if (std::abs(px - std::round(px)) < 1e-12) px = std::round(px);
        if (std::abs(py - std::round(py)) < 1e-12) py = std::round(py);
        if (!sample_in_domain(field, px, py)) return std::nullopt;
        line.points.push_back({px, py});
        line.samples.push_back(bilinear_sample(field, channel, px, py));
    }
    return line;
}

namespace {

// Softmax of v / tau, max-shifted.
std::vector<double> softmax_tau(const std::vector<double>& v, double tau) {
    const double vmax = *std::max_element(v.begin(), v.end());
    std::vector<double> h(v.size());
    double z = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        h[i] = std::exp((v[i] - vmax) / tau);
        z += h[i];
    }
    for (auto& x : h) x /= z;
    return h;
}

}  // namespace

std::optional<std::vector<double>> nms_response(const ScalarField& probs, int channel,
                                                const NormalField& gt_normals, int x, int y,
                                                const LossWeights& weights) {
    weights.validate();
    if (!gt_normals.is_valid(y, x)) throw DomainError("nms_response: normal invalid at boundary pixel");
    auto line = sample_line(probs, channel, x, y, gt_normals.at(y, x), weights.L);
    if (!line) return std::nullopt;
    return softmax_tau(line->values(), weights.tau);
}

double auto_beta(std::span<const BinaryMask> gt) {
    std::size_t total = 0;
    std::size_t positives = 0;
    for (const auto& m : gt) {
        total += m.size();
        positives += m.count();
    }
    if (total == 0) return 0.0;
    return static_cast<double>(total - positives) / static_cast<double>(total);
}

LossTerm weighted_bce(const ScalarField& probs, std::span<const BinaryMask> gt, const LossWeights& weights) {
    check_classes(probs, gt);
    const double beta = weights.beta ? *weights.beta : auto_beta(gt);
    LossTerm out;
    out.beta = beta;
    out.gradient = ScalarField(probs.width(), probs.height(), probs.channels());
    for (int k = 0; k < probs.channels(); ++k) {
        auto f = probs.plane(k);
        auto g = out.gradient.plane(k);
        auto y = gt[k].bits();
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double raw = f[i];
            const double fc = std::clamp(raw, kProbEps, 1.0 - kProbEps);
            const bool clamped = fc != raw;
            if (y[i]) {
                out.value -= beta * std::log(fc);
                if (!clamped) g[i] = -beta * (1.0 - raw);
            } else {
                out.value -= (1.0 - beta) * std::log(1.0 - fc);
                if (!clamped) g[i] = (1.0 - beta) * raw;
            }
        }
        out.terms += f.size();
    }
    return out;
}

LossTerm nms_loss(const ScalarField& probs, std::span<const BinaryMask> gt_boundaries,
                  std::span<const NormalField> gt_normals, const LossWeights& weights) {
    weights.validate();
    check_classes(probs, gt_boundaries);
    check_normals(probs, gt_normals);
    LossTerm out;
    out.gradient = ScalarField(probs.width(), probs.height(), probs.channels());
    const double inv_tau = 1.0 / weights.tau;
    for (int k = 0; k < probs.channels(); ++k) {
        const auto& mask = gt_boundaries[k];
        const auto& nf = gt_normals[k];
        for (int y = 0; y < probs.height(); ++y) {
            for (int x = 0; x < probs.width(); ++x) {
                if (!mask.get(y, x)) continue;
                if (!nf.is_valid(y, x)) {
                    ++out.skipped;
                    continue;
                }
                const auto line = sample_line(probs, k, x, y, nf.at(y, x), weights.L);
                if (!line) {
                    ++out.skipped;
                    continue;
                }
                const auto v = line->values();
                const auto h = softmax_tau(v, weights.tau);
                const std::size_t center = static_cast<std::size_t>(weights.L);
                const double vmax = *std::max_element(v.begin(), v.end());
                double z = 0.0;
                for (double vi : v) z += std::exp((vi - vmax) * inv_tau);
                // -log h(0) = -(v0 - vmax)/tau + log sum exp((v - vmax)/tau)
                out.value += -(v[center] - vmax) * inv_tau + std::log(z);
                ++out.terms;
                for (std::size_t t = 0; t < h.size(); ++t) {
                    const double d = inv_tau * (h[t] - (t == center ? 1.0 : 0.0));
                    for (const auto& tap : line->samples[t].taps) {
                        if (tap.weight != 0.0) out.gradient.at(k, tap.y, tap.x) += d * tap.weight;
                    }
                }
            }
        }
    }
    chain_to_logits(out.gradient, probs);
    return out;
}

namespace {

struct AngleLoss {
    double value = 0.0;
    double d_theta_e = 0.0;
};

// arccos(|<d, e>|) for unoriented unit normals at angles theta_d, theta_e.
AngleLoss angle_loss(double theta_d, double theta_e) {
    const double delta = theta_d - theta_e;
    const double c = std::cos(delta);
    const double m = std::abs(c);
    AngleLoss out;
    out.value = std::acos(std::min(m, 1.0));
    // The clamp only guards the derivative; the value stays exact so equal normals cost 0.
    if (m > 1.0 - kAcosClamp) return out;
    const double sgn = c >= 0 ? 1.0 : -1.0;
    out.d_theta_e = -sgn * std::sin(delta) / std::sqrt(1.0 - m * m);
    return out;
}

}  // namespace

LossTerm direction_loss(const ScalarField& probs, std::span<const BinaryMask> gt_boundaries,
                        std::span<const NormalField> gt_normals, const LossWeights& weights) {
    weights.validate();
    check_classes(probs, gt_boundaries);
    check_normals(probs, gt_normals);
    LossTerm out;
    out.gradient = ScalarField(probs.width(), probs.height(), probs.channels());
    const int w = probs.width();
    const int h = probs.height();
    for (int k = 0; k < probs.channels(); ++k) {
        const auto hs = hessian(probs.channel(k), weights.normal_sigma);
        ScalarField d_fxx(w, h, 1), d_fyy(w, h, 1), d_fxy(w, h, 1);
        bool any = false;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (!gt_boundaries[k].get(y, x)) continue;
                if (!gt_normals[k].is_valid(y, x)) {
                    ++out.skipped;
                    continue;
                }
                const auto e = hessian_normal_angle(hs.fxx.at(y, x), hs.fyy.at(y, x), hs.fxy.at(y, x));
                if (!e.valid || !(hs.smoothed.at(y, x) > kNormalSupportThreshold)) {
                    ++out.skipped;
                    continue;
                }
                const auto al = angle_loss(gt_normals[k].at(y, x), e.angle);
                out.value += al.value;
                ++out.terms;
                if (al.d_theta_e != 0.0) {
                    d_fxx.at(y, x) += al.d_theta_e * e.d_fxx;
                    d_fyy.at(y, x) += al.d_theta_e * e.d_fyy;
                    d_fxy.at(y, x) += al.d_theta_e * e.d_fxy;
                    any = true;
                }
            }
        }
        if (any) {
            const auto g = hessian_transpose(d_fxx, d_fyy, d_fxy, weights.normal_sigma);
            auto dst = out.gradient.plane(k);
            auto src = g.plane(0);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    }
    chain_to_logits(out.gradient, probs);
    return out;
}

double direction_loss_from_normals(const NormalField& gt, const NormalField& pred, const BinaryMask& pixels) {
    if (gt.width != pred.width || gt.height != pred.height || gt.width != pixels.width() ||
        gt.height != pixels.height()) {
        throw DomainError("direction_loss_from_normals: shape mismatch");
    }
    double total = 0.0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!pixels.get(y, x) || !gt.is_valid(y, x) || !pred.is_valid(y, x)) continue;
            total += angle_loss(gt.at(y, x), pred.at(y, x)).value;
        }
    }
    return total;
}

LossBreakdown total_loss(const ScalarField& logits, const GroundTruth& gt, const LossWeights& weights) {
    weights.validate();
    const ScalarField probs = sigmoid(logits);
    const auto bce = weighted_bce(probs, gt.boundaries, weights);
    const auto nms = nms_loss(probs, gt.boundaries, gt.normals, weights);
    const auto dir = direction_loss(probs, gt.boundaries, gt.normals, weights);

    LossBreakdown out;
    out.bce = bce.value;
    out.nms = nms.value;
    out.dir = dir.value;
    out.total = weights.alpha1 * bce.value + weights.alpha2 * nms.value + weights.alpha3 * dir.value;
    out.gradient = ScalarField(logits.width(), logits.height(), logits.channels());
    auto g = out.gradient.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = weights.alpha1 * bce.gradient.values()[i] + weights.alpha2 * nms.gradient.values()[i] +
               weights.alpha3 * dir.gradient.values()[i];
    }
    out.beta = bce.beta;
    out.nms_pixels = nms.terms;
    out.nms_skipped = nms.skipped;
    out.dir_pixels = dir.terms;
    out.dir_skipped = dir.skipped;
    out.nms_mean = nms.mean();
    out.dir_mean = dir.mean();
    out.nms_empty = nms.terms == 0;
    return out;
}

}  // namespace contourforge
