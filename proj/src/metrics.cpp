#include "contourforge/metrics.hpp"

#include "contourforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace contourforge {

namespace {

double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-12 ? r : v;
}

}  // namespace

ScalarField nms_thin(const ScalarField& pred, const NormalField& normals) {
    if (pred.channels() != 1) throw DomainError("nms_thin: single-channel prediction required");
    if (normals.width != pred.width() || normals.height != pred.height()) {
        throw DomainError("nms_thin: normal field shape differs");
    }
    ScalarField out(pred.width(), pred.height(), 1);
    for (int y = 0; y < pred.height(); ++y) {
        for (int x = 0; x < pred.width(); ++x) {
            const double v = pred.at(y, x);
            bool keep = true;
            if (normals.is_valid(y, x)) {
                const double a = normals.at(y, x);
                for (const int s : {-1, 1}) {
                    const double sx = snap(x + s * std::cos(a));
                    const double sy = snap(y + s * std::sin(a));
                    if (!sample_in_domain(pred, sx, sy)) continue;
                    if (v < bilinear_sample(pred, 0, sx, sy).value) {
                        keep = false;
                        break;
                    }
                }
            }
            if (keep) out.at(y, x) = v;
        }
    }
    return out;
}

namespace {

class HopcroftKarp {
public:
    explicit HopcroftKarp(std::vector<std::vector<int>> adj, int right_size)
        : adj_(std::move(adj)), match_l_(adj_.size(), -1), match_r_(right_size, -1), dist_(adj_.size()) {}

    std::size_t run() {
        std::size_t size = 0;
        while (bfs()) {
            for (std::size_t u = 0; u < adj_.size(); ++u) {
                if (match_l_[u] == -1 && dfs(static_cast<int>(u))) ++size;
            }
        }
        return size;
    }

private:
    static constexpr int kInf = std::numeric_limits<int>::max();

    bool bfs() {
        std::queue<int> q;
        bool found = false;
        for (std::size_t u = 0; u < adj_.size(); ++u) {
            if (match_l_[u] == -1) {
                dist_[u] = 0;
                q.push(static_cast<int>(u));
            } else {
                dist_[u] = kInf;
            }
        }
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (const int v : adj_[u]) {
                const int w = match_r_[v];
                if (w == -1) {
                    found = true;
                } else if (dist_[w] == kInf) {
                    dist_[w] = dist_[u] + 1;
                    q.push(w);
                }
            }
        }
        return found;
    }

    // Iterative layered DFS so large boundaries cannot overflow the stack.
    bool dfs(int root) {
        struct Frame {
            int u;
            std::size_t next;
        };
        std::vector<Frame> stack{{root, 0}};
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next == adj_[f.u].size()) {
                dist_[f.u] = kInf;
                stack.pop_back();
                continue;
            }
            const int v = adj_[f.u][f.next++];
            const int w = match_r_[v];
            if (w == -1) {
                // Augment along the stack.
                int carry = v;
                for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
                    const int prev = match_l_[it->u];
                    match_l_[it->u] = carry;
                    match_r_[carry] = it->u;
                    carry = prev;
                }
                return true;
            }
            if (dist_[w] == dist_[f.u] + 1) stack.push_back({w, 0});
        }
        return false;
    }

    std::vector<std::vector<int>> adj_;
    std::vector<int> match_l_;
    std::vector<int> match_r_;
    std::vector<int> dist_;
};

}  // namespace

MatchCounts match_boundaries(const BinaryMask& pred, const BinaryMask& gt, double d_max) {
    if (!(d_max > 0)) throw DomainError("match_boundaries: d_max must be > 0");
    if (!pred.same_shape(gt)) throw DomainError("match_boundaries: mask shapes differ");
    const int w = gt.width();
    const int h = gt.height();

    std::vector<int> gt_index(gt.size(), -1);
    int n_gt = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (gt.bits()[i]) gt_index[i] = n_gt++;

    const int r = static_cast<int>(std::floor(d_max));
    const double d2 = d_max * d_max;
    std::vector<std::vector<int>> adj;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!pred.get(y, x)) continue;
            std::vector<int> edges;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx * dx + dy * dy > d2) continue;
                    const int gx = x + dx;
                    const int gy = y + dy;
                    if (!gt.in_bounds(gy, gx)) continue;
                    const int g = gt_index[static_cast<std::size_t>(gy) * w + gx];
                    if (g >= 0) edges.push_back(g);
                }
            }
            adj.push_back(std::move(edges));
        }
    }
    MatchCounts counts;
    counts.pred_total = adj.size();
    counts.gt_total = static_cast<std::size_t>(n_gt);
    counts.matched = HopcroftKarp(std::move(adj), n_gt).run();
    return counts;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw DomainError("iou: mask shapes differ");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool p = a.bits()[i];
        const bool q = b.bits()[i];
        inter += p && q;
        uni += p || q;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

void MatchParams::validate() const {
    if (!(tolerance_fraction > 0)) throw DomainError("tolerance fraction must be > 0");
    if (thresholds < 1) throw DomainError("threshold count must be >= 1");
    if (!(normal_sigma >= 0)) throw DomainError("normal sigma must be >= 0");
}

std::vector<double> threshold_grid(int n) {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[i] = static_cast<double>(i + 1) / static_cast<double>(n + 1);
    return t;
}

double average_precision(const std::vector<PrPoint>& pr) {
    std::vector<PrPoint> pts = pr;
    std::sort(pts.begin(), pts.end(), [](const PrPoint& a, const PrPoint& b) {
        return a.recall != b.recall ? a.recall < b.recall : a.precision > b.precision;
    });
    // Interpolate: precision at recall r is the best precision at any recall >= r.
    for (std::size_t i = pts.size(); i-- > 1;) {
        pts[i - 1].precision = std::max(pts[i - 1].precision, pts[i].precision);
    }
    double area = 0.0;
    double prev_r = 0.0;
    for (const auto& p : pts) {
        area += (p.recall - prev_r) * p.precision;
        prev_r = p.recall;
    }
    return area;
}

EvalResult evaluate_dataset(const std::vector<ScalarField>& preds, const std::vector<std::vector<BinaryMask>>& gts,
                            const MatchParams& params) {
    params.validate();
    if (preds.size() != gts.size()) throw DomainError("evaluate_dataset: prediction and GT lists differ in length");
    if (preds.empty()) throw DomainError("evaluate_dataset: empty dataset");
    const int K = preds.front().channels();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].channels() != K || static_cast<int>(gts[i].size()) != K) {
            throw DomainError(fmt::format("evaluate_dataset: image {} does not have {} classes", i, K));
        }
        for (const auto& g : gts[i]) {
            if (g.width() != preds[i].width() || g.height() != preds[i].height()) {
                throw DomainError(fmt::format("evaluate_dataset: image {} GT/prediction shapes differ", i));
            }
        }
    }

    const auto thresholds = threshold_grid(params.thresholds);
    const std::size_t T = thresholds.size();
    // counts[image][class][threshold]
    std::vector<std::vector<std::vector<MatchCounts>>> counts(
        preds.size(), std::vector<std::vector<MatchCounts>>(static_cast<std::size_t>(K), std::vector<MatchCounts>(T)));

    auto work = [&](std::size_t i) {
        const auto& pred = preds[i];
        const double d_max =
            params.tolerance_fraction * std::hypot(static_cast<double>(pred.width()), static_cast<double>(pred.height()));
        for (int k = 0; k < K; ++k) {
            ScalarField channel = pred.channel(k);
            if (params.thin_predictions) channel = nms_thin(channel, estimate_normals(channel, params.normal_sigma));
            for (std::size_t t = 0; t < T; ++t) {
                counts[i][k][t] = match_boundaries(threshold(channel, thresholds[t]), gts[i][k], d_max);
            }
        }
    };

    const unsigned n_threads = std::max(1u, std::min<unsigned>(params.threads, static_cast<unsigned>(preds.size())));
    if (n_threads == 1) {
        for (std::size_t i = 0; i < preds.size(); ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(n_threads);
        for (unsigned w = 0; w < n_threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < preds.size(); i += n_threads) work(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    EvalResult result;
    result.params = params;
    double mf_sum = 0.0;
    double ap_sum = 0.0;
    int defined = 0;
    for (int k = 0; k < K; ++k) {
        ClassEval ce;
        ce.class_index = k;
        for (std::size_t t = 0; t < T; ++t) {
            MatchCounts total;
            for (std::size_t i = 0; i < preds.size(); ++i) {
                total.matched += counts[i][k][t].matched;
                total.pred_total += counts[i][k][t].pred_total;
                total.gt_total += counts[i][k][t].gt_total;
            }
            ce.gt_pixels = total.gt_total;
            PrPoint p;
            p.threshold = thresholds[t];
            p.precision = total.pred_total ? static_cast<double>(total.matched) / static_cast<double>(total.pred_total) : 0.0;
            p.recall = total.gt_total ? static_cast<double>(total.matched) / static_cast<double>(total.gt_total) : 0.0;
            p.f = p.precision + p.recall > 0 ? 2.0 * p.precision * p.recall / (p.precision + p.recall) : 0.0;
            ce.pr.push_back(p);
        }
        if (ce.gt_pixels == 0) {
            result.excluded_classes.push_back(k);
        } else {
            const auto best = std::max_element(ce.pr.begin(), ce.pr.end(),
                                               [](const PrPoint& a, const PrPoint& b) { return a.f < b.f; });
            ce.mf_ods = best->f;
            ce.ods_threshold = best->threshold;
            ce.ap = average_precision(ce.pr);
            mf_sum += *ce.mf_ods;
            ap_sum += *ce.ap;
            ++defined;
        }
        result.classes.push_back(std::move(ce));
    }
    if (defined > 0) {
        result.mean_mf_ods = mf_sum / defined;
        result.mean_ap = ap_sum / defined;
    }
    return result;
}

nlohmann::json EvalResult::to_json() const {
    nlohmann::json classes_json = nlohmann::json::array();
    for (const auto& c : classes) {
        nlohmann::json pr = nlohmann::json::array();
        for (const auto& p : c.pr) pr.push_back({p.threshold, p.precision, p.recall});
        auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        classes_json.push_back({{"class", c.class_index},
                                {"gt_pixels", c.gt_pixels},
                                {"mf_ods", opt(c.mf_ods)},
                                {"ods_threshold", opt(c.ods_threshold)},
                                {"ap", opt(c.ap)},
                                {"pr", std::move(pr)}});
    }
    return {{"classes", std::move(classes_json)},
            {"mean_mf_ods", mean_mf_ods},
            {"mean_ap", mean_ap},
            {"excluded_classes", excluded_classes},
            {"tolerance_fraction", params.tolerance_fraction},
            {"thin_predictions", params.thin_predictions},
            {"thresholds", params.thresholds}};
}

std::string EvalResult::pr_csv() const {
    std::ostringstream os;
    os << "class,threshold,precision,recall,f\n";
    for (const auto& c : classes) {
        for (const auto& p : c.pr) {
            os << fmt::format("{},{:.6f},{:.17g},{:.17g},{:.17g}\n", c.class_index, p.threshold, p.precision, p.recall,
                              p.f);
        }
    }
    return os.str();
}

}  // namespace contourforge
