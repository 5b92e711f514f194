#include "contourforge/error.hpp"
#include "contourforge/io.hpp"
#include "contourforge/metrics.hpp"
#include "contourforge/morphology.hpp"
#include "contourforge/trainer.hpp"
#include "helpers.hpp"

#include <gtest/gtest.h>

using namespace contourforge;

namespace {

BinaryMask pixels(int w, int h, std::initializer_list<std::pair<int, int>> xy) {
    BinaryMask m(w, h);
    for (auto [x, y] : xy) m.set(y, x, true);
    return m;
}

NormalField horizontal_normals(int w, int h) {
    NormalField nf(w, h);
    std::fill(nf.valid.begin(), nf.valid.end(), 1);
    return nf;  // angle 0: normal along x
}

struct Toy {
    std::vector<ScalarField> preds;
    std::vector<std::vector<BinaryMask>> gts;
};

Toy load_toy() {
    Toy t;
    const auto dir = cf_test::fixture("eval_toy");
    for (int i = 0; i < 3; ++i) {
        const auto c0 = io::read_field(dir / "pred" / ("img" + std::to_string(i) + "_0.fpm"));
        const auto c1 = io::read_field(dir / "pred" / ("img" + std::to_string(i) + "_1.fpm"));
        ScalarField both(c0.width(), c0.height(), 2);
        for (int y = 0; y < c0.height(); ++y)
            for (int x = 0; x < c0.width(); ++x) {
                both.at(0, y, x) = c0.at(y, x);
                both.at(1, y, x) = c1.at(y, x);
            }
        t.preds.push_back(both);
        t.gts.push_back({io::read_mask(dir / "gt" / ("img" + std::to_string(i) + "_0.pgm")),
                         io::read_mask(dir / "gt" / ("img" + std::to_string(i) + "_1.pgm"))});
    }
    return t;
}

}  // namespace

TEST(NmsThin, RidgeColumnSurvives) {
    ScalarField f(3, 4, 1);
    for (int y = 0; y < 4; ++y) {
        f.at(y, 0) = 0.3;
        f.at(y, 1) = 0.9;
        f.at(y, 2) = 0.4;
    }
    const auto t = nms_thin(f, horizontal_normals(3, 4));
    for (int y = 0; y < 4; ++y) {
        EXPECT_EQ(t.at(y, 0), 0.0);
        EXPECT_DOUBLE_EQ(t.at(y, 1), 0.9);
        EXPECT_EQ(t.at(y, 2), 0.0);
    }
}

TEST(NmsThin, ConstantFieldUnchanged) {
    const ScalarField f(5, 5, 1, 0.42);
    EXPECT_EQ(nms_thin(f, horizontal_normals(5, 5)), f);
}

TEST(NmsThin, PlateauTieKeepsBoth) {
    ScalarField f(4, 2, 1);
    for (int y = 0; y < 2; ++y) {
        f.at(y, 0) = 0.3;
        f.at(y, 1) = 0.9;
        f.at(y, 2) = 0.9;
        f.at(y, 3) = 0.3;
    }
    const auto t = nms_thin(f, horizontal_normals(4, 2));
    EXPECT_DOUBLE_EQ(t.at(0, 1), 0.9);
    EXPECT_DOUBLE_EQ(t.at(0, 2), 0.9);
    EXPECT_EQ(t.at(0, 0), 0.0);
}

TEST(NmsThin, InvalidNormalsKept) {
    ScalarField f(3, 1, 1, {0.9, 0.1, 0.9});
    EXPECT_EQ(nms_thin(f, NormalField(3, 1)), f);
}

TEST(Match, Examples) {
    const auto a = match_boundaries(pixels(8, 8, {{0, 0}}), pixels(8, 8, {{0, 0}}), 1.0);
    EXPECT_EQ(a.matched, 1u);
    const auto b = match_boundaries(pixels(8, 8, {{0, 0}}), pixels(8, 8, {{3, 3}}), 2.0);
    EXPECT_EQ(b.matched, 0u);
    const auto c = match_boundaries(pixels(8, 8, {{0, 0}, {0, 1}, {5, 5}}), pixels(8, 8, {{0, 0}, {5, 4}}), 1.2);
    EXPECT_EQ(c.matched, 2u);
    EXPECT_EQ(c.pred_total, 3u);
    EXPECT_EQ(c.gt_total, 2u);
    const double p = 2.0 / 3, r = 1.0;
    EXPECT_NEAR(2 * p * r / (p + r), 0.8, 1e-15);
}

TEST(Match, GreedyWouldFail) {
    // Pred (1,0) can reach both gt pixels; pred (0,0) only reaches (0,1) at distance 1.
    const auto c = match_boundaries(pixels(4, 4, {{0, 0}, {1, 0}}), pixels(4, 4, {{0, 1}, {2, 0}}), 1.5);
    EXPECT_EQ(c.matched, 2u);
}

TEST(Match, EmptySets) {
    const auto c = match_boundaries(BinaryMask(4, 4), pixels(4, 4, {{1, 1}}), 2.0);
    EXPECT_EQ(c.matched, 0u);
    EXPECT_EQ(c.gt_total, 1u);
    EXPECT_THROW(match_boundaries(BinaryMask(4, 4), BinaryMask(4, 4), 0.0), DomainError);
}

TEST(MatchProperty, EqualsExhaustiveOracle) {
    std::mt19937_64 rng(61);
    std::uniform_int_distribution<int> coord(0, 9), count(0, 8);
    std::uniform_real_distribution<double> dist(0.5, 3.5);
    for (int trial = 0; trial < 1000; ++trial) {
        BinaryMask p(10, 10), g(10, 10);
        for (int k = count(rng); k > 0; --k) p.set(coord(rng), coord(rng), true);
        for (int k = count(rng); k > 0; --k) g.set(coord(rng), coord(rng), true);
        const double d = dist(rng);
        ASSERT_EQ(match_boundaries(p, g, d).matched, cf_test::exact_matching(p, g, d)) << "trial " << trial;
    }
}

TEST(MatchProperty, SwapIsSymmetric) {
    std::mt19937_64 rng(62);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = cf_test::random_mask(rng, 14, 14, 0.1);
        const auto g = cf_test::random_mask(rng, 14, 14, 0.1);
        const auto ab = match_boundaries(p, g, 1.5);
        const auto ba = match_boundaries(g, p, 1.5);
        EXPECT_EQ(ab.matched, ba.matched);
        EXPECT_EQ(ab.pred_total, ba.gt_total);
        EXPECT_EQ(ab.gt_total, ba.pred_total);
    }
}

TEST(MatchProperty, AddingCorrectPixelNeverLowersRecall) {
    std::mt19937_64 rng(63);
    for (int trial = 0; trial < 200; ++trial) {
        auto p = cf_test::random_mask(rng, 14, 14, 0.08);
        const auto g = cf_test::random_mask(rng, 14, 14, 0.08);
        const auto before = match_boundaries(p, g, 1.0).matched;
        for (int y = 0; y < 14; ++y)
            for (int x = 0; x < 14; ++x)
                if (g.get(y, x) && !p.get(y, x)) {
                    p.set(y, x, true);
                    y = x = 14;
                }
        EXPECT_GE(match_boundaries(p, g, 1.0).matched, before);
    }
}

TEST(Thresholds, GridAndAp) {
    const auto t = threshold_grid(99);
    ASSERT_EQ(t.size(), 99u);
    EXPECT_DOUBLE_EQ(t.front(), 0.01);
    EXPECT_DOUBLE_EQ(t.back(), 0.99);
    // Interpolated precision: (r=0.5, p=1), (r=1, p=0.5) -> 0.5*1 + 0.5*0.5.
    std::vector<PrPoint> pr{{0.9, 1.0, 0.5, 0}, {0.1, 0.5, 1.0, 0}};
    EXPECT_DOUBLE_EQ(average_precision(pr), 0.75);
    // A dip followed by a higher precision at larger recall is interpolated away.
    std::vector<PrPoint> dip{{0.9, 0.4, 0.5, 0}, {0.1, 0.8, 1.0, 0}};
    EXPECT_DOUBLE_EQ(average_precision(dip), 0.8);
}

TEST(Evaluate, PerfectPredictionScoresOne) {
    std::mt19937_64 rng(64);
    std::vector<ScalarField> preds;
    std::vector<std::vector<BinaryMask>> gts;
    for (int i = 0; i < 3; ++i) {
        const auto b = mask_to_boundary(cf_test::random_blob(rng, 40, 8, 14));
        preds.push_back(b.to_field());
        gts.push_back({b});
    }
    const auto r = evaluate_dataset(preds, gts, MatchParams{});
    EXPECT_DOUBLE_EQ(r.mean_mf_ods, 1.0);
    EXPECT_DOUBLE_EQ(r.mean_ap, 1.0);
}

TEST(Evaluate, ZeroPredictionScoresZero) {
    const auto b = mask_to_boundary(disc_mask(30, 30, 15, 15, 8));
    const auto r = evaluate_dataset({ScalarField(30, 30, 1)}, {{b}}, MatchParams{});
    EXPECT_EQ(r.mean_mf_ods, 0.0);
    EXPECT_EQ(r.mean_ap, 0.0);
}

TEST(Evaluate, ClassWithoutGtExcluded) {
    const auto b = mask_to_boundary(disc_mask(30, 30, 15, 15, 8));
    ScalarField pred(30, 30, 2);
    for (int y = 0; y < 30; ++y)
        for (int x = 0; x < 30; ++x) pred.at(0, y, x) = b.get(y, x);
    const auto r = evaluate_dataset({pred}, {{b, BinaryMask(30, 30)}}, MatchParams{});
    EXPECT_EQ(r.excluded_classes, std::vector<int>{1});
    EXPECT_FALSE(r.classes[1].ap);
    EXPECT_DOUBLE_EQ(r.mean_ap, 1.0);
}

TEST(Evaluate, ToyMatchesBruteForceOracle) {
    const auto oracle = nlohmann::json::parse(io::read_file(cf_test::fixture("eval_toy/oracle.json")));
    const auto toy = load_toy();
    MatchParams mp;
    mp.tolerance_fraction = oracle["tolerance_fraction"].get<double>();
    const auto r = evaluate_dataset(toy.preds, toy.gts, mp);
    EXPECT_NEAR(r.mean_mf_ods, oracle["mean_mf_ods"].get<double>(), 1e-12);
    EXPECT_NEAR(r.mean_ap, oracle["mean_ap"].get<double>(), 1e-12);
    for (const auto& oc : oracle["classes"]) {
        const auto& c = r.classes.at(oc["class"].get<int>());
        EXPECT_NEAR(*c.mf_ods, oc["mf_ods"].get<double>(), 1e-12);
        EXPECT_NEAR(*c.ap, oc["ap"].get<double>(), 1e-12);
        ASSERT_EQ(c.pr.size(), oc["pr"].size());
        for (std::size_t i = 0; i < c.pr.size(); ++i) {
            EXPECT_NEAR(c.pr[i].threshold, oc["pr"][i][0].get<double>(), 1e-12);
            EXPECT_NEAR(c.pr[i].precision, oc["pr"][i][1].get<double>(), 1e-12);
            EXPECT_NEAR(c.pr[i].recall, oc["pr"][i][2].get<double>(), 1e-12);
        }
    }
}

TEST(EvaluateProperty, ThreadCountDoesNotChangeResult) {
    const auto toy = load_toy();
    MatchParams one, many;
    one.tolerance_fraction = many.tolerance_fraction = 0.1;
    many.threads = 4;
    EXPECT_EQ(evaluate_dataset(toy.preds, toy.gts, one).to_json().dump(),
              evaluate_dataset(toy.preds, toy.gts, many).to_json().dump());
}

TEST(EvaluateProperty, OdsDominatesEveryThresholdAndBounded) {
    std::mt19937_64 rng(65);
    std::vector<ScalarField> preds;
    std::vector<std::vector<BinaryMask>> gts;
    for (int i = 0; i < 4; ++i) {
        preds.push_back(cf_test::random_field(rng, 20, 20, 0, 1));
        gts.push_back({mask_to_boundary(cf_test::random_blob(rng, 20, 4, 8))});
    }
    MatchParams mp;
    mp.tolerance_fraction = 0.05;
    mp.thin_predictions = true;
    const auto r = evaluate_dataset(preds, gts, mp);
    for (const auto& pt : r.classes[0].pr) {
        EXPECT_GE(pt.precision, 0.0);
        EXPECT_LE(pt.precision, 1.0);
        EXPECT_GE(pt.recall, 0.0);
        EXPECT_LE(pt.recall, 1.0);
        EXPECT_GE(*r.classes[0].mf_ods, pt.f - 1e-12);
    }
}

TEST(EvaluateProperty, SwappingRolesSwapsPrecisionAndRecall) {
    std::mt19937_64 rng(66);
    const auto a = cf_test::random_mask(rng, 16, 16, 0.1), b = cf_test::random_mask(rng, 16, 16, 0.1);
    MatchParams mp;
    mp.tolerance_fraction = 0.05;
    const auto ab = evaluate_dataset({a.to_field()}, {{b}}, mp);
    const auto ba = evaluate_dataset({b.to_field()}, {{a}}, mp);
    EXPECT_EQ(ab.classes[0].pr[50].precision, ba.classes[0].pr[50].recall);
    EXPECT_EQ(ab.classes[0].pr[50].recall, ba.classes[0].pr[50].precision);
}

TEST(Evaluate, ParamValidation) {
    MatchParams mp;
    mp.tolerance_fraction = 0;
    EXPECT_THROW(mp.validate(), DomainError);
    EXPECT_THROW(evaluate_dataset({ScalarField(4, 4, 1)}, {}, MatchParams{}), DomainError);
}

TEST(Iou, Examples) {
    const auto a = pixels(4, 4, {{0, 0}, {1, 0}});
    EXPECT_EQ(iou(a, a), 1.0);
    EXPECT_EQ(iou(a, pixels(4, 4, {{3, 3}})), 0.0);
    EXPECT_DOUBLE_EQ(iou(a, pixels(4, 4, {{1, 0}, {2, 0}})), 1.0 / 3);
    EXPECT_EQ(iou(BinaryMask(4, 4), BinaryMask(4, 4)), 1.0);
}

TEST(EvalJson, Shape) {
    const auto toy = load_toy();
    MatchParams mp;
    mp.tolerance_fraction = 0.1;
    const auto r = evaluate_dataset(toy.preds, toy.gts, mp);
    const auto j = r.to_json();
    EXPECT_EQ(j["classes"].size(), 2u);
    EXPECT_TRUE(j.contains("mean_mf_ods"));
    const auto csv = r.pr_csv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 99);
}
