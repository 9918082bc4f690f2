#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "ecgmix/metrics.hpp"

using namespace ecgmix;

TEST_CASE("kfold splits 100 samples into 10 folds of 10") {
    std::vector<std::vector<std::uint8_t>> labels(100, std::vector<std::uint8_t>{0, 1});
    const auto plan = stratified_kfold(labels, 10, 7);
    REQUIRE(plan.folds.size() == 10);
    for (const auto& fold : plan.folds) REQUIRE(fold.size() == 10);
}

TEST_CASE("kfold stratifies a 50/50 single-label dataset") {
    std::vector<std::vector<std::uint8_t>> labels;
    for (int i = 0; i < 100; ++i) labels.push_back({static_cast<std::uint8_t>(i < 50 ? 1 : 0)});
    const auto plan = stratified_kfold(labels, 10, 3);
    for (const auto& fold : plan.folds) {
        int positives = 0;
        for (auto s : fold) positives += labels[s][0];
        REQUIRE(positives == 5);
    }
}

TEST_CASE("kfold folds are disjoint and cover all ids") {
    rng r(5);
    std::vector<std::vector<std::uint8_t>> labels;
    for (int i = 0; i < 137; ++i) {
        std::vector<std::uint8_t> row(6);
        for (auto& v : row) v = r.uniform() < 0.25 ? 1 : 0;
        labels.push_back(row);
    }
    const auto plan = stratified_kfold(labels, 10, 11);
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& fold : plan.folds) {
        total += fold.size();
        for (auto s : fold) REQUIRE(seen.insert(s).second);
        REQUIRE((fold.size() == 13 || fold.size() == 14));
    }
    REQUIRE(total == 137);
}

TEST_CASE("kfold positive counts per fold are near-proportional") {
    rng r(6);
    std::vector<std::vector<std::uint8_t>> labels;
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint8_t> row(4);
        for (std::size_t l = 0; l < 4; ++l) row[l] = r.uniform() < (0.1 + 0.15 * static_cast<double>(l)) ? 1 : 0;
        labels.push_back(row);
    }
    const int k = 5;
    const auto plan = stratified_kfold(labels, k, 13);
    for (std::size_t l = 0; l < 4; ++l) {
        int total = 0;
        for (const auto& row : labels) total += row[l];
        for (const auto& fold : plan.folds) {
            int pos = 0;
            for (auto s : fold) pos += labels[s][l];
            REQUIRE(std::abs(pos - static_cast<double>(total) / k) <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("kfold is deterministic per seed") {
    std::vector<std::vector<std::uint8_t>> labels(40, std::vector<std::uint8_t>{1, 0});
    const auto a = stratified_kfold(labels, 4, 9);
    const auto b = stratified_kfold(labels, 4, 9);
    REQUIRE(a.folds == b.folds);
    const auto c = stratified_kfold(labels, 4, 10);
    REQUIRE(a.folds != c.folds);
}

TEST_CASE("kfold rejects more folds than samples") {
    std::vector<std::vector<std::uint8_t>> labels(3, std::vector<std::uint8_t>{1});
    REQUIRE_THROWS_AS(stratified_kfold(labels, 10, 1), config_error);
}

TEST_CASE("perfect predictions score macro-F1 of 1") {
    std::vector<std::vector<double>> probs = {{0.9, 0.1}, {0.1, 0.9}, {0.9, 0.9}};
    std::vector<std::vector<std::uint8_t>> truth = {{1, 0}, {0, 1}, {1, 1}};
    const auto rep = evaluate(probs, truth, 0.3);
    REQUIRE(rep.macro_f1 == 1.0);
    REQUIRE(rep.mean_auroc == 1.0);
}

TEST_CASE("all-negative predictions have zero recall and F1") {
    std::vector<std::vector<double>> probs = {{0.1}, {0.1}, {0.1}};
    std::vector<std::vector<std::uint8_t>> truth = {{1}, {0}, {1}};
    const auto rep = evaluate(probs, truth, 0.3);
    REQUIRE(rep.per_label[0].recall == 0.0);
    REQUIRE(rep.per_label[0].f1 == 0.0);
}

TEST_CASE("F1 from pinned confusion counts") {
    // TP=2 FP=1 FN=1 -> F1 = 2*2 / (2*2 + 1 + 1) = 2/3
    std::vector<std::vector<double>> probs = {{0.9}, {0.9}, {0.9}, {0.1}, {0.1}};
    std::vector<std::vector<std::uint8_t>> truth = {{1}, {1}, {0}, {1}, {0}};
    const auto rep = evaluate(probs, truth, 0.3);
    REQUIRE(rep.per_label[0].tp == 2);
    REQUIRE(rep.per_label[0].fp == 1);
    REQUIRE(rep.per_label[0].fn == 1);
    REQUIRE(rep.per_label[0].f1 == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("labels with no positives report F1 0 with a flag") {
    std::vector<std::vector<double>> probs = {{0.9}, {0.2}};
    std::vector<std::vector<std::uint8_t>> truth = {{0}, {0}};
    const auto rep = evaluate(probs, truth, 0.3);
    REQUIRE(rep.per_label[0].no_positives);
    REQUIRE(rep.per_label[0].f1 == 0.0);
    REQUIRE_FALSE(rep.per_label[0].auroc_defined);
    REQUIRE(rep.per_label[0].auroc == 0.5);
}

TEST_CASE("evaluate is invariant under permutation of samples") {
    rng r(15);
    std::vector<std::vector<double>> probs;
    std::vector<std::vector<std::uint8_t>> truth;
    for (int i = 0; i < 60; ++i) {
        probs.push_back({r.uniform(), r.uniform(), r.uniform()});
        truth.push_back({static_cast<std::uint8_t>(r.uniform() < 0.4),
                         static_cast<std::uint8_t>(r.uniform() < 0.4),
                         static_cast<std::uint8_t>(r.uniform() < 0.4)});
    }
    const auto a = evaluate(probs, truth, 0.3);
    std::vector<std::size_t> perm(probs.size());
    std::iota(perm.begin(), perm.end(), 0);
    r.shuffle(perm.begin(), perm.end());
    std::vector<std::vector<double>> probs2;
    std::vector<std::vector<std::uint8_t>> truth2;
    for (auto i : perm) {
        probs2.push_back(probs[i]);
        truth2.push_back(truth[i]);
    }
    const auto b = evaluate(probs2, truth2, 0.3);
    REQUIRE(a.macro_f1 == Catch::Approx(b.macro_f1).epsilon(1e-12));
    REQUIRE(a.mean_auroc == Catch::Approx(b.mean_auroc).epsilon(1e-12));
}

TEST_CASE("macro F1 is the mean of per-label F1 and metrics stay in [0,1]") {
    rng r(16);
    std::vector<std::vector<double>> probs;
    std::vector<std::vector<std::uint8_t>> truth;
    for (int i = 0; i < 50; ++i) {
        probs.push_back({r.uniform(), r.uniform()});
        truth.push_back({static_cast<std::uint8_t>(r.uniform() < 0.5),
                         static_cast<std::uint8_t>(r.uniform() < 0.2)});
    }
    const auto rep = evaluate(probs, truth, 0.3);
    double f1_sum = 0.0;
    for (const auto& m : rep.per_label) {
        f1_sum += m.f1;
        for (double v : {m.precision, m.recall, m.f1, m.auroc}) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
    REQUIRE(rep.macro_f1 == Catch::Approx(f1_sum / 2.0));
}

TEST_CASE("mismatched shapes raise alignment errors") {
    std::vector<std::vector<double>> probs = {{0.5}};
    std::vector<std::vector<std::uint8_t>> truth = {{0}, {1}};
    REQUIRE_THROWS_AS(evaluate(probs, truth, 0.3), alignment_error);
    REQUIRE_THROWS_AS(align_ids({"a", "b"}, {"a", "c"}), alignment_error);
    const auto order = align_ids({"b", "a"}, {"a", "b"});
    REQUIRE(order == std::vector<std::size_t>{1, 0});
}

TEST_CASE("welch t on identical samples is t=0, p=1") {
    const std::vector<double> a = {1.0, 2.0, 3.0};
    const auto r = welch_t(a, a);
    REQUIRE(r.t == 0.0);
    REQUIRE(r.p == Catch::Approx(1.0));
}

TEST_CASE("welch t matches the classic shifted-sample oracle") {
    // frozen with an independent t-distribution CDF evaluation
    const std::vector<double> a = {1, 2, 3, 4, 5};
    const std::vector<double> b = {2, 3, 4, 5, 6};
    const auto r = welch_t(a, b);
    REQUIRE(r.t == Catch::Approx(-1.0).epsilon(1e-12));
    REQUIRE(r.df == Catch::Approx(8.0).epsilon(1e-12));
    REQUIRE(r.p == Catch::Approx(0.3465935071).epsilon(1e-8));
}

TEST_CASE("welch t second frozen oracle with unequal sizes") {
    const std::vector<double> a = {3.1, 2.9, 3.4, 3.0, 3.3, 2.8};
    const std::vector<double> b = {2.5, 2.7, 2.2, 2.6};
    const auto r = welch_t(a, b);
    REQUIRE(r.t == Catch::Approx(4.0631802769).epsilon(1e-8));
    REQUIRE(r.df == Catch::Approx(6.9221291276).epsilon(1e-8));
    REQUIRE(r.p == Catch::Approx(0.0049045322).epsilon(1e-6));
}

TEST_CASE("student t distribution spot values") {
    REQUIRE(student_t_cdf(-1.0, 8.0) == Catch::Approx(0.173296753544).epsilon(1e-9));
    REQUIRE(student_t_cdf(2.5, 3.7) == Catch::Approx(0.964088988544).epsilon(1e-9));
}

TEST_CASE("welch t is antisymmetric in its arguments") {
    rng rnd(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> a(6), b(9);
        for (auto& v : a) v = rnd.normal();
        for (auto& v : b) v = rnd.normal() + 0.3;
        const auto ab = welch_t(a, b);
        const auto ba = welch_t(b, a);
        REQUIRE(ab.t == Catch::Approx(-ba.t).margin(1e-14));
        REQUIRE(ab.p == ba.p);  // exact: same |t| and df
        REQUIRE(ab.df == Catch::Approx(ba.df).margin(1e-12));
    }
}

TEST_CASE("welch t degenerate and undersized inputs") {
    REQUIRE_THROWS_AS(welch_t({1.0, 1.0, 1.0}, {2.0, 2.0}), degenerate_variance);
    REQUIRE_THROWS_AS(welch_t({1.0}, {2.0, 3.0}), invalid_input);
    // one-sided zero variance still works
    const auto r = welch_t({1.0, 1.0, 1.0}, {2.0, 3.0, 4.0});
    REQUIRE(std::isfinite(r.t));
    REQUIRE(r.p > 0.0);
}
