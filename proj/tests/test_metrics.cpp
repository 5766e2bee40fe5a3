#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sad/metrics.hpp"
#include "sad/rng.hpp"

using namespace sad;

TEST_CASE("auc_roc: pinned rankings") {
    CHECK(auc_roc({0.9, 0.1}, {1, 0}) == 1.0);
    CHECK(auc_roc({0.1, 0.9}, {1, 0}) == 0.0);
    CHECK(auc_roc({0.4, 0.4, 0.4}, {1, 0, 1}) == 0.5);
}

TEST_CASE("auc_roc: single-class inputs rejected with a diagnostic") {
    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(auc_roc({0.1}, {2}), std::invalid_argument);
    CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {1}), std::invalid_argument);
}

TEST_CASE("auc_roc equals the pairwise oracle on random instances with ties") {
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        const size_t n = 2 + rng.below(199);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        bool pos = false, neg = false;
        for (size_t i = 0; i < n; ++i) {
            // coarse grid forces plenty of ties
            scores[i] = std::floor(rng.uniform(0.0, 6.0)) / 3.0;
            labels[i] = static_cast<int>(rng.below(2));
            (labels[i] == 1 ? pos : neg) = true;
        }
        if (!pos) labels[0] = 1;
        if (!neg) labels[n - 1] = 0;
        CHECK(std::fabs(auc_roc(scores, labels) - oracles::pairwise_auc(scores, labels)) < 1e-12);
    }
}

TEST_CASE("auc_roc is invariant under strictly increasing score transforms") {
    Rng rng(67);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 10 + rng.below(80);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (size_t i = 0; i < n; ++i) {
            scores[i] = rng.normal();
            labels[i] = static_cast<int>(rng.below(2));
        }
        labels[0] = 1;
        labels[1] = 0;
        const double base = auc_roc(scores, labels);
        std::vector<double> warped = scores;
        for (double& s : warped) s = std::exp(0.5 * s) + 3.0;
        CHECK(auc_roc(warped, labels) == doctest::Approx(base).epsilon(1e-12));
        for (double& s : warped) s = 2.0 * s - 100.0;
        CHECK(auc_roc(warped, labels) == doctest::Approx(base).epsilon(1e-12));
    }
}
