#include <catch2/catch_amalgamated.hpp>

#include "faconf/metrics.hpp"
#include "faconf/rng.hpp"

using namespace faconf;

TEST_CASE("confusion counts land in [actual][predicted]") {
    // preds/labels: (pred=1, label=0) twice, (pred=0, label=0) once, (pred=1, label=1) once
    ConfusionMatrix cm = confusion({1, 1, 0, 1}, {0, 0, 0, 1}, 2);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 2);
    CHECK(cm.at(1, 0) == 0);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.n == 4);
    CHECK(cm.row_sum(0) == 3);
    CHECK(cm.col_sum(1) == 3);
}

TEST_CASE("confusion rejects bad input") {
    CHECK_THROWS_AS(confusion({0, 1}, {0}, 2), DataError);
    CHECK_THROWS_AS(confusion({2}, {0}, 2), DataError);
    CHECK_THROWS_AS(confusion({0}, {5}, 2), DataError);
}

TEST_CASE("accuracy and kappa on a worked 2-class example") {
    // counts [[20,5],[10,15]]: acc = 35/50, kappa = (35*50 - 1250)/(2500 - 1250) = 0.4
    ConfusionMatrix cm;
    cm.n_classes = 2;
    cm.counts = {20, 5, 10, 15};
    cm.n = 50;
    CHECK(accuracy(cm) == Catch::Approx(0.7).margin(1e-15));
    CHECK(kappa(cm) == Catch::Approx(0.4).margin(1e-15));
}

TEST_CASE("kappa on a worked 3-class example") {
    // balanced counts [[4,1,0],[1,3,1],[0,1,4]]: kappa = (11*15 - 75)/(225 - 75) = 0.6
    ConfusionMatrix cm;
    cm.n_classes = 3;
    cm.counts = {4, 1, 0, 1, 3, 1, 0, 1, 4};
    cm.n = 15;
    CHECK(accuracy(cm) == Catch::Approx(11.0 / 15.0).margin(1e-15));
    CHECK(kappa(cm) == Catch::Approx(0.6).margin(1e-15));
}

TEST_CASE("kappa edge cases") {
    SECTION("perfect diagonal gives exactly 1") {
        ConfusionMatrix cm;
        cm.n_classes = 2;
        cm.counts = {3, 0, 0, 2};
        cm.n = 5;
        CHECK(kappa(cm) == 1.0);
    }
    SECTION("chance-level uniform table gives exactly 0") {
        ConfusionMatrix cm;
        cm.n_classes = 2;
        cm.counts = {1, 1, 1, 1};
        cm.n = 4;
        CHECK(kappa(cm) == 0.0);
    }
    SECTION("single-class degenerate table is undefined") {
        ConfusionMatrix cm;
        cm.n_classes = 2;
        cm.counts = {4, 0, 0, 0};
        cm.n = 4;
        CHECK_THROWS_AS(kappa(cm), MetricError);
    }
    SECTION("empty matrix is undefined") {
        ConfusionMatrix cm;
        cm.n_classes = 2;
        cm.counts = {0, 0, 0, 0};
        CHECK_THROWS_AS(accuracy(cm), MetricError);
        CHECK_THROWS_AS(kappa(cm), MetricError);
    }
    SECTION("worse-than-chance predictions give negative kappa") {
        ConfusionMatrix cm;
        cm.n_classes = 2;
        cm.counts = {0, 5, 5, 0};
        cm.n = 10;
        CHECK(kappa(cm) == -1.0);
    }
}

TEST_CASE("kappa never exceeds accuracy-implied bounds on random tables") {
    RngState rng(77);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::size_t> preds(40), labels(40);
        for (std::size_t i = 0; i < 40; ++i) {
            preds[i] = rng.below(3);
            labels[i] = rng.below(3);
        }
        ConfusionMatrix cm = confusion(preds, labels, 3);
        bool degenerate = false;
        std::int64_t ab = 0;
        for (std::size_t i = 0; i < 3; ++i) ab += cm.row_sum(i) * cm.col_sum(i);
        degenerate = (ab == cm.n * cm.n);
        if (degenerate) continue;
        const double k = kappa(cm);
        CHECK(k <= 1.0);
        CHECK(k >= -1.0 - 1e-12);
        // kappa and accuracy agree on the sign of (p0 - pe)
        const double pe = static_cast<double>(ab) / static_cast<double>(cm.n * cm.n);
        CHECK(((accuracy(cm) - pe) >= 0) == (k >= 0));
    }
}

TEST_CASE("confusion_csv layout") {
    ConfusionMatrix cm;
    cm.n_classes = 2;
    cm.counts = {20, 5, 10, 15};
    cm.n = 50;
    CHECK(confusion_csv(cm) == "20,5\n10,15\n");
}
