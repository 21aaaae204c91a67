#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "wavehead/metrics.hpp"
#include "wavehead/rng.hpp"

using namespace wavehead;

namespace {

RealMatrix random_stochastic(std::size_t n, std::size_t c, Rng& rng) {
    RealMatrix probs(n, c);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            probs(i, k) = -std::log(1.0 - rng.next_double());
            sum += probs(i, k);
        }
        for (std::size_t k = 0; k < c; ++k) probs(i, k) /= sum;
    }
    return probs;
}

std::vector<std::uint32_t> random_labels(std::size_t n, std::size_t c, Rng& rng) {
    std::vector<std::uint32_t> labels(n);
    for (auto& y : labels) y = static_cast<std::uint32_t>(rng.below(c));
    return labels;
}

RealMatrix two_class_rows(const std::vector<double>& confidences) {
    RealMatrix probs(confidences.size(), 2);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        probs(i, 0) = confidences[i];
        probs(i, 1) = 1.0 - confidences[i];
    }
    return probs;
}

} // namespace

TEST_CASE("ece hand cases") {
    // Four samples: conf 0.9 twice (one correct), conf 0.7 twice (both correct).
    const RealMatrix probs = two_class_rows({0.9, 0.9, 0.7, 0.7});
    const std::vector<std::uint32_t> labels{0, 1, 0, 0};
    const auto [value, bins] = ece(probs, labels, 15);
    CHECK(value == Catch::Approx(0.35).margin(1e-12));
    CHECK(bins.total == 4);

    // A single certain, correct sample: conf 1.0 lands in the closed top bin.
    const RealMatrix certain = two_class_rows({1.0});
    const auto [zero, single_bins] = ece(certain, {0}, 15);
    CHECK(zero == 0.0);
    CHECK(single_bins.counts[14] == 1);

    // Matching confidence and accuracy in every populated bin.
    const RealMatrix matched = two_class_rows({0.75, 0.75, 0.75, 0.75});
    const std::vector<std::uint32_t> three_right{0, 0, 0, 1};
    CHECK(ece(matched, three_right, 15).first == Catch::Approx(0.0).margin(1e-12));

    CHECK_THROWS_AS(ece(RealMatrix(0, 2), {}, 15), validation_error);
}

TEST_CASE("ece is permutation invariant and bounded") {
    Rng rng(50);
    const RealMatrix probs = random_stochastic(120, 5, rng);
    auto labels = random_labels(120, 5, rng);
    const double base = ece(probs, labels, 15).first;
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);

    std::vector<std::size_t> order(120);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    RealMatrix shuffled(120, 5);
    std::vector<std::uint32_t> shuffled_labels(120);
    for (std::size_t i = 0; i < 120; ++i) {
        std::copy(probs.row(order[i]), probs.row(order[i]) + 5, shuffled.row(i));
        shuffled_labels[i] = labels[order[i]];
    }
    CHECK(ece(shuffled, shuffled_labels, 15).first == Catch::Approx(base).margin(1e-12));
}

TEST_CASE("nll hand cases") {
    RealMatrix onehot(2, 3);
    onehot(0, 1) = 1.0;
    onehot(1, 2) = 1.0;
    CHECK(nll(onehot, {1, 2}) == 0.0);

    RealMatrix uniform(1, 10, 0.1);
    CHECK(nll(uniform, {4}) == Catch::Approx(2.302585).margin(1e-6));
    CHECK(nll(uniform, {4}) == Catch::Approx(std::log(10.0)).epsilon(1e-12));

    RealMatrix zero(1, 2);
    zero(0, 1) = 1.0;
    CHECK(nll(zero, {0}) == Catch::Approx(27.631).margin(1e-3));
}

TEST_CASE("brier hand cases") {
    RealMatrix onehot(1, 4);
    onehot(0, 2) = 1.0;
    CHECK(brier(onehot, {2}) == 0.0);

    RealMatrix uniform(1, 10, 0.1);
    CHECK(brier(uniform, {0}) == Catch::Approx(0.90).margin(1e-12));

    RealMatrix confident_wrong(1, 2);
    confident_wrong(0, 0) = 1.0;
    CHECK(brier(confident_wrong, {1}) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("brier equals the sum of per-class binary decompositions") {
    Rng rng(51);
    const RealMatrix probs = random_stochastic(80, 6, rng);
    const auto labels = random_labels(80, 6, rng);
    double decomposed = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
        double class_term = 0.0;
        for (std::size_t i = 0; i < 80; ++i) {
            const double target = labels[i] == k ? 1.0 : 0.0;
            class_term += (probs(i, k) - target) * (probs(i, k) - target);
        }
        decomposed += class_term / 80.0;
    }
    CHECK(brier(probs, labels) == Catch::Approx(decomposed).margin(1e-12));
}

TEST_CASE("kl_to_soft hand cases and positivity") {
    Rng rng(52);
    const RealMatrix p = random_stochastic(40, 4, rng);
    CHECK(kl_to_soft(p, p) == Catch::Approx(0.0).margin(1e-12));

    RealMatrix q(1, 2);
    q(0, 0) = 1.0;
    RealMatrix half(1, 2, 0.5);
    CHECK(kl_to_soft(half, q) == Catch::Approx(std::log(2.0)).epsilon(1e-12));

    RealMatrix uniform(3, 5, 0.2);
    CHECK(kl_to_soft(uniform, uniform) == 0.0);

    const RealMatrix other = random_stochastic(40, 4, rng);
    CHECK(kl_to_soft(p, other) > 0.0);

    RealMatrix broken(1, 2, 0.7);  // rows sum to 1.4
    CHECK_THROWS_AS(kl_to_soft(broken, broken), validation_error);
}

TEST_CASE("auroc hand cases") {
    CHECK(auroc({0.9, 0.8}, {0.7, 0.6}) == 1.0);
    CHECK(auroc({0.9, 0.6}, {0.8, 0.7}) == Catch::Approx(0.5));
    CHECK(auroc({0.8}, {0.8}) == Catch::Approx(0.5));
    CHECK_THROWS_AS(auroc({}, {0.5}), validation_error);
}

TEST_CASE("auroc complement identity") {
    Rng rng(53);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> a(30), b(40);
        for (double& v : a) v = rng.uniform(0.0, 1.0);
        for (double& v : b) v = rng.uniform(0.0, 1.0);
        // A few forced ties.
        b[0] = a[0];
        b[1] = a[1];
        CHECK(auroc(a, b) + auroc(b, a) == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("fpr_at_95_tpr hand cases") {
    std::vector<double> id_hi{0.9, 0.91, 0.92, 0.93};
    std::vector<double> ood_lo{0.1, 0.2};
    CHECK(fpr_at_95_tpr(id_hi, ood_lo) == 0.0);

    Rng rng(54);
    std::vector<double> same(50);
    for (double& v : same) v = rng.uniform(0.0, 1.0);
    CHECK(fpr_at_95_tpr(same, same) >= 0.95);
}

TEST_CASE("fpr_at_95_tpr matches the exhaustive threshold scan") {
    Rng rng(55);
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> id(20), ood(25);
        for (double& v : id) v = rng.uniform(0.0, 1.0);
        for (double& v : ood) v = rng.uniform(-0.2, 0.9);
        CHECK(fpr_at_95_tpr(id, ood) ==
              Catch::Approx(oracles::naive_fpr95(id, ood)).margin(1e-15));
    }
}

TEST_CASE("msp_score") {
    const double row[3] = {0.7, 0.2, 0.1};
    CHECK(msp_score(row, 3) == 0.7);
    RealMatrix uniform(1, 10, 0.1);
    CHECK(msp_scores(uniform)[0] == Catch::Approx(0.1));
    const double onehot[4] = {0.0, 1.0, 0.0, 0.0};
    CHECK(msp_score(onehot, 4) == 1.0);
}

TEST_CASE("all metrics agree with the brute-force oracles on random batches") {
    Rng rng(56);
    for (int batch = 0; batch < 50; ++batch) {
        const std::size_t n = 1 + rng.below(200);
        const std::size_t c = 2 + rng.below(9);
        const RealMatrix probs = random_stochastic(n, c, rng);
        const auto labels = random_labels(n, c, rng);
        const RealMatrix soft = random_stochastic(n, c, rng);

        CHECK(ece(probs, labels, 15).first ==
              Catch::Approx(oracles::naive_ece(probs, labels, 15)).margin(1e-10));
        CHECK(nll(probs, labels) ==
              Catch::Approx(oracles::naive_nll(probs, labels)).margin(1e-10));
        CHECK(brier(probs, labels) ==
              Catch::Approx(oracles::naive_brier(probs, labels)).margin(1e-10));
        CHECK(kl_to_soft(probs, soft) ==
              Catch::Approx(oracles::naive_kl(probs, soft)).margin(1e-10));

        const std::size_t n_id = 1 + rng.below(60);
        const std::size_t n_ood = 1 + rng.below(60);
        std::vector<double> id(n_id), ood(n_ood);
        for (double& v : id) v = rng.uniform(0.0, 1.0);
        for (double& v : ood) v = rng.uniform(-0.5, 1.0);
        if (n_id > 2 && n_ood > 2) ood[0] = id[0];  // force a tie sometimes
        CHECK(auroc(id, ood) == Catch::Approx(oracles::naive_auroc(id, ood)).margin(1e-10));
        CHECK(fpr_at_95_tpr(id, ood) ==
              Catch::Approx(oracles::naive_fpr95(id, ood)).margin(1e-10));
    }
}

TEST_CASE("evaluate_predictions bundles the calibration metrics") {
    Rng rng(57);
    const RealMatrix probs = random_stochastic(60, 4, rng);
    const auto labels = random_labels(60, 4, rng);
    const RealMatrix soft = random_stochastic(60, 4, rng);
    const CalibrationReport r = evaluate_predictions(probs, labels, &soft, 15);
    CHECK(r.ece == ece(probs, labels, 15).first);
    CHECK(r.nll == nll(probs, labels));
    CHECK(r.brier == brier(probs, labels));
    REQUIRE(r.kl_to_soft.has_value());
    CHECK(*r.kl_to_soft == kl_to_soft(probs, soft));
    CHECK(r.bins.bin_count == 15);
}
