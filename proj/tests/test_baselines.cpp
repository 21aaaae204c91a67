#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wavehead/baselines.hpp"
#include "wavehead/metrics.hpp"
#include "wavehead/rng.hpp"

using namespace wavehead;

namespace {

// Logits drawn from a model, labels sampled from that model's own softmax:
// the NLL-optimal temperature is 1 by construction (up to sampling noise).
struct CalibratedSample {
    RealMatrix logits;
    std::vector<std::uint32_t> labels;
};

CalibratedSample sample_from_own_softmax(std::size_t n, std::size_t c, Rng& rng) {
    CalibratedSample out;
    out.logits = RealMatrix(n, c);
    out.labels.resize(n);
    std::vector<double> probs(c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) out.logits(i, k) = rng.gaussian() * 1.5;
        softmax_row(out.logits.row(i), probs.data(), c);
        const double u = rng.next_double();
        double cum = 0.0;
        std::uint32_t label = static_cast<std::uint32_t>(c - 1);
        for (std::size_t k = 0; k < c; ++k) {
            cum += probs[k];
            if (u < cum) {
                label = static_cast<std::uint32_t>(k);
                break;
            }
        }
        out.labels[i] = label;
    }
    return out;
}

// 1-D grid-search oracle for the NLL-minimising temperature.
double grid_search_temperature(const RealMatrix& logits,
                               const std::vector<std::uint32_t>& labels) {
    double best_t = 1.0;
    double best_nll = std::numeric_limits<double>::infinity();
    for (double t = 0.05; t <= 10.0; t += 0.001) {
        const double score = nll(apply_temperature({t, ""}, logits).probs, labels);
        if (score < best_nll) {
            best_nll = score;
            best_t = t;
        }
    }
    return best_t;
}

} // namespace

TEST_CASE("fit_temperature recovers T = 1 on self-consistent logits") {
    Rng rng(60);
    const auto sample = sample_from_own_softmax(4000, 5, rng);
    const TemperatureModel model = fit_temperature(sample.logits, sample.labels, "cal-split");
    CHECK(model.temperature == Catch::Approx(1.0).margin(0.05));
    CHECK(model.fitted_on == "cal-split");
    CHECK(model.temperature ==
          Catch::Approx(grid_search_temperature(sample.logits, sample.labels)).margin(2e-3));
}

TEST_CASE("fit_temperature recovers a known scale factor") {
    Rng rng(61);
    auto sample = sample_from_own_softmax(4000, 5, rng);
    for (double& z : sample.logits.data) z *= 3.0;
    const TemperatureModel model = fit_temperature(sample.logits, sample.labels);
    CHECK(model.temperature == Catch::Approx(3.0).margin(0.15));
    CHECK(model.temperature ==
          Catch::Approx(grid_search_temperature(sample.logits, sample.labels)).margin(2e-3));
}

TEST_CASE("fit_temperature rejects empty input and stays in bounds") {
    CHECK_THROWS_AS(fit_temperature(RealMatrix(0, 3), {}), validation_error);

    Rng rng(62);
    const auto sample = sample_from_own_softmax(50, 3, rng);
    const TemperatureModel model = fit_temperature(sample.logits, sample.labels);
    CHECK(model.temperature >= 0.05);
    CHECK(model.temperature <= 10.0);
}

TEST_CASE("apply_temperature identity, uniform limit, argmax preservation") {
    Rng rng(63);
    RealMatrix logits(200, 6);
    for (double& z : logits.data) z = rng.uniform(-4.0, 4.0);

    const PredictionBatch at_one = apply_temperature({1.0, ""}, logits);
    RealMatrix plain(200, 6);
    for (std::size_t i = 0; i < 200; ++i) softmax_row(logits.row(i), plain.row(i), 6);
    for (std::size_t i = 0; i < plain.data.size(); ++i)
        CHECK(at_one.probs.data[i] == plain.data[i]);

    const PredictionBatch hot = apply_temperature({100.0, ""}, logits);
    for (std::size_t i = 0; i < 200; ++i)
        CHECK(msp_score(hot.probs.row(i), 6) == Catch::Approx(1.0 / 6.0).margin(1e-2));

    for (const double t : {0.5, 2.0, 5.0}) {
        const PredictionBatch scaled = apply_temperature({t, ""}, logits);
        for (std::size_t i = 0; i < 200; ++i)
            CHECK(argmax_row(scaled.probs.row(i), 6) == argmax_row(plain.row(i), 6));
    }

    CHECK_THROWS_AS(apply_temperature({0.0, ""}, logits), validation_error);
}

TEST_CASE("energy_score hand cases") {
    std::vector<double> zeros(10, 0.0);
    CHECK(energy_score(zeros.data(), 10) == Catch::Approx(-std::log(10.0)).epsilon(1e-12));

    std::vector<double> spiked(10, 0.0);
    spiked[0] = 10.0;
    CHECK(energy_score(spiked.data(), 10) ==
          Catch::Approx(-std::log(std::exp(10.0) + 9.0)).epsilon(1e-12));
    CHECK(energy_score(spiked.data(), 10) == Catch::Approx(-10.0004).margin(1e-4));
}

TEST_CASE("energy_score is shift-equivariant") {
    Rng rng(64);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> z(7);
        for (double& v : z) v = rng.uniform(-5.0, 5.0);
        const double base = energy_score(z.data(), 7);
        const double shift = rng.uniform(-10.0, 10.0);
        std::vector<double> shifted = z;
        for (double& v : shifted) v += shift;
        CHECK(energy_score(shifted.data(), 7) == Catch::Approx(base - shift).margin(1e-12));
    }
}
