#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "wavehead/data.hpp"
#include "wavehead/gradcheck.hpp"
#include "wavehead/training.hpp"

using namespace wavehead;

namespace {

PredictionBatch batch_from_rows(const std::vector<std::vector<double>>& rows) {
    PredictionBatch b;
    b.probs = RealMatrix(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), b.probs.row(i));
    return b;
}

FeatureDataset separable_two_class(std::size_t n, std::uint64_t seed) {
    SyntheticConfig config;
    config.classes = 2;
    config.dim = 4;
    config.n_samples = n;
    config.sigma = 0.3;
    config.mean_scale = 3.0;
    config.name = "separable";
    return generate_synthetic(config, seed);
}

} // namespace

TEST_CASE("cross_entropy hand cases") {
    const auto perfect = batch_from_rows({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(cross_entropy(perfect, {0, 1}) == 0.0);

    const auto uniform = batch_from_rows({std::vector<double>(10, 0.1)});
    CHECK(cross_entropy(uniform, {3}) == Catch::Approx(std::log(10.0)).epsilon(1e-12));

    const auto zero_prob = batch_from_rows({{0.0, 1.0}});
    CHECK(cross_entropy(zero_prob, {0}) == Catch::Approx(-std::log(1e-12)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(uniform, {10}), validation_error);
}

TEST_CASE("phase_variance hand cases") {
    ComplexVector aligned(3);
    aligned.re = {0.5, 1.0, 2.0};  // all phase 0
    CHECK(phase_variance(aligned) == 0.0);

    ComplexVector two_phases(2);
    two_phases.re = {1.0, 0.0};
    two_phases.im = {0.0, 1.0};  // phases {0, pi/2}
    const double quarter_pi = std::atan(1.0);
    CHECK(phase_variance(two_phases) ==
          Catch::Approx(quarter_pi * quarter_pi).epsilon(1e-12));
    CHECK(phase_variance(two_phases) == Catch::Approx(0.61685).margin(5e-6));

    // Components below the magnitude floor are excluded.
    ComplexVector mostly_dead(3);
    mostly_dead.re = {1.0, 1e-15, 0.0};
    mostly_dead.im = {0.0, 1e-15, 1e-14};
    CHECK(phase_variance(mostly_dead) == 0.0);
}

TEST_CASE("ramp_weight schedule") {
    TrainSchedule s;
    s.epochs = 30;
    s.warmup_epochs = 8;
    s.ramp_epochs = 5;
    s.lambda = 0.01;
    CHECK(ramp_weight(1, s) == 0.0);
    CHECK(ramp_weight(8, s) == 0.0);  // guard is strictly t > T_w
    CHECK(ramp_weight(13, s) == Catch::Approx(0.01));
    CHECK(ramp_weight(20, s) == Catch::Approx(0.01));  // saturated
    // Midpoint of the ramp: t = T_w + T_r/2 with T_r = 4.
    s.ramp_epochs = 4;
    CHECK(ramp_weight(10, s) == Catch::Approx(0.005));
    CHECK_THROWS_AS(ramp_weight(0, s), validation_error);
}

TEST_CASE("backward: classifier bias gradient at uniform output") {
    const HeadDims dims{5, 4, 4, 0};
    HeadParameters p = build_head(HeadVariant::NoBorn, dims, 3);  // cls_w = cls_b = 0

    Rng rng(10);
    RealMatrix f(12, 5);
    for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
    std::vector<std::uint32_t> y(12);
    for (auto& label : y) label = static_cast<std::uint32_t>(rng.below(4));

    const auto result = backward(p, f, y, 0.0);
    std::vector<std::size_t> counts(4, 0);
    for (auto label : y) counts[label] += 1;
    for (std::size_t k = 0; k < 4; ++k) {
        const double expected = 0.25 - static_cast<double>(counts[k]) / 12.0;
        CHECK(result.grads.cls_b[k] == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("backward: generator gradient is antisymmetric (symmetric directions vanish)") {
    const HeadDims dims{5, 4, 3, 0};
    HeadParameters p = build_head(HeadVariant::FullWave, dims, 5);
    p.unitary_gen = RealMatrix(4, 4);  // A = 0

    Rng rng(11);
    RealMatrix f(10, 5);
    for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
    std::vector<std::uint32_t> y(10);
    for (auto& label : y) label = static_cast<std::uint32_t>(rng.below(3));

    const auto result = backward(p, f, y, 0.02);
    const RealMatrix& g = result.grads.unitary_gen;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(g(i, j) == Catch::Approx(-g(j, i)).margin(1e-15));
}

TEST_CASE("gradient check: every variant, every tensor, seed 42") {
    for (const HeadVariant v : all_head_variants()) {
        const GradCheckReport report = gradient_check(v, 42);
        INFO("variant " << to_string(v) << " worst rel err " << report.worst_rel_err);
        CHECK(report.pass);
        for (const auto& t : report.tensors) {
            INFO(to_string(v) << "/" << t.name << ": " << t.max_rel_err);
            CHECK(t.max_rel_err < 1e-4);
        }
    }
}

TEST_CASE("gradient check holds on further seeds for the complex variants") {
    for (const HeadVariant v : {HeadVariant::FullWave, HeadVariant::NoBorn}) {
        for (const std::uint64_t seed : {123ull, 456ull}) {
            const GradCheckReport report = gradient_check(v, seed);
            INFO("variant " << to_string(v) << " seed " << seed);
            CHECK(report.pass);
        }
    }
}

TEST_CASE("adam_step: hand-computed first step and zero-gradient behaviour") {
    HeadParameters p = build_head(HeadVariant::Softmax, HeadDims{1, 0, 1, 0}, 0);
    p.cls_w(0, 0) = 0.0;
    p.cls_b[0] = 0.0;
    AdamState state = AdamState::init(p);

    Gradients g = Gradients::zeros_like(p);
    g.cls_w(0, 0) = 1.0;  // cls_b gradient stays zero

    adam_step(p, g, state, 1e-3);
    CHECK(state.step == 1);
    // Bias-corrected m_hat = v_hat = 1, so the step is lr / (1 + eps).
    CHECK(p.cls_w(0, 0) == Catch::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.cls_b[0] == 0.0);  // zero gradient, zero moments: unchanged

    // Fresh state, all-zero gradient: parameters stay put, the counter moves.
    HeadParameters q = build_head(HeadVariant::Softmax, HeadDims{1, 0, 1, 0}, 0);
    q.cls_w(0, 0) = 0.25;
    AdamState fresh = AdamState::init(q);
    Gradients zero = Gradients::zeros_like(q);
    adam_step(q, zero, fresh, 1e-3);
    CHECK(fresh.step == 1);
    CHECK(q.cls_w(0, 0) == 0.25);
}

TEST_CASE("adam trajectories are bit-identical across reruns") {
    auto run = [](std::uint64_t seed) {
        HeadParameters p = build_head(HeadVariant::Softmax2x, HeadDims{4, 0, 3, 5}, seed);
        AdamState state = AdamState::init(p);
        Rng rng(seed);
        RealMatrix f(16, 4);
        for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
        std::vector<std::uint32_t> y(16);
        for (auto& label : y) label = static_cast<std::uint32_t>(rng.below(3));
        for (int step = 0; step < 25; ++step) {
            auto result = backward(p, f, y, 0.0);
            adam_step(p, result.grads, state, 1e-3);
        }
        return p;
    };
    const HeadParameters a = run(7);
    const HeadParameters b = run(7);
    CHECK(a.hid_w.data == b.hid_w.data);
    CHECK(a.cls_w.data == b.cls_w.data);
    CHECK(a.cls_b == b.cls_b);
}

TEST_CASE("the Cayley parameterisation keeps the unitary exact at every step") {
    const HeadDims dims{6, 5, 3, 0};
    HeadParameters p = build_head(HeadVariant::FullWave, dims, 9);
    AdamState state = AdamState::init(p);

    Rng rng(12);
    RealMatrix f(20, 6);
    for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
    std::vector<std::uint32_t> y(20);
    for (auto& label : y) label = static_cast<std::uint32_t>(rng.below(3));

    for (int step = 0; step < 30; ++step) {
        auto result = backward(p, f, y, 0.01);
        adam_step(p, result.grads, state, 5e-2);  // aggressive steps on purpose
        const RealMatrix u = cayley(skew_symmetrize(p.unitary_gen));
        const RealMatrix gram = matmul(transpose(u), u);
        double defect = 0.0;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                defect = std::max(defect, std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)));
        CHECK(defect < 1e-10);
    }
}

TEST_CASE("train: softmax head solves a separable two-class problem") {
    SyntheticConfig config;
    config.classes = 2;
    config.dim = 4;
    config.n_samples = 600;
    config.sigma = 0.3;
    config.mean_scale = 6.0;  // wide margin, solvable well within 30 epochs
    config.name = "separable-wide";
    const FeatureDataset data = generate_synthetic(config, 21);

    TrainSchedule schedule;
    schedule.epochs = 30;
    schedule.warmup_epochs = 8;
    schedule.batch_size = 64;
    schedule.learning_rate = 3e-3;
    const HeadDims dims{4, 0, 2, 0};
    const TrainResult result = train(HeadVariant::Softmax, dims, data, schedule, 42);
    CHECK(result.epoch_loss.back() < 0.1);
    CHECK(result.epoch_loss.back() < result.epoch_loss.front());
}

TEST_CASE("train: lambda = 0 makes the warmup schedule inert") {
    const FeatureDataset data = separable_two_class(300, 22);
    const HeadDims dims{4, 3, 2, 0};
    TrainSchedule early;
    early.epochs = 10;
    early.warmup_epochs = 0;
    early.lambda = 0.0;
    early.batch_size = 50;
    TrainSchedule late = early;
    late.warmup_epochs = 9;

    const TrainResult a = train(HeadVariant::ComplexLinear, dims, data, early, 77);
    const TrainResult b = train(HeadVariant::ComplexLinear, dims, data, late, 77);
    REQUIRE(a.epoch_loss.size() == b.epoch_loss.size());
    for (std::size_t e = 0; e < a.epoch_loss.size(); ++e)
        CHECK(a.epoch_loss[e] == b.epoch_loss[e]);
}

TEST_CASE("train is deterministic per seed") {
    const FeatureDataset data = separable_two_class(300, 23);
    const HeadDims dims{4, 3, 2, 0};
    TrainSchedule schedule;
    schedule.epochs = 6;
    schedule.warmup_epochs = 2;
    schedule.ramp_epochs = 2;
    schedule.batch_size = 50;

    const TrainResult a = train(HeadVariant::FullWave, dims, data, schedule, 123);
    const TrainResult b = train(HeadVariant::FullWave, dims, data, schedule, 123);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(a.params.proj_re.data == b.params.proj_re.data);
    CHECK(a.params.unitary_gen.data == b.params.unitary_gen.data);

    const TrainResult c = train(HeadVariant::FullWave, dims, data, schedule, 124);
    CHECK(a.epoch_loss != c.epoch_loss);
}

TEST_CASE("FullWave with frozen zero generator matches NoUnitary exactly") {
    const FeatureDataset data = separable_two_class(240, 24);
    const std::size_t epochs = 5;
    const std::size_t batch = 60;
    const std::uint64_t seed = 31;
    const HeadDims dims{4, 3, 2, 0};

    HeadParameters full = build_head(HeadVariant::FullWave, dims, seed);
    full.unitary_gen = RealMatrix(3, 3);  // A = 0, frozen below
    HeadParameters bare = build_head(HeadVariant::NoUnitary, dims, seed);
    AdamState full_state = AdamState::init(full);
    AdamState bare_state = AdamState::init(bare);

    // Mirror train()'s batch schedule with a shared shuffle stream.
    Rng full_shuffle(derive_stream(seed, "train/shuffle"));
    Rng bare_shuffle(derive_stream(seed, "train/shuffle"));
    std::vector<std::size_t> full_order(data.size());
    std::vector<std::size_t> bare_order(data.size());
    std::iota(full_order.begin(), full_order.end(), 0);
    std::iota(bare_order.begin(), bare_order.end(), 0);

    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
        full_shuffle.shuffle(full_order);
        bare_shuffle.shuffle(bare_order);
        REQUIRE(full_order == bare_order);
        for (std::size_t start = 0; start < data.size(); start += batch) {
            const std::size_t count = std::min(batch, data.size() - start);
            RealMatrix f(count, 4);
            std::vector<std::uint32_t> y(count);
            for (std::size_t r = 0; r < count; ++r) {
                const std::size_t src = full_order[start + r];
                std::copy(data.features.row(src), data.features.row(src) + 4, f.row(r));
                y[r] = data.labels[src];
            }
            auto full_step = backward(full, f, y, 0.0);
            auto bare_step = backward(bare, f, y, 0.0);
            CHECK(full_step.loss == bare_step.loss);
            for (double& v : full_step.grads.unitary_gen.data) v = 0.0;  // freeze A
            adam_step(full, full_step.grads, full_state, 1e-3);
            adam_step(bare, bare_step.grads, bare_state, 1e-3);
        }
    }
    CHECK(full.proj_re.data == bare.proj_re.data);
    CHECK(full.proj_im.data == bare.proj_im.data);
    for (std::size_t k = 0; k < full.measurements.count(); ++k) {
        CHECK(full.measurements.vectors[k].re == bare.measurements.vectors[k].re);
        CHECK(full.measurements.vectors[k].im == bare.measurements.vectors[k].im);
    }
}

TEST_CASE("train aborts with a batch diagnostic on degenerate states") {
    FeatureDataset data = separable_two_class(64, 25);
    for (std::size_t j = 0; j < data.dim(); ++j) data.features(5, j) = 0.0;  // unprojectable row

    TrainSchedule schedule;
    schedule.epochs = 2;
    schedule.warmup_epochs = 0;
    schedule.batch_size = 16;
    const HeadDims dims{4, 3, 2, 0};
    try {
        train(HeadVariant::ComplexLinear, dims, data, schedule, 42);
        FAIL("expected a numeric_error");
    } catch (const numeric_error& e) {
        const std::string message = e.what();
        CHECK(message.find("epoch") != std::string::npos);
        CHECK(message.find("batch") != std::string::npos);
    }
}

TEST_CASE("training reduces the loss for every complex variant") {
    const FeatureDataset data = separable_two_class(400, 26);
    TrainSchedule schedule;
    schedule.epochs = 12;
    schedule.warmup_epochs = 4;
    schedule.ramp_epochs = 3;
    schedule.batch_size = 64;
    const HeadDims dims{4, 6, 2, 0};
    for (const HeadVariant v : {HeadVariant::FullWave, HeadVariant::NoBorn,
                                HeadVariant::NoUnitary, HeadVariant::ComplexLinear}) {
        const TrainResult result = train(v, dims, data, schedule, 42);
        INFO("variant " << to_string(v));
        CHECK(result.epoch_loss.back() < result.epoch_loss.front());
    }
}
