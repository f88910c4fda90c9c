#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <doctest.h>

#include "caedet/dataset.hpp"
#include "caedet/rng.hpp"
#include "caedet/svm.hpp"
#include "oracles.hpp"

using namespace caedet;
using namespace caedet::svm;

namespace {

std::vector<LabeledSample> random_instance(int n, int dim, double label_noise, uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledSample> out;
    for (int i = 0; i < n; ++i) {
        LabeledSample s;
        std::vector<double> f(static_cast<size_t>(dim));
        for (double& v : f) v = rng.uniform();
        s.label = f[0] + 0.3 * f[dim > 1 ? 1 : 0] > 0.65 ? +1 : -1;
        if (rng.uniform() < label_noise) s.label = -s.label;
        s.features = Tensor({1, dim, 1}, std::move(f));
        out.push_back(std::move(s));
    }
    // make sure both classes are present
    out[0].label = +1;
    out[1].label = -1;
    return out;
}

}  // namespace

TEST_CASE("separable blobs: perfect accuracy and clean optimality conditions") {
    const BinaryTask task = data::synth_blobs(40, 2, 0.8, 0.05, 17);
    const SvmModel m = train_svm(task.samples, SvmTrainConfig{});
    CHECK(accuracy(m, task.samples) == 1.0);
    CHECK(max_kkt_violation(m, task.samples) <= 1e-3);
}

TEST_CASE("dual objective matches the projected-gradient oracle (smoke)") {
    for (uint64_t seed : {3ull, 4ull}) {
        const auto inst = random_instance(12, 2, 0.2, seed);
        SvmTrainConfig cfg;
        cfg.C = 1.0;
        cfg.rng_seed = seed;
        const SvmModel m = train_svm(inst, cfg);
        const double smo_obj = dual_objective(m, inst);
        const double oracle_obj = oracles::DualQpOracle::from_samples(inst, cfg.C).solve(200000);
        CHECK(std::fabs(smo_obj - oracle_obj) <= 1e-4);
    }
}

TEST_CASE("weight vector equals the dual expansion") {
    const auto inst = random_instance(30, 3, 0.1, 9);
    const SvmModel m = train_svm(inst, SvmTrainConfig{});
    std::vector<double> w(m.w.size(), 0.0);
    for (size_t i = 0; i < inst.size(); ++i)
        for (size_t d = 0; d < w.size(); ++d)
            w[d] += m.alpha[i] * inst[i].label * inst[i].features.data[d];
    for (size_t d = 0; d < w.size(); ++d)
        CHECK(m.w[d] == doctest::Approx(w[d]).epsilon(1e-6));
    for (double a : m.alpha) {
        CHECK(a >= -1e-9);
        CHECK(a <= m.C + 1e-9);
    }
}

TEST_CASE("decision values and the tie rule") {
    SvmModel m;
    m.w = {1.0, 0.0};
    m.b = -0.5;
    const Tensor x({1, 2, 1}, {1.0, 0.0});
    CHECK(decision_value(m, x) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(predict(m, x) == +1);

    SvmModel zero;
    zero.w = {0.0, 0.0};
    zero.b = 0.0;
    CHECK(decision_value(zero, x) == 0.0);
    CHECK(predict(zero, x) == +1);  // ties map to +1

    CHECK_THROWS_AS(decision_value(m, Tensor({1, 3, 1}, {0, 0, 0})), std::invalid_argument);
}

TEST_CASE("input validation") {
    std::vector<LabeledSample> one_class;
    for (int i = 0; i < 5; ++i) {
        LabeledSample s;
        s.features = Tensor({1, 2, 1}, {0.1 * i, 0.2});
        s.label = +1;
        one_class.push_back(s);
    }
    CHECK_THROWS_AS(train_svm(one_class, SvmTrainConfig{}), std::invalid_argument);
    CHECK_THROWS_AS(train_svm({}, SvmTrainConfig{}), std::invalid_argument);

    SvmTrainConfig bad;
    bad.C = 0.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = SvmTrainConfig{};
    bad.tolerance = 0.0;
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("duplicating a separable dataset keeps the decision signs") {
    const BinaryTask task = data::synth_blobs(25, 2, 0.8, 0.04, 23);
    std::vector<LabeledSample> doubled = task.samples;
    doubled.insert(doubled.end(), task.samples.begin(), task.samples.end());

    const SvmModel a = train_svm(task.samples, SvmTrainConfig{});
    const SvmModel b = train_svm(doubled, SvmTrainConfig{});
    for (const auto& s : task.samples)
        CHECK(predict(a, s.features) == predict(b, s.features));
}

TEST_CASE("hinge loss") {
    SvmModel m;
    m.w = {1.0, 0.0};
    m.b = 0.0;
    LabeledSample inside;  // margin violated: y*f = 0.5
    inside.features = Tensor({1, 2, 1}, {0.5, 0.0});
    inside.label = +1;
    LabeledSample outside;  // y*f = 2
    outside.features = Tensor({1, 2, 1}, {2.0, 0.0});
    outside.label = +1;
    CHECK(hinge_loss_sum(m, {inside, outside}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(hinge_loss_sum(m, {}) == 0.0);
    CHECK_THROWS_AS(accuracy(m, {}), std::invalid_argument);
}

TEST_CASE("training is deterministic per seed") {
    const auto inst = random_instance(25, 3, 0.15, 41);
    SvmTrainConfig cfg;
    cfg.rng_seed = 7;
    const SvmModel a = train_svm(inst, cfg);
    const SvmModel b = train_svm(inst, cfg);
    CHECK(a.w == b.w);
    CHECK(a.b == b.b);
    CHECK(a.alpha == b.alpha);
}

TEST_CASE("checkpoint round trip") {
    const auto inst = random_instance(15, 2, 0.1, 3);
    const SvmModel m = train_svm(inst, SvmTrainConfig{});
    const std::string path = "/tmp/caedet_test_svm.bin";
    save_svm(path, m);
    const SvmModel l = load_svm(path);
    CHECK(l.w == m.w);
    CHECK(l.b == m.b);
    CHECK(l.alpha == m.alpha);
    CHECK(l.C == m.C);
    std::remove(path.c_str());
}

TEST_CASE("incremental retraining tracks the from-scratch solution") {
    const auto inst = random_instance(20, 2, 0.1, 55);
    SvmTrainConfig cfg;
    cfg.rng_seed = 5;
    IncrementalSvmTrainer inc(inst, cfg);
    CHECK(inc.size() == 20);

    // feature change: warm-started solution stays optimal
    auto modified = inst;
    modified[4].features = Tensor({1, 2, 1}, {0.9, 0.05});
    inc.set_features(4, modified[4].features);
    const SvmModel& warm = inc.retrain();
    CHECK(max_kkt_violation(warm, modified) <= 1e-3);
    const SvmModel fresh = train_svm(modified, cfg);
    CHECK(dual_objective(warm, modified) ==
          doctest::Approx(dual_objective(fresh, modified)).epsilon(2e-3));

    // label change: feasibility is rebuilt from scratch internally
    modified[6].label = -modified[6].label;
    inc.set_label(6, modified[6].label);
    const SvmModel& warm2 = inc.retrain();
    CHECK(max_kkt_violation(warm2, modified) <= 1e-3);

    CHECK_THROWS_AS(inc.set_label(6, 0), std::invalid_argument);
    CHECK_THROWS_AS(inc.set_features(99, modified[0].features), std::invalid_argument);
}
