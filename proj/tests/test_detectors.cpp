#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "caedet/dataset.hpp"
#include "caedet/detectors.hpp"
#include "caedet/rng.hpp"

using namespace caedet;
using namespace caedet::detectors;

namespace {

/// 4x4 single-channel task the small autoencoders can digest quickly.
std::vector<LabeledSample> image_buffer(int n_per_class, double dist, double spread,
                                        uint64_t seed) {
    BinaryTask task = data::synth_blobs(n_per_class, 16, dist, spread, seed);
    return task.samples;
}

DetectorTrainConfig quick_cfg(int cae_epochs, int rae_epochs, uint64_t seed = 0) {
    DetectorTrainConfig cfg;
    cfg.cae.epochs = cae_epochs;
    cfg.cae.batch_size = 16;
    cfg.cae.rng_seed = seed;
    cfg.rae.epochs = rae_epochs;
    cfg.rae.batch_size = 16;
    cfg.rae.rng_seed = seed;
    return cfg;
}

std::vector<ScoredSample> as_scores(const std::vector<double>& combined) {
    std::vector<ScoredSample> s(combined.size());
    for (size_t i = 0; i < combined.size(); ++i) {
        s[i].combined = combined[i];
        s[i].index = static_cast<int>(i);
    }
    return s;
}

int flagged(const std::vector<char>& verdicts) {
    int c = 0;
    for (char v : verdicts) c += v != 0;
    return c;
}

}  // namespace

TEST_CASE("detector names round-trip") {
    for (DetectorKind k : {DetectorKind::RAE, DetectorKind::CAE, DetectorKind::CAEPlus,
                           DetectorKind::Centroid})
        CHECK(detector_from_name(detector_name(k)) == k);
    CHECK(detector_from_name("caeplus") == DetectorKind::CAEPlus);
    CHECK_THROWS_AS(detector_from_name("svm"), std::invalid_argument);
}

TEST_CASE("centroid detector records per-class means and scores by distance") {
    std::vector<LabeledSample> buf;
    auto add = [&buf](std::vector<double> v, int label) {
        LabeledSample s;
        s.features = Tensor({1, 2, 1}, {v[0], v[1]});
        s.label = label;
        buf.push_back(s);
    };
    add({0.0, 0.0}, +1);
    add({0.2, 0.4}, +1);
    add({1.0, 1.0}, -1);
    add({0.8, 0.6}, -1);

    DetectorModel m = train_detector(DetectorKind::Centroid, buf, quick_cfg(1, 1));
    CHECK(m.trained);
    CHECK(m.centroid_pos[0] == doctest::Approx(0.1));
    CHECK(m.centroid_pos[1] == doctest::Approx(0.2));
    CHECK(m.centroid_neg[0] == doctest::Approx(0.9));
    CHECK(m.centroid_neg[1] == doctest::Approx(0.8));

    // score = Euclidean distance to the sample's own-class centroid
    const ScoredSample s0 = score(m, buf[0]);
    const double expect = std::sqrt(0.1 * 0.1 + 0.2 * 0.2);
    CHECK(s0.combined == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s0.re == s0.combined);
    CHECK(s0.loss == s0.combined);

    // a flipped label measures against the other centroid
    LabeledSample moved = buf[0];
    moved.label = -1;
    const double other = score(m, moved).combined;
    CHECK(other == doctest::Approx(std::sqrt(0.9 * 0.9 + 0.8 * 0.8)).epsilon(1e-12));
}

TEST_CASE("network kinds hold exactly the networks they score with") {
    const auto buf = image_buffer(10, 0.6, 0.1, 5);
    const DetectorTrainConfig cfg = quick_cfg(2, 2);

    DetectorModel rae = train_detector(DetectorKind::RAE, buf, cfg);
    CHECK(rae.rae_params.slot_count() > 0);
    CHECK(rae.cae_params.slot_count() == 0);
    CHECK(rae.alpha == 1.0);  // reconstruction only

    DetectorModel cae = train_detector(DetectorKind::CAE, buf, cfg);
    CHECK(cae.cae_params.slot_count() > 0);
    CHECK(cae.rae_params.slot_count() == 0);

    DetectorModel plus = train_detector(DetectorKind::CAEPlus, buf, cfg);
    CHECK(plus.cae_params.slot_count() > 0);
    CHECK(plus.rae_params.slot_count() > 0);
    CHECK(plus.alpha == doctest::Approx(0.66));
}

TEST_CASE("training rejections") {
    const auto buf = image_buffer(6, 0.6, 0.1, 2);

    DetectorTrainConfig over = quick_cfg(101, 5);
    CHECK_THROWS_WITH_AS(train_detector(DetectorKind::CAE, buf, over),
                         doctest::Contains("capped at 100"), std::invalid_argument);

    std::vector<LabeledSample> one_class;
    for (const LabeledSample& s : buf)
        if (s.label == +1) one_class.push_back(s);
    CHECK_THROWS_AS(train_detector(DetectorKind::CAE, one_class, quick_cfg(2, 2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(train_detector(DetectorKind::CAEPlus, one_class, quick_cfg(2, 2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(train_detector(DetectorKind::Centroid, one_class, quick_cfg(2, 2)),
                    std::invalid_argument);
    // the plain autoencoder ignores labels entirely
    DetectorModel rae = train_detector(DetectorKind::RAE, one_class, quick_cfg(2, 2));
    CHECK(rae.trained);

    CHECK_THROWS_AS(train_detector(DetectorKind::CAE, {}, quick_cfg(2, 2)),
                    std::invalid_argument);

    DetectorTrainConfig bad_alpha = quick_cfg(2, 2);
    bad_alpha.alpha = 1.2;
    CHECK_THROWS_AS(validate(bad_alpha), std::invalid_argument);

    DetectorModel untrained;
    CHECK_THROWS_AS(score(untrained, buf.front()), std::invalid_argument);
}

TEST_CASE("alpha endpoints select a single channel exactly") {
    const auto buf = image_buffer(12, 0.6, 0.12, 9);

    DetectorTrainConfig cfg = quick_cfg(4, 4);
    cfg.alpha = 1.0;
    DetectorModel re_only = train_detector(DetectorKind::CAEPlus, buf, cfg);
    cfg.alpha = 0.0;
    DetectorModel loss_only = train_detector(DetectorKind::CAEPlus, buf, cfg);
    cfg.alpha = 0.66;
    DetectorModel blended = train_detector(DetectorKind::CAEPlus, buf, cfg);

    for (const LabeledSample& s : buf) {
        const ScoredSample a1 = score(re_only, s);
        CHECK(a1.combined == a1.re);  // exact, not approximate
        const ScoredSample a0 = score(loss_only, s);
        CHECK(a0.combined == a0.loss);
        const ScoredSample mid = score(blended, s);
        CHECK(mid.combined ==
              doctest::Approx(0.66 * mid.re + 0.34 * mid.loss).epsilon(1e-12));
        // channels are shared across alphas: same networks, same seeds
        CHECK(a1.re == mid.re);
        CHECK(a0.loss == mid.loss);
    }
}

TEST_CASE("normalization is frozen on the training buffer and clamped") {
    const auto buf = image_buffer(12, 0.6, 0.12, 4);
    DetectorModel m = train_detector(DetectorKind::CAEPlus, buf, quick_cfg(4, 4));

    double re_lo = 1e9, re_hi = -1e9;
    for (const LabeledSample& s : buf) {
        const ScoredSample sc = score(m, s);
        CHECK(sc.re >= 0.0);
        CHECK(sc.re <= 1.0);
        CHECK(sc.loss >= 0.0);
        CHECK(sc.loss <= 1.0);
        re_lo = std::min(re_lo, sc.re);
        re_hi = std::max(re_hi, sc.re);
    }
    // min-max: the extremes of the training buffer map to the ends
    CHECK(re_lo == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(re_hi == doctest::Approx(1.0).epsilon(1e-12));

    // a wildly out-of-distribution sample clamps instead of overflowing
    LabeledSample weird = buf.front();
    for (size_t i = 0; i < weird.features.size(); ++i)
        weird.features[i] = (i % 2) ? 1.0 : 0.0;
    const ScoredSample sc = score(m, weird);
    CHECK(sc.re >= 0.0);
    CHECK(sc.re <= 1.0);
    CHECK(sc.loss >= 0.0);
    CHECK(sc.loss <= 1.0);
}

TEST_CASE("label changes touch only the loss channel") {
    const auto buf = image_buffer(14, 0.7, 0.1, 11);
    DetectorModel m = train_detector(DetectorKind::CAEPlus, buf, quick_cfg(30, 10));

    double true_loss = 0.0, flipped_loss = 0.0;
    for (const LabeledSample& s : buf) {
        LabeledSample flipped = s;
        flipped.label = -s.label;
        const ScoredSample orig = score(m, s);
        const ScoredSample flip = score(m, flipped);
        CHECK(flip.re == orig.re);  // reconstruction never sees the label
        true_loss += orig.loss;
        flipped_loss += flip.loss;
    }
    // the trained head assigns clearly higher loss under the wrong label
    CHECK(flipped_loss > true_loss + 0.1);
}

TEST_CASE("top-k separator flags exactly the k largest, ties by input order") {
    const auto scores = as_scores({0.5, 0.3, 0.5, 0.1, 0.9});

    CHECK(flagged(separate(scores, SeparatorKind::top_k(0))) == 0);
    CHECK(flagged(separate(scores, SeparatorKind::top_k(5))) == 5);
    CHECK(flagged(separate(scores, SeparatorKind::top_k(50))) == 5);  // capped at n

    const auto v2 = separate(scores, SeparatorKind::top_k(2));
    CHECK(v2[4] == 1);
    CHECK(v2[0] == 1);  // first of the tied 0.5s wins by stable order
    CHECK(v2[2] == 0);

    const auto v3 = separate(scores, SeparatorKind::top_k(3));
    CHECK(v3[0] == 1);
    CHECK(v3[2] == 1);
    CHECK(v3[1] == 0);

    CHECK_THROWS_AS(SeparatorKind::top_k(-1), std::invalid_argument);
    CHECK_THROWS_AS(separate({}, SeparatorKind::gmm()), std::invalid_argument);
}

TEST_CASE("gmm separator matches top-k on disjoint score ranges") {
    Rng rng(17);
    std::vector<double> vals;
    for (int i = 0; i < 54; ++i) vals.push_back(rng.normal(0.15, 0.03));
    for (int i = 0; i < 6; ++i) vals.push_back(rng.normal(0.85, 0.03));
    rng.shuffle(vals);
    const auto scores = as_scores(vals);

    const auto g = separate(scores, SeparatorKind::gmm());
    const auto t = separate(scores, SeparatorKind::top_k(6));
    CHECK(g == t);
    CHECK(flagged(g) == 6);
    for (size_t i = 0; i < vals.size(); ++i) CHECK((g[i] != 0) == (vals[i] > 0.5));
}

TEST_CASE("gmm separator is invariant under increasing affine transforms") {
    Rng rng(23);
    std::vector<double> vals;
    for (int i = 0; i < 45; ++i) vals.push_back(rng.normal(0.2, 0.05));
    for (int i = 0; i < 5; ++i) vals.push_back(rng.normal(0.75, 0.05));

    const auto base = separate(as_scores(vals), SeparatorKind::gmm());
    REQUIRE(flagged(base) == 5);

    std::vector<double> shifted;
    for (double v : vals) shifted.push_back(3.0 * v + 2.0);
    CHECK(separate(as_scores(shifted), SeparatorKind::gmm()) == base);

    std::vector<double> shrunk;
    for (double v : vals) shrunk.push_back(0.01 * v - 5.0);
    CHECK(separate(as_scores(shrunk), SeparatorKind::gmm()) == base);
}

TEST_CASE("gmm separator rules unimodal buffers clean") {
    int clean_trials = 0;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(seed);
        std::vector<double> vals;
        for (int i = 0; i < 110; ++i) vals.push_back(rng.normal(0.5, 0.05));
        if (flagged(separate(as_scores(vals), SeparatorKind::gmm())) == 0) ++clean_trials;
    }
    CHECK(clean_trials >= 45);  // 90 percent of trials

    // identical values short-circuit through the degenerate fit
    CHECK(flagged(separate(as_scores(std::vector<double>(20, 0.3)), SeparatorKind::gmm())) == 0);
    // a single sample has nothing to contrast against
    CHECK(flagged(separate(as_scores({0.9}), SeparatorKind::gmm())) == 0);
}

TEST_CASE("detection metric conventions") {
    const DetectionMetrics perfect =
        detection_metrics({1, 1, 0, 0}, {1, 1, 0, 0});
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.true_positives == 2);

    // no poisons exist and none flagged
    const DetectionMetrics clean = detection_metrics({0, 0, 0}, {0, 0, 0});
    CHECK(clean.f1 == 1.0);

    // 10 poisons, 5 found, 5 false alarms
    std::vector<char> truth(20, 0), verdicts(20, 0);
    for (int i = 0; i < 10; ++i) truth[static_cast<size_t>(i)] = 1;
    for (int i = 0; i < 5; ++i) verdicts[static_cast<size_t>(i)] = 1;        // hits
    for (int i = 10; i < 15; ++i) verdicts[static_cast<size_t>(i)] = 1;      // false alarms
    const DetectionMetrics half = detection_metrics(verdicts, truth);
    CHECK(half.precision == doctest::Approx(0.5));
    CHECK(half.recall == doctest::Approx(0.5));
    CHECK(half.f1 == doctest::Approx(0.5));
    CHECK(half.false_positives == 5);
    CHECK(half.false_negatives == 5);

    // everything flagged on a clean buffer: precision 0, recall 1 by convention
    const DetectionMetrics noisy = detection_metrics({1, 1}, {0, 0});
    CHECK(noisy.precision == 0.0);
    CHECK(noisy.recall == 1.0);
    CHECK(noisy.f1 == 0.0);

    CHECK_THROWS_AS(detection_metrics({1}, {1, 0}), std::invalid_argument);
}

TEST_CASE("filter_round keeps a clean buffer intact") {
    BinaryTask task = data::synth_blobs(30, 16, 0.6, 0.1, 6);
    RoundBuffer round;
    round.train.assign(task.samples.begin(), task.samples.begin() + 40);

    // enough epochs that both classes are genuinely learned; an
    // undertrained head scores one whole class high and the clean buffer
    // looks legitimately bimodal
    DetectorModel m = train_detector(DetectorKind::CAEPlus, round.train, quick_cfg(40, 40));
    const FilterResult r = filter_round(m, SeparatorKind::gmm(), round);
    REQUIRE(r.verdicts.size() == 40);
    REQUIRE(r.scores.size() == 40);
    CHECK(r.kept.size() == 40);  // clean-buffer guard: nothing removed
    for (size_t i = 0; i < r.kept.size(); ++i)
        CHECK(r.kept[i].origin_id == round.train[i].origin_id);

    // empty round: nothing to do
    RoundBuffer empty;
    CHECK(filter_round(m, SeparatorKind::gmm(), empty).kept.empty());

    // top-k always removes k
    const FilterResult rk = filter_round(m, SeparatorKind::top_k(4), round);
    CHECK(rk.kept.size() == 36);
}

TEST_CASE("checkpoints round-trip bit for bit and views match fresh training") {
    const auto buf = image_buffer(10, 0.6, 0.12, 21);
    const DetectorTrainConfig cfg = quick_cfg(3, 3, 77);
    DetectorModel joint = train_detector(DetectorKind::CAEPlus, buf, cfg);

    const std::string path = "/tmp/caedet_test_detector.bin";
    save_detector(path, joint);
    const DetectorModel back = load_detector(path);
    CHECK(back.kind == joint.kind);
    CHECK(back.alpha == joint.alpha);
    CHECK(back.trained == joint.trained);
    CHECK(back.normalizer.re_min == joint.normalizer.re_min);
    CHECK(back.normalizer.re_max == joint.normalizer.re_max);
    CHECK(back.normalizer.loss_min == joint.normalizer.loss_min);
    CHECK(back.normalizer.loss_max == joint.normalizer.loss_max);
    for (const LabeledSample& s : buf) {
        const ScoredSample a = score(joint, s);
        const ScoredSample b = score(back, s);
        CHECK(a.re == b.re);
        CHECK(a.loss == b.loss);
        CHECK(a.combined == b.combined);
    }
    std::remove(path.c_str());

    // centroid checkpoints carry the centroids
    DetectorModel cent = train_detector(DetectorKind::Centroid, buf, cfg);
    save_detector(path, cent);
    const DetectorModel cent_back = load_detector(path);
    for (const LabeledSample& s : buf)
        CHECK(score(cent, s).combined == score(cent_back, s).combined);
    std::remove(path.c_str());

    // a view over the joint model equals training that kind from scratch
    // with the same seeds: fitting never mixes the two networks
    DetectorModel rae_view = rescore_view(joint, DetectorKind::RAE, buf, 0.66);
    DetectorModel rae_fresh = train_detector(DetectorKind::RAE, buf, cfg);
    DetectorModel cae_view = rescore_view(joint, DetectorKind::CAE, buf, 0.66);
    DetectorModel cae_fresh = train_detector(DetectorKind::CAE, buf, cfg);
    for (const LabeledSample& s : buf) {
        CHECK(score(rae_view, s).combined == score(rae_fresh, s).combined);
        CHECK(score(cae_view, s).combined == score(cae_fresh, s).combined);
    }
    CHECK(rae_view.alpha == 1.0);

    CHECK_THROWS_AS(rescore_view(joint, DetectorKind::Centroid, buf, 0.66),
                    std::invalid_argument);
    CHECK_THROWS_AS(rescore_view(rae_fresh, DetectorKind::CAEPlus, buf, 0.66),
                    std::invalid_argument);
    CHECK_THROWS_AS(rescore_view(joint, DetectorKind::CAE, buf, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(load_detector("/tmp/caedet_no_such_file.bin"), std::runtime_error);
}
