#include "caedet/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "caedet/rng.hpp"
#include "caedet/svm.hpp"

namespace caedet::harness {

namespace {

// seed-derivation tags for the independent random streams
constexpr uint64_t kTagRounds = 1;
constexpr uint64_t kTagTask = 2;
constexpr uint64_t kTagAttack = 3;
constexpr uint64_t kTagAttackSvm = 4;
constexpr uint64_t kTagCae = 5;
constexpr uint64_t kTagRae = 6;
constexpr uint64_t kTagEvalSvm = 7;

uint64_t sub_seed(uint64_t seed, uint64_t role, uint64_t a, uint64_t b = 0) {
    return derive_seed(derive_seed(derive_seed(seed, role), a), b);
}

int scaled_epochs(int epochs, double scale) {
    return std::max(1, static_cast<int>(std::lround(epochs * scale)));
}

std::string separator_name(const detectors::SeparatorKind& s) {
    return s.kind == detectors::SeparatorKind::Gmm ? "gmm" : "top" + std::to_string(s.k);
}

svm::SvmTrainConfig eval_svm_cfg(const ExperimentConfig& cfg, uint64_t a, uint64_t b) {
    svm::SvmTrainConfig s;
    s.C = cfg.svm_C;
    s.tolerance = cfg.svm_tolerance;
    s.rng_seed = sub_seed(cfg.seed, kTagEvalSvm, a, b);
    return s;
}

attacks::AttackConfig attack_cfg(const ExperimentConfig& cfg, double rate, uint64_t a,
                                 uint64_t b) {
    attacks::AttackConfig at;
    at.poison_rate = rate;
    at.step_size = cfg.attack_step;
    at.max_iters = cfg.attack_max_iters;
    at.improvement_tol = cfg.attack_improvement_tol;
    at.rng_seed = sub_seed(cfg.seed, kTagAttack, a, b);
    at.svm_cfg.C = cfg.svm_C;
    at.svm_cfg.tolerance = cfg.svm_tolerance;
    at.svm_cfg.rng_seed = sub_seed(cfg.seed, kTagAttackSvm, a, b);
    return at;
}

detectors::DetectorTrainConfig detector_cfg(const ExperimentConfig& cfg, uint64_t a,
                                            uint64_t b) {
    detectors::DetectorTrainConfig d;
    d.alpha = cfg.alpha;
    d.cae.epochs = scaled_epochs(cfg.cae_epochs, cfg.epoch_scale);
    d.cae.batch_size = cfg.batch_size;
    d.cae.learning_rate = cfg.learning_rate;
    d.cae.rng_seed = sub_seed(cfg.seed, kTagCae, a, b);
    d.rae.epochs = scaled_epochs(cfg.rae_epochs, cfg.epoch_scale);
    d.rae.batch_size = cfg.batch_size;
    d.rae.learning_rate = cfg.learning_rate;
    d.rae.rng_seed = sub_seed(cfg.seed, kTagRae, a, b);
    return d;
}

/// Poisoned copies of every round; round r keeps its index so clean and
/// poisoned views line up.
std::vector<RoundBuffer> poison_all(const ExperimentDataset& ds, const ExperimentConfig& cfg,
                                    attacks::AttackKind kind, double rate, uint64_t tag) {
    std::vector<RoundBuffer> out;
    out.reserve(ds.rounds.size());
    for (size_t r = 0; r < ds.rounds.size(); ++r)
        out.push_back(attacks::poison_round(ds.rounds[r], kind,
                                            attack_cfg(cfg, rate, tag, static_cast<uint64_t>(r))));
    return out;
}

std::vector<LabeledSample> aggregate_train(const std::vector<RoundBuffer>& rounds,
                                           int n_detector) {
    std::vector<LabeledSample> agg;
    for (int r = 0; r < n_detector; ++r)
        agg.insert(agg.end(), rounds[static_cast<size_t>(r)].train.begin(),
                   rounds[static_cast<size_t>(r)].train.end());
    if (agg.empty())
        throw std::invalid_argument("no detector-training rounds: increase n_rounds");
    return agg;
}

/// SVM accuracy on test after training on `train`; when the filter left
/// too little to train on, fall back to predicting the majority label
/// and say so in the note.
double svm_accuracy_or_fallback(const std::vector<LabeledSample>& train,
                                const std::vector<LabeledSample>& test,
                                const svm::SvmTrainConfig& scfg, std::string* note) {
    int pos = 0, neg = 0;
    for (const LabeledSample& s : train) (s.label == +1 ? pos : neg) += 1;
    if (pos > 0 && neg > 0) {
        const svm::SvmModel model = svm::train_svm(train, scfg);
        return svm::accuracy(model, test);
    }
    if (note) *note = "degenerate-filter";
    const int majority = pos >= neg ? +1 : -1;
    int correct = 0;
    for (const LabeledSample& s : test) correct += s.label == majority ? 1 : 0;
    return test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
}

struct RoundOutcome {
    detectors::DetectionMetrics metrics;
    double acc_clean = 0.0;
    double acc_undefended = 0.0;
    double acc_filtered = 0.0;
    std::string note;
};

std::vector<char> truth_flags(const std::vector<LabeledSample>& samples) {
    std::vector<char> t;
    t.reserve(samples.size());
    for (const LabeledSample& s : samples) t.push_back(s.poison_flag ? 1 : 0);
    return t;
}

RoundOutcome evaluate_round(const detectors::DetectorModel& model,
                            detectors::SeparatorKind separator, const RoundBuffer& poisoned,
                            const RoundBuffer& clean, const svm::SvmTrainConfig& scfg) {
    RoundOutcome oc;
    oc.acc_clean = svm_accuracy_or_fallback(clean.train, clean.test, scfg, nullptr);
    oc.acc_undefended = svm_accuracy_or_fallback(poisoned.train, poisoned.test, scfg, nullptr);
    const detectors::FilterResult fr = detectors::filter_round(model, separator, poisoned);
    oc.metrics = detectors::detection_metrics(fr.verdicts, truth_flags(poisoned.train));
    oc.acc_filtered = svm_accuracy_or_fallback(fr.kept, poisoned.test, scfg, &oc.note);
    return oc;
}

ReportRow outcome_row(const RoundOutcome& oc, ReportRow base, int round) {
    base.scope = "round";
    base.round = round;
    if (!oc.note.empty()) base.note = base.note.empty() ? oc.note : base.note + ";" + oc.note;
    base.f1 = oc.metrics.f1;
    base.precision = oc.metrics.precision;
    base.recall = oc.metrics.recall;
    base.acc_clean = oc.acc_clean;
    base.acc_undefended = oc.acc_undefended;
    base.acc_filtered = oc.acc_filtered;
    return base;
}

ReportRow mean_row(const std::vector<ReportRow>& rows, ReportRow base) {
    if (rows.empty()) throw std::logic_error("mean over zero rows");
    base.scope = "mean";
    base.round = -1;
    base.f1 = base.precision = base.recall = 0.0;
    base.acc_clean = base.acc_undefended = base.acc_filtered = 0.0;
    for (const ReportRow& r : rows) {
        base.f1 += r.f1;
        base.precision += r.precision;
        base.recall += r.recall;
        base.acc_clean += r.acc_clean;
        base.acc_undefended += r.acc_undefended;
        base.acc_filtered += r.acc_filtered;
    }
    const double n = static_cast<double>(rows.size());
    base.f1 /= n;
    base.precision /= n;
    base.recall /= n;
    base.acc_clean /= n;
    base.acc_undefended /= n;
    base.acc_filtered /= n;
    return base;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

void echo_config(Report& rep, const ExperimentConfig& cfg,
                 const std::vector<std::string>& task_names,
                 const std::vector<std::string>& warnings) {
    auto& c = rep.config;
    c.emplace_back("tasks", join(task_names, ";"));
    c.emplace_back("dataset_source", cfg.dataset.source);
    if (!cfg.dataset.data_dir.empty()) c.emplace_back("data_dir", cfg.dataset.data_dir);
    c.emplace_back("n_rounds", std::to_string(cfg.n_rounds));
    c.emplace_back("n_detector_rounds", std::to_string(cfg.n_rounds - cfg.n_eval_rounds));
    c.emplace_back("n_eval_rounds", std::to_string(cfg.n_eval_rounds));
    c.emplace_back("split_sizes", std::to_string(cfg.splits.train) + "/" +
                                      std::to_string(cfg.splits.validation) + "/" +
                                      std::to_string(cfg.splits.test));
    c.emplace_back("sampling_policy", "without-replacement-until-pool-exhausted-then-reshuffle");
    c.emplace_back("attack", attacks::attack_name(cfg.attack));
    {
        std::vector<std::string> rates;
        for (double r : cfg.rate_grid) rates.push_back(fmt6(r));
        c.emplace_back("rate_grid", join(rates, ";"));
    }
    c.emplace_back("attack_step", fmt6(cfg.attack_step));
    c.emplace_back("attack_max_iters", std::to_string(cfg.attack_max_iters));
    c.emplace_back("attack_improvement_tol", fmt6(cfg.attack_improvement_tol));
    c.emplace_back("attack_gradient", "fixed-dual, sequential per poison");
    c.emplace_back("svm_C", fmt6(cfg.svm_C));
    c.emplace_back("svm_tolerance", fmt6(cfg.svm_tolerance));
    c.emplace_back("svm_solver", "dual pairwise coordinate ascent");
    {
        std::vector<std::string> kinds;
        for (auto k : cfg.detector_kinds) kinds.push_back(detectors::detector_name(k));
        c.emplace_back("detectors", join(kinds, ";"));
    }
    c.emplace_back("separator", separator_name(cfg.separator));
    c.emplace_back("alpha", fmt6(cfg.alpha));
    c.emplace_back("normalization", "per-channel min-max frozen at detector training, clamped");
    c.emplace_back("gmm", "2 components, max_iters=200, tol=1e-06, variance_floor=1e-08, "
                          "guard=0.1 pooled sd + single-gaussian BIC");
    c.emplace_back("cae_epochs", std::to_string(scaled_epochs(cfg.cae_epochs, cfg.epoch_scale)));
    c.emplace_back("rae_epochs", std::to_string(scaled_epochs(cfg.rae_epochs, cfg.epoch_scale)));
    c.emplace_back("epoch_scale", fmt6(cfg.epoch_scale));
    c.emplace_back("batch_size", std::to_string(cfg.batch_size));
    c.emplace_back("learning_rate", fmt6(cfg.learning_rate));
    c.emplace_back("seed", std::to_string(cfg.seed));
    if (!warnings.empty()) c.emplace_back("warnings", join(warnings, "; "));
}

ReportRow base_row(const std::string& task, attacks::AttackKind attack, double rate,
                   const std::string& detector, const std::string& separator, double alpha) {
    ReportRow r;
    r.task = task;
    r.attack = attacks::attack_name(attack);
    r.rate = rate;
    r.detector = detector;
    r.separator = separator;
    r.alpha = alpha;
    return r;
}

const std::array<attacks::AttackKind, 4> kAllAttacks = {
    attacks::AttackKind::Flip, attacks::AttackKind::Optimal, attacks::AttackKind::SemiOptimal,
    attacks::AttackKind::Mixed};

}  // namespace

BinaryTask load_task(const DatasetSpec& spec, uint64_t seed) {
    if (spec.source == "idx") {
        if (spec.data_dir.empty())
            throw std::invalid_argument("idx dataset needs a data directory");
        const data::RawDataset raw = data::load_idx(spec.data_dir + "/" + spec.images_file,
                                                    spec.data_dir + "/" + spec.labels_file);
        return data::make_binary_task(raw, spec.pos_class, spec.neg_class,
                                      derive_seed(seed, kTagTask));
    }
    if (spec.source == "synth-images") {
        const auto pairs = data::default_image_pairs();
        const auto& p = pairs[static_cast<size_t>(spec.image_pair) % pairs.size()];
        return data::synth_images(p.first, p.second, spec.n_per_class,
                                  derive_seed(seed, kTagTask));
    }
    if (spec.source == "synth-blobs") {
        return data::synth_blobs(spec.n_per_class, spec.blob_dim, spec.blob_distance,
                                 spec.blob_spread, derive_seed(seed, kTagTask));
    }
    throw std::invalid_argument("unknown dataset source: " + spec.source);
}

std::vector<BinaryTask> robustness_tasks(const DatasetSpec& spec, uint64_t seed) {
    std::vector<BinaryTask> tasks;
    if (spec.source == "synth-images") {
        const auto pairs = data::default_image_pairs();
        for (size_t i = 0; i < pairs.size(); ++i)
            tasks.push_back(data::synth_images(pairs[i].first, pairs[i].second, spec.n_per_class,
                                               sub_seed(seed, kTagTask, i)));
        return tasks;
    }
    if (spec.source == "synth-blobs") {
        tasks.push_back(load_task(spec, seed));
        return tasks;
    }
    if (spec.source == "idx") {
        DatasetSpec s = spec;
        tasks.push_back(load_task(s, seed));
        // companion digit pair so the ordering claim is checked on more
        // than one task even with a single source file
        if (spec.pos_class == 9 && spec.neg_class == 8) {
            s.pos_class = 4;
            s.neg_class = 0;
        } else {
            s.pos_class = 9;
            s.neg_class = 8;
        }
        tasks.push_back(load_task(s, derive_seed(seed, 0x9e8)));
        return tasks;
    }
    throw std::invalid_argument("unknown dataset source: " + spec.source);
}

void validate(const ExperimentConfig& cfg) {
    if (cfg.rate_grid.empty()) throw std::invalid_argument("rate grid is empty");
    for (double r : cfg.rate_grid)
        if (r < 0.0 || r > 0.5) throw std::invalid_argument("poison rates must lie in [0, 0.5]");
    if (cfg.epoch_scale <= 0.0 || cfg.epoch_scale > 1.0)
        throw std::invalid_argument("epoch_scale must lie in (0, 1]");
    if (cfg.n_eval_rounds < 1) throw std::invalid_argument("need at least one evaluation round");
    if (cfg.n_rounds <= cfg.n_eval_rounds)
        throw std::invalid_argument("n_rounds must exceed n_eval_rounds to train a detector");
    if (cfg.detector_kinds.empty()) throw std::invalid_argument("no detector kinds configured");
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0) throw std::invalid_argument("alpha must lie in [0,1]");
    if (cfg.svm_C <= 0.0) throw std::invalid_argument("svm_C must be positive");
    if (cfg.svm_tolerance <= 0.0) throw std::invalid_argument("svm_tolerance must be positive");
    if (cfg.cae_epochs < 1 || cfg.rae_epochs < 1)
        throw std::invalid_argument("epoch counts must be >= 1");
    if (cfg.cae_epochs > 100)
        throw std::invalid_argument("CAE epochs capped at 100 (early-stopping contract)");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
    if (cfg.attack_step < 0.0) throw std::invalid_argument("attack_step must be >= 0");
    if (cfg.attack_max_iters < 0) throw std::invalid_argument("attack_max_iters must be >= 0");
}

Report run_periodic_update(const ExperimentConfig& cfg) {
    validate(cfg);
    const BinaryTask task = load_task(cfg.dataset, cfg.seed);
    const ExperimentDataset ds =
        data::build_rounds(task, cfg.n_rounds, cfg.splits, derive_seed(cfg.seed, kTagRounds),
                           cfg.n_eval_rounds);

    Report rep;
    rep.experiment = "periodic";
    echo_config(rep, cfg, {task.name}, ds.warnings);

    for (size_t ri = 0; ri < cfg.rate_grid.size(); ++ri) {
        const double rate = cfg.rate_grid[ri];
        const std::vector<RoundBuffer> poisoned = poison_all(ds, cfg, cfg.attack, rate, ri);
        const std::vector<LabeledSample> agg = aggregate_train(poisoned, ds.n_detector_rounds);

        for (size_t di = 0; di < cfg.detector_kinds.size(); ++di) {
            const detectors::DetectorKind kind = cfg.detector_kinds[di];
            const detectors::DetectorModel model =
                detectors::train_detector(kind, agg, detector_cfg(cfg, ri, di));

            const ReportRow base = base_row(task.name, cfg.attack, rate,
                                            detectors::detector_name(kind),
                                            separator_name(cfg.separator), model.alpha);
            std::vector<ReportRow> rows;
            for (int r = ds.n_detector_rounds; r < cfg.n_rounds; ++r) {
                const RoundOutcome oc = evaluate_round(
                    model, cfg.separator, poisoned[static_cast<size_t>(r)],
                    ds.rounds[static_cast<size_t>(r)],
                    eval_svm_cfg(cfg, ri, static_cast<uint64_t>(r)));
                rows.push_back(outcome_row(oc, base, r));
            }
            rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
            rep.rows.push_back(mean_row(rows, base));
        }
    }
    return rep;
}

Report run_threshold_sweep(const ExperimentConfig& cfg, const std::vector<int>& k_grid) {
    validate(cfg);
    for (int k : k_grid)
        if (k < 0) throw std::invalid_argument("top-k values must be >= 0");

    const BinaryTask task = load_task(cfg.dataset, cfg.seed);
    const ExperimentDataset ds =
        data::build_rounds(task, cfg.n_rounds, cfg.splits, derive_seed(cfg.seed, kTagRounds),
                           cfg.n_eval_rounds);
    const double rate = cfg.rate_grid.front();
    const std::vector<RoundBuffer> poisoned = poison_all(ds, cfg, cfg.attack, rate, 0);
    const std::vector<LabeledSample> agg = aggregate_train(poisoned, ds.n_detector_rounds);

    Report rep;
    rep.experiment = "threshold";
    echo_config(rep, cfg, {task.name}, ds.warnings);
    rep.config.emplace_back("n_p", std::to_string(attacks::poison_count(rate, cfg.splits.train)));

    for (size_t di = 0; di < cfg.detector_kinds.size(); ++di) {
        const detectors::DetectorKind kind = cfg.detector_kinds[di];
        const detectors::DetectorModel model =
            detectors::train_detector(kind, agg, detector_cfg(cfg, 0, di));

        // score each evaluation round once; separators reuse the scores
        std::vector<std::vector<detectors::ScoredSample>> scores;
        for (int r = ds.n_detector_rounds; r < cfg.n_rounds; ++r)
            scores.push_back(detectors::score_batch(model, poisoned[static_cast<size_t>(r)].train));

        auto sweep_rows = [&](detectors::SeparatorKind sep, const std::string& pname,
                              double pval) {
            ReportRow base = base_row(task.name, cfg.attack, rate,
                                      detectors::detector_name(kind), separator_name(sep),
                                      model.alpha);
            base.param_name = pname;
            base.param = pval;
            std::vector<ReportRow> rows;
            for (int r = ds.n_detector_rounds; r < cfg.n_rounds; ++r) {
                const RoundBuffer& pr = poisoned[static_cast<size_t>(r)];
                const auto& sc = scores[static_cast<size_t>(r - ds.n_detector_rounds)];
                const std::vector<char> verdicts = detectors::separate(sc, sep);
                RoundOutcome oc;
                oc.metrics = detectors::detection_metrics(verdicts, truth_flags(pr.train));
                std::vector<LabeledSample> kept;
                for (size_t i = 0; i < pr.train.size(); ++i)
                    if (!verdicts[i]) kept.push_back(pr.train[i]);
                const svm::SvmTrainConfig scfg = eval_svm_cfg(cfg, di, static_cast<uint64_t>(r));
                oc.acc_clean = svm_accuracy_or_fallback(
                    ds.rounds[static_cast<size_t>(r)].train, pr.test, scfg, nullptr);
                oc.acc_undefended = svm_accuracy_or_fallback(pr.train, pr.test, scfg, nullptr);
                oc.acc_filtered = svm_accuracy_or_fallback(kept, pr.test, scfg, &oc.note);
                rows.push_back(outcome_row(oc, base, r));
            }
            rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
            rep.rows.push_back(mean_row(rows, base));
        };

        for (int k : k_grid)
            sweep_rows(detectors::SeparatorKind::top_k(k), "K", static_cast<double>(k));
        sweep_rows(detectors::SeparatorKind::gmm(), "K", -1.0);  // threshold-free reference
    }
    return rep;
}

Report run_alpha_sweep(const ExperimentConfig& cfg, const std::vector<double>& alpha_grid) {
    validate(cfg);
    if (alpha_grid.empty()) throw std::invalid_argument("alpha grid is empty");
    for (double a : alpha_grid)
        if (a < 0.0 || a > 1.0) throw std::invalid_argument("alpha values must lie in [0,1]");

    const BinaryTask task = load_task(cfg.dataset, cfg.seed);
    const ExperimentDataset ds =
        data::build_rounds(task, cfg.n_rounds, cfg.splits, derive_seed(cfg.seed, kTagRounds),
                           cfg.n_eval_rounds);
    const double rate = cfg.rate_grid.front();
    const detectors::DetectorKind kind = cfg.detector_kinds.front();

    Report rep;
    rep.experiment = "alpha";
    echo_config(rep, cfg, {task.name}, ds.warnings);

    for (size_t ai = 0; ai < kAllAttacks.size(); ++ai) {
        const attacks::AttackKind attack = kAllAttacks[ai];
        const std::vector<RoundBuffer> poisoned = poison_all(ds, cfg, attack, rate, ai);
        const std::vector<LabeledSample> agg = aggregate_train(poisoned, ds.n_detector_rounds);
        const detectors::DetectorModel model =
            detectors::train_detector(kind, agg, detector_cfg(cfg, ai, 0));

        // channels are fixed per round; only the combination varies with alpha
        std::vector<std::vector<detectors::ScoredSample>> scores;
        std::vector<double> acc_clean, acc_undef;
        for (int r = ds.n_detector_rounds; r < cfg.n_rounds; ++r) {
            const RoundBuffer& pr = poisoned[static_cast<size_t>(r)];
            scores.push_back(detectors::score_batch(model, pr.train));
            const svm::SvmTrainConfig scfg = eval_svm_cfg(cfg, ai, static_cast<uint64_t>(r));
            acc_clean.push_back(svm_accuracy_or_fallback(ds.rounds[static_cast<size_t>(r)].train,
                                                         pr.test, scfg, nullptr));
            acc_undef.push_back(svm_accuracy_or_fallback(pr.train, pr.test, scfg, nullptr));
        }

        for (double a : alpha_grid) {
            ReportRow base = base_row(task.name, attack, rate, detectors::detector_name(kind),
                                      separator_name(cfg.separator), a);
            base.param_name = "alpha";
            base.param = a;
            if (a == 0.66) base.note = "default-alpha";
            std::vector<ReportRow> rows;
            for (int r = ds.n_detector_rounds; r < cfg.n_rounds; ++r) {
                const RoundBuffer& pr = poisoned[static_cast<size_t>(r)];
                std::vector<detectors::ScoredSample> sc =
                    scores[static_cast<size_t>(r - ds.n_detector_rounds)];
                for (detectors::ScoredSample& s : sc)
                    s.combined = a * s.re + (1.0 - a) * s.loss;
                const std::vector<char> verdicts = detectors::separate(sc, cfg.separator);
                RoundOutcome oc;
                oc.metrics = detectors::detection_metrics(verdicts, truth_flags(pr.train));
                std::vector<LabeledSample> kept;
                for (size_t i = 0; i < pr.train.size(); ++i)
                    if (!verdicts[i]) kept.push_back(pr.train[i]);
                oc.acc_clean = acc_clean[static_cast<size_t>(r - ds.n_detector_rounds)];
                oc.acc_undefended = acc_undef[static_cast<size_t>(r - ds.n_detector_rounds)];
                oc.acc_filtered = svm_accuracy_or_fallback(
                    kept, pr.test, eval_svm_cfg(cfg, ai, static_cast<uint64_t>(r)), &oc.note);
                rows.push_back(outcome_row(oc, base, r));
            }
            rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
            rep.rows.push_back(mean_row(rows, base));
        }
    }
    return rep;
}

Report run_ablation(const ExperimentConfig& cfg) {
    validate(cfg);
    const BinaryTask task = load_task(cfg.dataset, cfg.seed);
    const ExperimentDataset ds =
        data::build_rounds(task, cfg.n_rounds, cfg.splits, derive_seed(cfg.seed, kTagRounds),
                           cfg.n_eval_rounds);
    const double rate = cfg.rate_grid.front();

    Report rep;
    rep.experiment = "ablation";
    echo_config(rep, cfg, {task.name}, ds.warnings);

    for (size_t ai = 0; ai < kAllAttacks.size(); ++ai) {
        const attacks::AttackKind attack = kAllAttacks[ai];
        const std::vector<RoundBuffer> poisoned = poison_all(ds, cfg, attack, rate, ai);
        const std::vector<LabeledSample> agg = aggregate_train(poisoned, ds.n_detector_rounds);

        // one training pass; the three scoring views share the networks
        const detectors::DetectorModel joint = detectors::train_detector(
            detectors::DetectorKind::CAEPlus, agg, detector_cfg(cfg, ai, 0));
        const std::array<detectors::DetectorModel, 3> views = {
            detectors::rescore_view(joint, detectors::DetectorKind::RAE, agg, cfg.alpha),
            detectors::rescore_view(joint, detectors::DetectorKind::CAE, agg, cfg.alpha),
            joint};

        for (const detectors::DetectorModel& model : views) {
            const ReportRow base = base_row(task.name, attack, rate,
                                            detectors::detector_name(model.kind),
                                            separator_name(cfg.separator), model.alpha);
            std::vector<ReportRow> rows;
            for (int r = ds.n_detector_rounds; r < cfg.n_rounds; ++r) {
                const RoundOutcome oc = evaluate_round(
                    model, cfg.separator, poisoned[static_cast<size_t>(r)],
                    ds.rounds[static_cast<size_t>(r)],
                    eval_svm_cfg(cfg, ai, static_cast<uint64_t>(r)));
                rows.push_back(outcome_row(oc, base, r));
            }
            rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
            rep.rows.push_back(mean_row(rows, base));
        }
    }
    return rep;
}

Report run_robustness(const ExperimentConfig& cfg) {
    validate(cfg);
    const std::vector<BinaryTask> tasks = robustness_tasks(cfg.dataset, cfg.seed);
    const double rate = cfg.rate_grid.front();

    Report rep;
    rep.experiment = "robustness";
    std::vector<std::string> names, warnings;
    for (const BinaryTask& t : tasks) names.push_back(t.name);

    for (size_t ti = 0; ti < tasks.size(); ++ti) {
        const BinaryTask& task = tasks[ti];
        const ExperimentDataset ds = data::build_rounds(
            task, cfg.n_rounds, cfg.splits, sub_seed(cfg.seed, kTagRounds, ti),
            cfg.n_eval_rounds);
        warnings.insert(warnings.end(), ds.warnings.begin(), ds.warnings.end());

        const std::vector<RoundBuffer> poisoned = poison_all(ds, cfg, cfg.attack, rate, ti);
        const std::vector<LabeledSample> contaminated =
            aggregate_train(poisoned, ds.n_detector_rounds);
        const std::vector<LabeledSample> clean = aggregate_train(ds.rounds, ds.n_detector_rounds);

        struct Entry {
            detectors::DetectorKind kind;
            const std::vector<LabeledSample>* train;
            const char* note;
        };
        const std::array<Entry, 4> entries = {
            Entry{detectors::DetectorKind::CAE, &clean, "trained-clean"},
            Entry{detectors::DetectorKind::CAEPlus, &contaminated, "trained-contaminated"},
            Entry{detectors::DetectorKind::Centroid, &clean, "trained-clean"},
            Entry{detectors::DetectorKind::Centroid, &contaminated, "trained-contaminated"},
        };

        for (size_t ei = 0; ei < entries.size(); ++ei) {
            const Entry& e = entries[ei];
            const detectors::DetectorModel model =
                detectors::train_detector(e.kind, *e.train, detector_cfg(cfg, ti, ei));
            ReportRow base = base_row(task.name, cfg.attack, rate,
                                      detectors::detector_name(e.kind),
                                      separator_name(cfg.separator), model.alpha);
            base.note = e.note;
            std::vector<ReportRow> rows;
            for (int r = ds.n_detector_rounds; r < cfg.n_rounds; ++r) {
                const RoundOutcome oc = evaluate_round(
                    model, cfg.separator, poisoned[static_cast<size_t>(r)],
                    ds.rounds[static_cast<size_t>(r)],
                    eval_svm_cfg(cfg, ti * 8 + ei, static_cast<uint64_t>(r)));
                rows.push_back(outcome_row(oc, base, r));
            }
            rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
            rep.rows.push_back(mean_row(rows, base));
        }
    }
    echo_config(rep, cfg, names, warnings);
    return rep;
}

}  // namespace caedet::harness
