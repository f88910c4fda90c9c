#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "caedet/attacks.hpp"
#include "caedet/dataset.hpp"
#include "caedet/detectors.hpp"
#include "caedet/harness.hpp"
#include "caedet/rng.hpp"
#include "caedet/svm.hpp"

namespace {

using caedet::LabeledSample;
using caedet::RoundBuffer;
namespace harness = caedet::harness;

struct CliOptions {
    harness::ExperimentConfig cfg;
    std::string attack_name = "flip";
    std::string detector_name = "cae+";
    std::string separator = "gmm";
    double rate = 0.1;
    std::string out = "-";
    std::string format = "csv";
    std::string detector_file;
    std::vector<int> k_grid = {1, 2, 5, 10, 15, 20};
    std::vector<double> alpha_grid = {0.0, 0.25, 0.5, 0.66, 0.75, 1.0};
};

void add_dataset_flags(CLI::App* app, harness::DatasetSpec& ds) {
    app->add_option("--source", ds.source, "dataset source: idx, synth-images, synth-blobs")
        ->check(CLI::IsMember({"idx", "synth-images", "synth-blobs"}));
    app->add_option("--data-dir", ds.data_dir, "directory holding idx files")
        ->envname("CAEDET_DATA_DIR");
    app->add_option("--images-file", ds.images_file, "idx image file name");
    app->add_option("--labels-file", ds.labels_file, "idx label file name");
    app->add_option("--pos", ds.pos_class, "positive source class");
    app->add_option("--neg", ds.neg_class, "negative source class");
    app->add_option("--pair", ds.image_pair, "synthetic image prototype pair index (0..3)");
    app->add_option("--n-per-class", ds.n_per_class, "synthetic samples per class");
    app->add_option("--blob-dim", ds.blob_dim, "synthetic blob dimensionality");
    app->add_option("--blob-distance", ds.blob_distance, "blob center separation");
    app->add_option("--blob-spread", ds.blob_spread, "blob standard deviation");
}

void add_common_flags(CLI::App* app, CliOptions& o) {
    add_dataset_flags(app, o.cfg.dataset);
    app->add_option("--seed", o.cfg.seed, "top-level rng seed");
    app->add_option("--C", o.cfg.svm_C, "SVM regularization constant");
    app->add_option("--svm-tol", o.cfg.svm_tolerance, "SVM KKT tolerance");
    app->add_option("--rate", o.rate, "poison fraction of the training split");
    app->add_option("--attack", o.attack_name, "attack kind: flip, optimal, semi, mixed")
        ->check(CLI::IsMember({"flip", "optimal", "semi", "mixed"}));
    app->add_option("--step", o.cfg.attack_step, "attack gradient step size");
    app->add_option("--iters", o.cfg.attack_max_iters, "attack iterations per poison");
    app->add_option("--alpha", o.cfg.alpha, "reconstruction/loss mixing weight");
    app->add_option("--separator", o.separator, "poison separator: gmm or topN (e.g. top10)");
    app->add_option("--rounds", o.cfg.n_rounds, "total rounds");
    app->add_option("--eval-rounds", o.cfg.n_eval_rounds, "evaluation rounds at the end");
    app->add_option("--cae-epochs", o.cfg.cae_epochs, "classification autoencoder epochs");
    app->add_option("--rae-epochs", o.cfg.rae_epochs, "reconstruction autoencoder epochs");
    app->add_option("--epoch-scale", o.cfg.epoch_scale, "epoch scale factor in (0,1]");
    app->add_option("--batch", o.cfg.batch_size, "minibatch size");
    app->add_option("--lr", o.cfg.learning_rate, "Adam learning rate");
    app->add_option("-o,--out", o.out, "output path, '-' for stdout");
}

caedet::detectors::SeparatorKind parse_separator(const std::string& s) {
    if (s == "gmm") return caedet::detectors::SeparatorKind::gmm();
    if (s.rfind("top", 0) == 0)
        return caedet::detectors::SeparatorKind::top_k(std::stoi(s.substr(3)));
    throw CLI::ValidationError("separator", "expected 'gmm' or 'topN'");
}

void write_text(const std::string& path, const std::string& body) {
    if (path == "-") {
        std::cout << body;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << body;
}

nlohmann::ordered_json sample_json(const LabeledSample& s) {
    nlohmann::ordered_json j;
    j["label"] = s.label;
    j["poison"] = s.poison_flag;
    j["origin_id"] = s.origin_id;
    j["features"] = s.features.data;
    return j;
}

int cmd_attack(const CliOptions& o) {
    harness::ExperimentConfig cfg = o.cfg;
    cfg.attack = caedet::attacks::attack_from_name(o.attack_name);
    cfg.rate_grid = {o.rate};
    const caedet::BinaryTask task = harness::load_task(cfg.dataset, cfg.seed);
    const caedet::ExperimentDataset ds =
        caedet::data::build_rounds(task, 1, cfg.splits, caedet::derive_seed(cfg.seed, 1), 1);

    caedet::attacks::AttackConfig at;
    at.poison_rate = o.rate;
    at.step_size = cfg.attack_step;
    at.max_iters = cfg.attack_max_iters;
    at.improvement_tol = cfg.attack_improvement_tol;
    at.rng_seed = caedet::derive_seed(cfg.seed, 3);
    at.svm_cfg.C = cfg.svm_C;
    at.svm_cfg.tolerance = cfg.svm_tolerance;
    at.svm_cfg.rng_seed = caedet::derive_seed(cfg.seed, 4);

    const RoundBuffer poisoned = caedet::attacks::poison_round(ds.rounds[0], cfg.attack, at);

    nlohmann::ordered_json j;
    j["task"] = task.name;
    j["attack"] = o.attack_name;
    j["rate"] = o.rate;
    j["n_poisons"] = poisoned.poisons.size();
    j["poisons"] = nlohmann::ordered_json::array();
    for (const LabeledSample& p : poisoned.poisons) j["poisons"].push_back(sample_json(p));
    j["train"] = nlohmann::ordered_json::array();
    for (const LabeledSample& s : poisoned.train) j["train"].push_back(sample_json(s));
    write_text(o.out, j.dump(2) + "\n");
    return 0;
}

int cmd_train_detector(const CliOptions& o) {
    harness::ExperimentConfig cfg = o.cfg;
    cfg.attack = caedet::attacks::attack_from_name(o.attack_name);
    const caedet::detectors::DetectorKind kind =
        caedet::detectors::detector_from_name(o.detector_name);
    const caedet::BinaryTask task = harness::load_task(cfg.dataset, cfg.seed);
    const int n_train_rounds = std::max(1, cfg.n_rounds - cfg.n_eval_rounds);
    const caedet::ExperimentDataset ds = caedet::data::build_rounds(
        task, n_train_rounds, cfg.splits, caedet::derive_seed(cfg.seed, 1), 0);

    std::vector<LabeledSample> agg;
    for (size_t r = 0; r < ds.rounds.size(); ++r) {
        caedet::attacks::AttackConfig at;
        at.poison_rate = o.rate;
        at.step_size = cfg.attack_step;
        at.max_iters = cfg.attack_max_iters;
        at.improvement_tol = cfg.attack_improvement_tol;
        at.rng_seed = caedet::derive_seed(caedet::derive_seed(cfg.seed, 3), r);
        at.svm_cfg.C = cfg.svm_C;
        at.svm_cfg.tolerance = cfg.svm_tolerance;
        at.svm_cfg.rng_seed = caedet::derive_seed(caedet::derive_seed(cfg.seed, 4), r);
        const RoundBuffer pr = o.rate > 0.0
                                   ? caedet::attacks::poison_round(ds.rounds[r], cfg.attack, at)
                                   : ds.rounds[r];
        agg.insert(agg.end(), pr.train.begin(), pr.train.end());
    }

    caedet::detectors::DetectorTrainConfig dcfg;
    dcfg.alpha = cfg.alpha;
    auto scale = [&](int e) {
        return std::max(1, static_cast<int>(std::lround(e * cfg.epoch_scale)));
    };
    dcfg.cae.epochs = scale(cfg.cae_epochs);
    dcfg.cae.batch_size = cfg.batch_size;
    dcfg.cae.learning_rate = cfg.learning_rate;
    dcfg.cae.rng_seed = caedet::derive_seed(cfg.seed, 5);
    dcfg.rae.epochs = scale(cfg.rae_epochs);
    dcfg.rae.batch_size = cfg.batch_size;
    dcfg.rae.learning_rate = cfg.learning_rate;
    dcfg.rae.rng_seed = caedet::derive_seed(cfg.seed, 6);

    const caedet::detectors::DetectorModel model =
        caedet::detectors::train_detector(kind, agg, dcfg);
    const std::string path = o.out == "-" ? "detector.bin" : o.out;
    caedet::detectors::save_detector(path, model);
    std::cout << "trained " << o.detector_name << " on " << agg.size() << " samples from "
              << n_train_rounds << " rounds -> " << path << "\n";
    return 0;
}

int cmd_filter(const CliOptions& o) {
    if (o.detector_file.empty())
        throw CLI::ValidationError("--detector-file", "a saved detector checkpoint is required");
    const caedet::detectors::DetectorModel model =
        caedet::detectors::load_detector(o.detector_file);

    harness::ExperimentConfig cfg = o.cfg;
    cfg.attack = caedet::attacks::attack_from_name(o.attack_name);
    const caedet::BinaryTask task = harness::load_task(cfg.dataset, cfg.seed);
    const caedet::ExperimentDataset ds =
        caedet::data::build_rounds(task, 1, cfg.splits, caedet::derive_seed(cfg.seed, 2), 1);

    caedet::attacks::AttackConfig at;
    at.poison_rate = o.rate;
    at.step_size = cfg.attack_step;
    at.max_iters = cfg.attack_max_iters;
    at.improvement_tol = cfg.attack_improvement_tol;
    at.rng_seed = caedet::derive_seed(cfg.seed, 3);
    at.svm_cfg.C = cfg.svm_C;
    at.svm_cfg.tolerance = cfg.svm_tolerance;
    at.svm_cfg.rng_seed = caedet::derive_seed(cfg.seed, 4);
    const RoundBuffer pr = o.rate > 0.0
                               ? caedet::attacks::poison_round(ds.rounds[0], cfg.attack, at)
                               : ds.rounds[0];

    const caedet::detectors::FilterResult fr =
        caedet::detectors::filter_round(model, parse_separator(o.separator), pr);
    std::vector<char> truth;
    for (const LabeledSample& s : pr.train) truth.push_back(s.poison_flag ? 1 : 0);
    const caedet::detectors::DetectionMetrics m =
        caedet::detectors::detection_metrics(fr.verdicts, truth);

    nlohmann::ordered_json j;
    j["task"] = task.name;
    j["attack"] = o.attack_name;
    j["rate"] = o.rate;
    j["detector"] = caedet::detectors::detector_name(model.kind);
    j["separator"] = o.separator;
    j["n_train"] = pr.train.size();
    j["n_kept"] = fr.kept.size();
    j["n_flagged"] = pr.train.size() - fr.kept.size();
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["verdicts"] = nlohmann::ordered_json::array();
    for (char v : fr.verdicts) j["verdicts"].push_back(static_cast<bool>(v));
    j["scores"] = nlohmann::ordered_json::array();
    for (const auto& s : fr.scores) {
        nlohmann::ordered_json sj;
        sj["re"] = s.re;
        sj["loss"] = s.loss;
        sj["combined"] = s.combined;
        j["scores"].push_back(sj);
    }
    write_text(o.out, j.dump(2) + "\n");
    return 0;
}

int cmd_experiment(const std::string& which, const CliOptions& o) {
    harness::ExperimentConfig cfg = o.cfg;
    cfg.attack = caedet::attacks::attack_from_name(o.attack_name);
    cfg.rate_grid = {o.rate};
    cfg.detector_kinds = {caedet::detectors::detector_from_name(o.detector_name)};
    cfg.separator = parse_separator(o.separator);

    harness::Report rep;
    if (which == "periodic")
        rep = harness::run_periodic_update(cfg);
    else if (which == "threshold")
        rep = harness::run_threshold_sweep(cfg, o.k_grid);
    else if (which == "alpha")
        rep = harness::run_alpha_sweep(cfg, o.alpha_grid);
    else if (which == "ablation")
        rep = harness::run_ablation(cfg);
    else
        rep = harness::run_robustness(cfg);

    const harness::ReportFormat fmt = harness::format_from_name(o.format);
    if (o.out == "-")
        std::cout << harness::render_report(rep, fmt);
    else
        harness::emit_report(rep, fmt, o.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"poisoning attacks and autoencoder-based defenses for a periodically "
                 "retrained linear SVM"};
    app.require_subcommand(1);
    CliOptions o;

    CLI::App* attack = app.add_subcommand("attack", "craft a poison set for one round");
    add_common_flags(attack, o);

    CLI::App* train = app.add_subcommand("train-detector",
                                         "train a detector on aggregated round buffers");
    add_common_flags(train, o);
    train->add_option("--detector", o.detector_name,
                      "detector kind: rae, cae, cae+, centroid");

    CLI::App* filter = app.add_subcommand("filter", "filter one poisoned round");
    add_common_flags(filter, o);
    filter->add_option("--detector-file", o.detector_file, "saved detector checkpoint");

    CLI::App* exp = app.add_subcommand("experiment", "run a full experiment and emit a report");
    exp->require_subcommand(1);
    const std::vector<std::string> kinds = {"periodic", "threshold", "alpha", "ablation",
                                            "robustness"};
    for (const std::string& k : kinds) {
        CLI::App* sub = exp->add_subcommand(k);
        add_common_flags(sub, o);
        sub->add_option("--detector", o.detector_name, "detector kind");
        sub->add_option("--format", o.format, "report format: csv or json")
            ->check(CLI::IsMember({"csv", "json"}));
        if (k == "threshold") sub->add_option("--k-grid", o.k_grid, "top-K values to sweep");
        if (k == "alpha") sub->add_option("--alpha-grid", o.alpha_grid, "alpha values to sweep");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*attack) return cmd_attack(o);
        if (*train) return cmd_train_detector(o);
        if (*filter) return cmd_filter(o);
        for (const std::string& k : kinds)
            if (*exp->get_subcommand(k)) return cmd_experiment(k, o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
