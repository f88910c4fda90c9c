#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caedet/attacks.hpp"
#include "caedet/dataset.hpp"
#include "caedet/detectors.hpp"
#include "caedet/report.hpp"
#include "caedet/types.hpp"

namespace caedet::harness {

/// Where the experiment data comes from. "idx" reads the standard binary
/// image/label container from data_dir; the synth kinds need no files.
struct DatasetSpec {
    std::string source = "synth-images";  // "idx" | "synth-images" | "synth-blobs"
    std::string data_dir;
    std::string images_file = "train-images-idx3-ubyte";
    std::string labels_file = "train-labels-idx1-ubyte";
    int pos_class = 4;
    int neg_class = 0;
    int image_pair = 0;      // synth-images: index into data::default_image_pairs()
    int n_per_class = 4000;  // synth pool size per class
    int blob_dim = 16;
    double blob_distance = 1.2;
    double blob_spread = 0.1;
};

BinaryTask load_task(const DatasetSpec& spec, uint64_t seed);

/// The task list the robustness experiment cycles through: all four
/// synthetic image pairs, or the two digit pairs when reading idx data.
std::vector<BinaryTask> robustness_tasks(const DatasetSpec& spec, uint64_t seed);

struct ExperimentConfig {
    DatasetSpec dataset;
    attacks::AttackKind attack = attacks::AttackKind::Flip;
    std::vector<double> rate_grid = {0.1};
    std::vector<detectors::DetectorKind> detector_kinds = {detectors::DetectorKind::CAEPlus};
    detectors::SeparatorKind separator = detectors::SeparatorKind::gmm();
    double alpha = 0.66;

    int n_rounds = 60;      // leading rounds train the detector,
    int n_eval_rounds = 10; // trailing rounds are evaluated
    data::SplitSizes splits{};

    double svm_C = 1.0;
    double svm_tolerance = 1e-3;

    double attack_step = 0.1;
    int attack_max_iters = 50;
    double attack_improvement_tol = 1e-4;

    int cae_epochs = 100;  // pre-scaling schedule
    int rae_epochs = 300;
    int batch_size = 256;
    double learning_rate = 1e-3;
    double epoch_scale = 1.0;  // desk-scale knob, in (0,1]

    uint64_t seed = 1;
};

void validate(const ExperimentConfig& cfg);

/// The full periodic-update protocol: poison every round, train each
/// detector on the contaminated aggregate of the leading rounds, then for
/// each trailing round measure detection quality and the SVM accuracy
/// with no defense, with filtering, and on clean data.
Report run_periodic_update(const ExperimentConfig& cfg);

/// Detection F1 as a function of the top-K cutoff, with the
/// threshold-free mixture separation as a reference row.
Report run_threshold_sweep(const ExperimentConfig& cfg, const std::vector<int>& k_grid);

/// Detection F1 as a function of the score weight alpha, for every
/// attack kind. Channels are scored once per attack; only the
/// combination changes with alpha.
Report run_alpha_sweep(const ExperimentConfig& cfg, const std::vector<double>& alpha_grid);

/// RAE-only / CAE-only / joint scoring compared on identical rounds,
/// seeds and trained networks, across all four attack kinds.
Report run_ablation(const ExperimentConfig& cfg);

/// Detectors trained on clean versus contaminated aggregates, across the
/// configured task list, for the configured attack.
Report run_robustness(const ExperimentConfig& cfg);

}  // namespace caedet::harness
