#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caedet/tensor.hpp"

namespace caedet {

/// One data point flowing through attacks and detectors. Features live in
/// [0,1]; the label is -1 or +1. poison_flag is ground truth kept by the
/// harness for scoring detectors, never visible to them.
struct LabeledSample {
    Tensor features;          // HxWxC, values in [0,1]
    int label = +1;           // -1 or +1
    bool poison_flag = false;
    int64_t origin_id = -1;   // provenance through shuffling and splits

    size_t feature_count() const { return features.size(); }
};

/// Binary classification task extracted from a multi-class source (or
/// generated synthetically). pos_class samples carry label +1, neg_class
/// label -1.
struct BinaryTask {
    int pos_class = -1;
    int neg_class = -1;
    std::string name;
    std::vector<LabeledSample> samples;
};

/// One periodic-update round: the buffered data the victim SVM retrains
/// on, plus held-out validation/test splits. Poisons, when present, live
/// only in the train split.
struct RoundBuffer {
    int round_index = 0;
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> validation;
    std::vector<LabeledSample> test;
    std::vector<LabeledSample> poisons;  // copies of the injected points, flags set
};

/// The full periodic-update protocol: n rounds, the leading block used to
/// train detectors, the trailing block held out for evaluation.
struct ExperimentDataset {
    std::vector<RoundBuffer> rounds;
    int n_detector_rounds = 0;
    int n_eval_rounds = 0;
    bool sampled_with_replacement = false;
    std::vector<std::string> warnings;

    bool is_detector_round(int i) const { return i < n_detector_rounds; }
    bool is_eval_round(int i) const { return i >= n_detector_rounds; }
};

}  // namespace caedet
