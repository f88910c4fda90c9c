#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caedet/gmm.hpp"
#include "caedet/nn.hpp"
#include "caedet/tensor.hpp"
#include "caedet/types.hpp"

namespace caedet::detectors {

enum class DetectorKind : uint8_t { RAE, CAE, CAEPlus, Centroid };

const char* detector_name(DetectorKind k);
DetectorKind detector_from_name(const std::string& name);

/// Min/max of the raw (reconstruction error, classification loss)
/// channels over the detector's training data, frozen there and applied
/// with clamping at evaluation time. A channel that never varied is
/// marked constant and normalizes to 0.
struct ScoreNormalizer {
    double re_min = 0.0, re_max = 1.0;
    double loss_min = 0.0, loss_max = 1.0;
    bool re_constant = false;
    bool loss_constant = false;

    double norm_re(double v) const;
    double norm_loss(double v) const;
};

struct DetectorModel {
    DetectorKind kind = DetectorKind::CAEPlus;
    nn::NetworkParams cae_params;  // CAE and CAEPlus
    nn::NetworkParams rae_params;  // RAE and CAEPlus
    Tensor centroid_pos, centroid_neg;  // Centroid
    ScoreNormalizer normalizer;
    double alpha = 0.66;  // weight of the reconstruction-error term
    bool trained = false;
};

struct DetectorTrainConfig {
    nn::TrainConfig cae;   // capped at 100 epochs
    nn::TrainConfig rae;
    double alpha = 0.66;

    DetectorTrainConfig() {
        cae.epochs = 100;
        rae.epochs = 300;
    }
};

/// Rejects alpha outside [0,1] and CAE epoch counts beyond the cap of
/// 100 (the short schedule is what keeps the classifier from learning
/// its own contamination).
void validate(const DetectorTrainConfig& cfg);

/// Train a detector on a (possibly contaminated) buffer. Network kinds
/// fit their autoencoders on the buffer; Centroid records per-class mean
/// features. Kinds that use labels reject single-class data. The score
/// normalizer is fitted on the same buffer after training.
DetectorModel train_detector(DetectorKind kind, const std::vector<LabeledSample>& training_data,
                             const DetectorTrainConfig& cfg);

/// Reuse an already-trained model's networks under a different scoring
/// kind, refitting the normalizer on training_data (the raw channels
/// change with the kind). The source must hold every network the target
/// kind scores with — in practice: derive RAE/CAE views from a trained
/// CAEPlus. Training a fresh detector of the target kind with the same
/// seeds yields identical networks; this just skips the repeat.
DetectorModel rescore_view(const DetectorModel& model, DetectorKind kind,
                           const std::vector<LabeledSample>& training_data, double alpha);

/// One scored sample: both normalized channels, their combination, and
/// bookkeeping for metric computation later.
struct ScoredSample {
    double re = 0.0;
    double loss = 0.0;
    double combined = 0.0;  // alpha*re + (1-alpha)*loss
    int index = -1;         // position in the scored buffer
    bool poison_truth = false;
};

ScoredSample score(const DetectorModel& model, const LabeledSample& sample);

/// Score a whole buffer with one batched network pass.
std::vector<ScoredSample> score_batch(const DetectorModel& model,
                                      const std::vector<LabeledSample>& samples);

struct SeparatorKind {
    enum Kind : uint8_t { Gmm, TopK } kind = Gmm;
    int k = 0;  // TopK only

    static SeparatorKind gmm() { return {Gmm, 0}; }
    static SeparatorKind top_k(int k);
};

/// Split a scored buffer into clean/poison verdicts (true = poison).
/// Gmm fits a two-component mixture on the combined scores, calls the
/// larger-mean component poison, and assigns by posterior; if the fit is
/// degenerate or the means sit closer than 0.1 pooled standard
/// deviations, the whole buffer is ruled clean. TopK flags the k largest
/// scores, ties resolved by input order.
std::vector<char> separate(const std::vector<ScoredSample>& scores, SeparatorKind separator);

struct DetectionMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
};

/// Precision/recall/F1 with the empty-set conventions: precision is 1
/// when nothing was flagged, recall is 1 when no poisons exist, and F1 is
/// 0 when precision + recall is 0.
DetectionMetrics detection_metrics(const std::vector<char>& verdicts,
                                   const std::vector<char>& truth);

struct FilterResult {
    std::vector<LabeledSample> kept;   // training samples not ruled poison
    std::vector<char> verdicts;        // per training sample
    std::vector<ScoredSample> scores;
};

/// Score the round's training split, separate, and return the samples
/// that survive.
FilterResult filter_round(const DetectorModel& model, SeparatorKind separator,
                          const RoundBuffer& round);

/// Bit-exact checkpoint of the full detector (networks, centroids,
/// normalizer, alpha).
void save_detector(const std::string& path, const DetectorModel& model);
DetectorModel load_detector(const std::string& path);

}  // namespace caedet::detectors
