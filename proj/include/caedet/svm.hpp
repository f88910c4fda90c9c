#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "caedet/tensor.hpp"
#include "caedet/types.hpp"

namespace caedet::svm {

/// Linear soft-margin SVM. alpha holds the dual coefficients in training
/// order; the optimal attack reads them to form its gradient. w is kept
/// consistent with sum_i alpha_i y_i x_i.
struct SvmModel {
    std::vector<double> w;
    double b = 0.0;
    std::vector<double> alpha;
    double C = 1.0;
};

struct SvmTrainConfig {
    double C = 1.0;
    double tolerance = 1e-3;  // max allowed KKT violation at convergence
    int max_passes = 10000;
    uint64_t rng_seed = 0;
};

void validate(const SvmTrainConfig& cfg);

/// Dual coordinate ascent with pairwise (SMO-style) updates until the
/// largest KKT violation drops below cfg.tolerance or max_passes full
/// sweeps elapse. Deterministic for a fixed seed. Rejects single-class
/// input.
SvmModel train_svm(const std::vector<LabeledSample>& train, const SvmTrainConfig& cfg);

/// f(x) = w.x + b over the flattened features.
double decision_value(const SvmModel& model, const Tensor& x);

/// sign(f), with f = 0 mapped to +1.
int predict(const SvmModel& model, const Tensor& x);

/// Fraction of samples whose prediction matches the label. Rejects an
/// empty set.
double accuracy(const SvmModel& model, const std::vector<LabeledSample>& samples);

/// sum_j max(0, 1 - y_j f(x_j)); the attacker objective on a validation
/// split. Empty input gives 0.
double hinge_loss_sum(const SvmModel& model, const std::vector<LabeledSample>& samples);

/// Largest violation of the KKT optimality conditions over the training
/// set; the convergence measure train_svm drives below tolerance.
double max_kkt_violation(const SvmModel& model, const std::vector<LabeledSample>& train);

/// W(alpha) = sum alpha_i - 1/2 sum_ij alpha_i alpha_j y_i y_j x_i.x_j,
/// the objective the dual solver maximizes.
double dual_objective(const SvmModel& model, const std::vector<LabeledSample>& train);

void save_svm(const std::string& path, const SvmModel& model);
SvmModel load_svm(const std::string& path);

/// Repeated retraining with single-sample feature edits — the inner loop
/// of the gradient-driven attacks. Keeps the Gram matrix cached, patches
/// one row/column per edit, and warm-starts each solve from the previous
/// dual point (feasible because labels keep sum alpha_i y_i = 0).
class IncrementalSvmTrainer {
public:
    IncrementalSvmTrainer(std::vector<LabeledSample> train, const SvmTrainConfig& cfg);
    ~IncrementalSvmTrainer();
    IncrementalSvmTrainer(IncrementalSvmTrainer&&) noexcept;
    IncrementalSvmTrainer& operator=(IncrementalSvmTrainer&&) noexcept;

    int size() const;
    const std::vector<LabeledSample>& samples() const;

    /// Replace the features of one training sample (shape must match).
    void set_features(int index, const Tensor& x);
    void set_label(int index, int label);

    /// Re-run the solver from the current dual point; returns the refit
    /// model. Deterministic given the construction seed and the sequence
    /// of calls.
    const SvmModel& retrain();

    const SvmModel& model() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace caedet::svm
