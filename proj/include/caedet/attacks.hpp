#pragma once

#include <cstdint>
#include <vector>

#include "caedet/svm.hpp"
#include "caedet/tensor.hpp"
#include "caedet/types.hpp"

namespace caedet::attacks {

enum class AttackKind : uint8_t { Flip, Optimal, SemiOptimal, Mixed };

const char* attack_name(AttackKind k);
AttackKind attack_from_name(const std::string& name);

struct AttackConfig {
    double poison_rate = 0.1;      // n_p = ceil(rate * clean train size)
    double step_size = 0.1;        // eta, applied to the normalized gradient
    int max_iters = 50;            // per poison
    double improvement_tol = 1e-4; // minimum validation-loss gain to accept a step
    uint64_t rng_seed = 0;
    svm::SvmTrainConfig svm_cfg;   // victim retraining during optimization
};

void validate(const AttackConfig& cfg);

int poison_count(double poison_rate, int n_train);

struct PoisonProvenance {
    AttackKind kind = AttackKind::Flip;
    int64_t source_origin_id = -1;
};

/// Per-poison optimization record: validation hinge-loss sum at
/// initialization and after every accepted step (non-decreasing).
struct PoisonTrajectory {
    std::vector<double> val_loss;
    int accepted_steps = 0;
    bool stopped_on_zero_gradient = false;
};

struct PoisonSet {
    std::vector<LabeledSample> poisons;  // poison_flag set on every entry
    std::vector<PoisonProvenance> provenance;
    std::vector<PoisonTrajectory> trajectory_stats;

    size_t size() const { return poisons.size(); }
};

/// Copies of n_p training samples, drawn without replacement, with the
/// label negated and the features untouched.
PoisonSet flip_attack(const std::vector<LabeledSample>& train, int n_p, uint64_t rng_seed);

/// Gradient-ascent poisons: initialized as flipped copies of random
/// training samples, then moved one at a time to maximize the validation
/// hinge-loss sum of the retrained victim. Steps use the fixed-dual
/// gradient, are normalized to length step_size, clamped to [0,1], and
/// kept only when the retrained loss improves by at least
/// improvement_tol.
PoisonSet optimal_attack(const std::vector<LabeledSample>& train,
                         const std::vector<LabeledSample>& validation, int n_p,
                         const AttackConfig& cfg);

/// Same optimization as optimal_attack but the poisons keep their source
/// labels.
PoisonSet semi_optimal_attack(const std::vector<LabeledSample>& train,
                              const std::vector<LabeledSample>& validation, int n_p,
                              const AttackConfig& cfg);

/// One third of each: counts split as evenly as possible, remainder going
/// to flip first, then optimal; the three parts are generated
/// independently and concatenated.
PoisonSet mixed_attack(const std::vector<LabeledSample>& train,
                       const std::vector<LabeledSample>& validation, int n_p,
                       const AttackConfig& cfg);

PoisonSet run_attack(AttackKind kind, const std::vector<LabeledSample>& train,
                     const std::vector<LabeledSample>& validation, int n_p,
                     const AttackConfig& cfg);

/// Round with poisons appended to the train split (validation/test
/// untouched); the injected copies are also kept in round.poisons.
RoundBuffer poison_round(const RoundBuffer& round, AttackKind kind, const AttackConfig& cfg);

/// d(validation hinge-loss sum)/d(features of train_set[poison_index]),
/// holding the duals fixed: -alpha_c y_c * sum of y_j x_j over validation
/// samples inside the hinge. Exposed for oracle comparison.
Tensor poison_gradient(const svm::SvmModel& model,
                       const std::vector<LabeledSample>& train_set, int poison_index,
                       const std::vector<LabeledSample>& validation);

}  // namespace caedet::attacks
