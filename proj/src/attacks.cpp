#include "caedet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "caedet/rng.hpp"

namespace caedet::attacks {

const char* attack_name(AttackKind k) {
    switch (k) {
        case AttackKind::Flip: return "flip";
        case AttackKind::Optimal: return "optimal";
        case AttackKind::SemiOptimal: return "semi";
        case AttackKind::Mixed: return "mixed";
    }
    throw std::logic_error("unknown attack kind");
}

AttackKind attack_from_name(const std::string& name) {
    if (name == "flip") return AttackKind::Flip;
    if (name == "optimal") return AttackKind::Optimal;
    if (name == "semi") return AttackKind::SemiOptimal;
    if (name == "mixed") return AttackKind::Mixed;
    throw std::invalid_argument("unknown attack kind: " + name);
}

void validate(const AttackConfig& cfg) {
    if (cfg.poison_rate < 0.0 || cfg.poison_rate > 0.5)
        throw std::invalid_argument("poison_rate must lie in [0, 0.5]");
    if (cfg.step_size < 0.0) throw std::invalid_argument("step_size must be >= 0");
    if (cfg.max_iters < 0) throw std::invalid_argument("max_iters must be >= 0");
    if (cfg.improvement_tol < 0.0) throw std::invalid_argument("improvement_tol must be >= 0");
    svm::validate(cfg.svm_cfg);
}

int poison_count(double poison_rate, int n_train) {
    if (poison_rate < 0.0 || poison_rate > 0.5)
        throw std::invalid_argument("poison_rate must lie in [0, 0.5]");
    return static_cast<int>(std::ceil(poison_rate * n_train));
}

PoisonSet flip_attack(const std::vector<LabeledSample>& train, int n_p, uint64_t rng_seed) {
    if (n_p < 0) throw std::invalid_argument("n_p must be >= 0");
    if (n_p > static_cast<int>(train.size()))
        throw std::invalid_argument("n_p exceeds the training set size");
    Rng rng(rng_seed);
    std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(train.size()), n_p);

    PoisonSet set;
    set.poisons.reserve(static_cast<size_t>(n_p));
    for (int idx : picks) {
        LabeledSample p = train[static_cast<size_t>(idx)];
        p.label = -p.label;
        p.poison_flag = true;
        set.poisons.push_back(std::move(p));
        set.provenance.push_back({AttackKind::Flip, train[static_cast<size_t>(idx)].origin_id});
        set.trajectory_stats.emplace_back();  // flips take no optimization steps
    }
    return set;
}

Tensor poison_gradient(const svm::SvmModel& model,
                       const std::vector<LabeledSample>& train_set, int poison_index,
                       const std::vector<LabeledSample>& validation) {
    if (poison_index < 0 || poison_index >= static_cast<int>(train_set.size()))
        throw std::invalid_argument("poison_index out of range");
    const LabeledSample& c = train_set[static_cast<size_t>(poison_index)];
    const double ac = model.alpha[static_cast<size_t>(poison_index)];

    Tensor g(c.features.shape);
    if (ac == 0.0) return g;
    for (const LabeledSample& v : validation) {
        if (v.label * svm::decision_value(model, v.features) >= 1.0) continue;  // outside hinge
        const double coef = -ac * c.label * v.label;
        for (size_t i = 0; i < g.size(); ++i) g[i] += coef * v.features[i];
    }
    return g;
}

namespace {

/// Shared core of the optimal and semi-optimal attacks; flip_labels
/// selects between them.
PoisonSet gradient_attack(const std::vector<LabeledSample>& train,
                          const std::vector<LabeledSample>& validation, int n_p,
                          const AttackConfig& cfg, bool flip_labels) {
    validate(cfg);
    if (n_p < 0) throw std::invalid_argument("n_p must be >= 0");
    if (n_p > static_cast<int>(train.size()))
        throw std::invalid_argument("n_p exceeds the training set size");
    if (validation.empty()) throw std::invalid_argument("validation set must be nonempty");

    Rng rng(cfg.rng_seed);
    std::vector<int> picks = rng.sample_without_replacement(static_cast<int>(train.size()), n_p);

    PoisonSet set;
    const int n_tr = static_cast<int>(train.size());
    std::vector<LabeledSample> pool = train;
    for (int idx : picks) {
        LabeledSample p = train[static_cast<size_t>(idx)];
        if (flip_labels) p.label = -p.label;
        p.poison_flag = true;
        set.provenance.push_back({flip_labels ? AttackKind::Optimal : AttackKind::SemiOptimal,
                                  p.origin_id});
        pool.push_back(p);
        set.poisons.push_back(std::move(p));
    }
    set.trajectory_stats.resize(static_cast<size_t>(n_p));
    if (n_p == 0) return set;

    svm::IncrementalSvmTrainer trainer(std::move(pool), cfg.svm_cfg);
    double cur_loss = svm::hinge_loss_sum(trainer.model(), validation);

    for (int c = 0; c < n_p; ++c) {
        const int slot = n_tr + c;
        PoisonTrajectory& traj = set.trajectory_stats[static_cast<size_t>(c)];
        traj.val_loss.push_back(cur_loss);

        for (int it = 0; it < cfg.max_iters; ++it) {
            Tensor g = poison_gradient(trainer.model(), trainer.samples(), slot, validation);
            double norm = 0.0;
            for (size_t i = 0; i < g.size(); ++i) norm += g[i] * g[i];
            norm = std::sqrt(norm);
            if (norm < 1e-12) {
                traj.stopped_on_zero_gradient = true;
                break;
            }

            const Tensor old_x = trainer.samples()[static_cast<size_t>(slot)].features;
            Tensor cand = old_x;
            const double scale = cfg.step_size / norm;
            for (size_t i = 0; i < cand.size(); ++i)
                cand[i] = std::clamp(cand[i] + scale * g[i], 0.0, 1.0);

            trainer.set_features(slot, cand);
            const double new_loss = svm::hinge_loss_sum(trainer.retrain(), validation);
            if (new_loss - cur_loss < cfg.improvement_tol) {
                trainer.set_features(slot, old_x);  // step rejected
                trainer.retrain();
                break;
            }
            cur_loss = new_loss;
            traj.val_loss.push_back(cur_loss);
            traj.accepted_steps += 1;
        }
        set.poisons[static_cast<size_t>(c)].features =
            trainer.samples()[static_cast<size_t>(slot)].features;
    }
    return set;
}

}  // namespace

PoisonSet optimal_attack(const std::vector<LabeledSample>& train,
                         const std::vector<LabeledSample>& validation, int n_p,
                         const AttackConfig& cfg) {
    return gradient_attack(train, validation, n_p, cfg, /*flip_labels=*/true);
}

PoisonSet semi_optimal_attack(const std::vector<LabeledSample>& train,
                              const std::vector<LabeledSample>& validation, int n_p,
                              const AttackConfig& cfg) {
    return gradient_attack(train, validation, n_p, cfg, /*flip_labels=*/false);
}

PoisonSet mixed_attack(const std::vector<LabeledSample>& train,
                       const std::vector<LabeledSample>& validation, int n_p,
                       const AttackConfig& cfg) {
    validate(cfg);
    if (n_p < 0) throw std::invalid_argument("n_p must be >= 0");
    const int base = n_p / 3, rem = n_p % 3;
    const int n_flip = base + (rem > 0 ? 1 : 0);
    const int n_opt = base + (rem > 1 ? 1 : 0);
    const int n_semi = base;

    AttackConfig opt_cfg = cfg;
    opt_cfg.rng_seed = derive_seed(cfg.rng_seed, 1);
    AttackConfig semi_cfg = cfg;
    semi_cfg.rng_seed = derive_seed(cfg.rng_seed, 2);

    PoisonSet set = flip_attack(train, n_flip, derive_seed(cfg.rng_seed, 0));
    auto append = [&set](PoisonSet part) {
        for (size_t i = 0; i < part.poisons.size(); ++i) {
            set.poisons.push_back(std::move(part.poisons[i]));
            set.provenance.push_back(part.provenance[i]);
            set.trajectory_stats.push_back(std::move(part.trajectory_stats[i]));
        }
    };
    append(optimal_attack(train, validation, n_opt, opt_cfg));
    append(semi_optimal_attack(train, validation, n_semi, semi_cfg));
    return set;
}

PoisonSet run_attack(AttackKind kind, const std::vector<LabeledSample>& train,
                     const std::vector<LabeledSample>& validation, int n_p,
                     const AttackConfig& cfg) {
    switch (kind) {
        case AttackKind::Flip: return flip_attack(train, n_p, cfg.rng_seed);
        case AttackKind::Optimal: return optimal_attack(train, validation, n_p, cfg);
        case AttackKind::SemiOptimal: return semi_optimal_attack(train, validation, n_p, cfg);
        case AttackKind::Mixed: return mixed_attack(train, validation, n_p, cfg);
    }
    throw std::logic_error("unknown attack kind");
}

RoundBuffer poison_round(const RoundBuffer& round, AttackKind kind, const AttackConfig& cfg) {
    validate(cfg);
    const int n_p = poison_count(cfg.poison_rate, static_cast<int>(round.train.size()));
    PoisonSet set = run_attack(kind, round.train, round.validation, n_p, cfg);

    RoundBuffer out = round;
    out.poisons = set.poisons;
    for (LabeledSample& p : set.poisons) out.train.push_back(std::move(p));
    return out;
}

}  // namespace caedet::attacks
