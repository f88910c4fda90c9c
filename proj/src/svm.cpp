#include "caedet/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "caedet/rng.hpp"
#include "caedet/serialize.hpp"

namespace caedet::svm {

namespace {

constexpr double kBoundSlack = 1e-12;

/// The pairwise dual ascent core, working on flattened rows with a cached
/// Gram matrix. take_step/examine follow the classic SMO structure; the
/// partner-search fallbacks start at seeded offsets instead of random
/// ones so runs are reproducible.
struct SmoCore {
    int n = 0, d = 0;
    std::vector<double> X;     // n*d row-major
    std::vector<int> y;
    double C = 1.0;
    double tol = 1e-3;
    int max_passes = 10000;

    std::vector<double> gram;  // n*n
    std::vector<double> alpha;
    double b = 0.0;
    std::vector<double> E;     // f(x_i) - y_i

    void init(const std::vector<LabeledSample>& train, const SvmTrainConfig& cfg) {
        n = static_cast<int>(train.size());
        if (n < 2) throw std::invalid_argument("training set needs at least 2 samples");
        d = static_cast<int>(train.front().feature_count());
        C = cfg.C;
        tol = cfg.tolerance;
        max_passes = cfg.max_passes;

        X.assign(static_cast<size_t>(n) * d, 0.0);
        y.resize(static_cast<size_t>(n));
        bool saw_pos = false, saw_neg = false;
        for (int i = 0; i < n; ++i) {
            const LabeledSample& s = train[static_cast<size_t>(i)];
            if (static_cast<int>(s.feature_count()) != d)
                throw std::invalid_argument("inconsistent feature shapes in training set");
            if (s.label != -1 && s.label != +1)
                throw std::invalid_argument("labels must be -1 or +1");
            (s.label == +1 ? saw_pos : saw_neg) = true;
            y[static_cast<size_t>(i)] = s.label;
            std::copy_n(s.features.data.data(), d, X.data() + static_cast<size_t>(i) * d);
        }
        if (!saw_pos || !saw_neg)
            throw std::invalid_argument("training set must contain both classes");

        gram.assign(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) {
                const double v = dot_rows(i, j);
                gram[static_cast<size_t>(i) * n + j] = v;
                gram[static_cast<size_t>(j) * n + i] = v;
            }
        alpha.assign(static_cast<size_t>(n), 0.0);
        b = 0.0;
        E.assign(static_cast<size_t>(n), 0.0);
        reset_errors();
    }

    double dot_rows(int i, int j) const {
        const double* a = X.data() + static_cast<size_t>(i) * d;
        const double* c = X.data() + static_cast<size_t>(j) * d;
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += a[k] * c[k];
        return s;
    }

    double k(int i, int j) const { return gram[static_cast<size_t>(i) * n + j]; }

    /// Recompute the whole error cache from alpha and b.
    void reset_errors() {
        for (int i = 0; i < n; ++i) {
            double f = b;
            for (int j = 0; j < n; ++j)
                f += alpha[static_cast<size_t>(j)] * y[static_cast<size_t>(j)] * k(j, i);
            E[static_cast<size_t>(i)] = f - y[static_cast<size_t>(i)];
        }
    }

    /// Replace row i with new features and patch the Gram row/column.
    void set_row(int i, const double* xi) {
        std::copy_n(xi, d, X.data() + static_cast<size_t>(i) * d);
        for (int j = 0; j < n; ++j) {
            const double v = dot_rows(i, j);
            gram[static_cast<size_t>(i) * n + j] = v;
            gram[static_cast<size_t>(j) * n + i] = v;
        }
    }

    bool take_step(int i1, int i2) {
        if (i1 == i2) return false;
        const double a1old = alpha[static_cast<size_t>(i1)];
        const double a2old = alpha[static_cast<size_t>(i2)];
        const int y1 = y[static_cast<size_t>(i1)], y2 = y[static_cast<size_t>(i2)];
        const double E1 = E[static_cast<size_t>(i1)], E2 = E[static_cast<size_t>(i2)];
        const double s = y1 * y2;

        double L, H;
        if (y1 != y2) {
            L = std::max(0.0, a2old - a1old);
            H = std::min(C, C + a2old - a1old);
        } else {
            L = std::max(0.0, a1old + a2old - C);
            H = std::min(C, a1old + a2old);
        }
        if (H - L < kBoundSlack) return false;

        const double k11 = k(i1, i1), k12 = k(i1, i2), k22 = k(i2, i2);
        const double eta = k11 + k22 - 2.0 * k12;

        double a2;
        if (eta > kBoundSlack) {
            a2 = std::clamp(a2old + y2 * (E1 - E2) / eta, L, H);
        } else {
            // flat direction (identical rows): compare the dual objective
            // at both ends of the feasible segment
            const double gamma = a1old + s * a2old;
            const double g1 = E1 + y1 - b, g2 = E2 + y2 - b;
            const double v1 = g1 - a1old * y1 * k11 - a2old * y2 * k12;
            const double v2 = g2 - a1old * y1 * k12 - a2old * y2 * k22;
            auto obj_at = [&](double a2c) {
                const double a1c = gamma - s * a2c;
                return a1c + a2c - 0.5 * k11 * a1c * a1c - 0.5 * k22 * a2c * a2c -
                       s * k12 * a1c * a2c - y1 * a1c * v1 - y2 * a2c * v2;
            };
            const double lo = obj_at(L), hi = obj_at(H);
            if (lo > hi + kBoundSlack) a2 = L;
            else if (hi > lo + kBoundSlack) a2 = H;
            else return false;
        }
        if (std::abs(a2 - a2old) < 1e-10) return false;

        const double a1 = std::clamp(a1old + s * (a2old - a2), 0.0, C);

        const double d1 = (a1 - a1old) * y1, d2 = (a2 - a2old) * y2;
        const double b1 = b - E1 - d1 * k11 - d2 * k12;
        const double b2 = b - E2 - d1 * k12 - d2 * k22;
        double bnew;
        if (a1 > kBoundSlack && a1 < C - kBoundSlack) bnew = b1;
        else if (a2 > kBoundSlack && a2 < C - kBoundSlack) bnew = b2;
        else bnew = 0.5 * (b1 + b2);

        const double db = bnew - b;
        for (int j = 0; j < n; ++j)
            E[static_cast<size_t>(j)] += d1 * k(i1, j) + d2 * k(i2, j) + db;
        alpha[static_cast<size_t>(i1)] = a1;
        alpha[static_cast<size_t>(i2)] = a2;
        b = bnew;
        return true;
    }

    bool at_lower(int i) const { return alpha[static_cast<size_t>(i)] <= kBoundSlack; }
    bool at_upper(int i) const { return alpha[static_cast<size_t>(i)] >= C - kBoundSlack; }
    bool non_bound(int i) const { return !at_lower(i) && !at_upper(i); }

    bool examine(int i2, Rng& rng) {
        const double E2 = E[static_cast<size_t>(i2)];
        const double r2 = E2 * y[static_cast<size_t>(i2)];  // y*f - 1
        const bool violated = (r2 < -tol && !at_upper(i2)) || (r2 > tol && !at_lower(i2));
        if (!violated) return false;

        // best |E1 - E2| among non-bound points, lowest index on ties
        int best = -1;
        double best_gap = -1.0;
        for (int i = 0; i < n; ++i) {
            if (!non_bound(i)) continue;
            const double gap = std::abs(E[static_cast<size_t>(i)] - E2);
            if (gap > best_gap) {
                best_gap = gap;
                best = i;
            }
        }
        if (best >= 0 && take_step(best, i2)) return true;

        const int off1 = rng.uniform_int(n);
        for (int i = 0; i < n; ++i) {
            const int i1 = (i + off1) % n;
            if (non_bound(i1) && take_step(i1, i2)) return true;
        }
        const int off2 = rng.uniform_int(n);
        for (int i = 0; i < n; ++i) {
            const int i1 = (i + off2) % n;
            if (take_step(i1, i2)) return true;
        }
        return false;
    }

    /// Place b inside the interval the optimality conditions allow. The
    /// per-step update pins b only while some alpha sits strictly between
    /// the bounds; when the final solution is all-bound the stepped value
    /// can drift outside the feasible interval even though the duals are
    /// optimal.
    void recenter_b() {
        double pin_sum = 0.0;
        int pin_count = 0;
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            const double gi = E[static_cast<size_t>(i)] + y[static_cast<size_t>(i)] - b;
            const double bi = y[static_cast<size_t>(i)] - gi;  // b putting i on the margin
            if (non_bound(i)) {
                pin_sum += bi;
                ++pin_count;
            } else if (at_lower(i)) {
                // alpha = 0 wants y*f >= 1
                if (y[static_cast<size_t>(i)] > 0) lo = std::max(lo, bi);
                else hi = std::min(hi, bi);
            } else {
                // alpha = C wants y*f <= 1
                if (y[static_cast<size_t>(i)] > 0) hi = std::min(hi, bi);
                else lo = std::max(lo, bi);
            }
        }
        double bnew;
        if (pin_count > 0) bnew = pin_sum / pin_count;
        else bnew = 0.5 * (lo + hi);  // both finite: dual feasibility forces both sides
        if (!std::isfinite(bnew)) return;
        const double db = bnew - b;
        if (db == 0.0) return;
        for (int i = 0; i < n; ++i) E[static_cast<size_t>(i)] += db;
        b = bnew;
    }

    void solve(Rng& rng) {
        int num_changed = 0;
        bool examine_all = true;
        int passes = 0;
        while ((num_changed > 0 || examine_all) && passes < max_passes) {
            num_changed = 0;
            for (int i = 0; i < n; ++i) {
                if (!examine_all && !non_bound(i)) continue;
                if (examine(i, rng)) ++num_changed;
            }
            if (examine_all) examine_all = false;
            else if (num_changed == 0) examine_all = true;
            ++passes;
        }
        recenter_b();
    }

    SvmModel extract() const {
        SvmModel m;
        m.C = C;
        m.b = b;
        m.alpha = alpha;
        m.w.assign(static_cast<size_t>(d), 0.0);
        for (int i = 0; i < n; ++i) {
            const double c = alpha[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
            if (c == 0.0) continue;
            const double* xi = X.data() + static_cast<size_t>(i) * d;
            for (int j = 0; j < d; ++j) m.w[static_cast<size_t>(j)] += c * xi[j];
        }
        return m;
    }
};

}  // namespace

void validate(const SvmTrainConfig& cfg) {
    if (cfg.C <= 0.0) throw std::invalid_argument("C must be positive");
    if (cfg.tolerance <= 0.0) throw std::invalid_argument("tolerance must be positive");
    if (cfg.max_passes < 1) throw std::invalid_argument("max_passes must be >= 1");
}

SvmModel train_svm(const std::vector<LabeledSample>& train, const SvmTrainConfig& cfg) {
    validate(cfg);
    SmoCore core;
    core.init(train, cfg);
    Rng rng(cfg.rng_seed);
    core.solve(rng);
    return core.extract();
}

double decision_value(const SvmModel& model, const Tensor& x) {
    if (x.size() != model.w.size())
        throw std::invalid_argument("feature length " + std::to_string(x.size()) +
                                    " does not match model width " +
                                    std::to_string(model.w.size()));
    double f = model.b;
    for (size_t i = 0; i < model.w.size(); ++i) f += model.w[i] * x[i];
    return f;
}

int predict(const SvmModel& model, const Tensor& x) {
    return decision_value(model, x) >= 0.0 ? +1 : -1;
}

double accuracy(const SvmModel& model, const std::vector<LabeledSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("accuracy over an empty set is undefined");
    int correct = 0;
    for (const LabeledSample& s : samples)
        if (predict(model, s.features) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double hinge_loss_sum(const SvmModel& model, const std::vector<LabeledSample>& samples) {
    double sum = 0.0;
    for (const LabeledSample& s : samples)
        sum += std::max(0.0, 1.0 - s.label * decision_value(model, s.features));
    return sum;
}

double max_kkt_violation(const SvmModel& model, const std::vector<LabeledSample>& train) {
    if (train.size() != model.alpha.size())
        throw std::invalid_argument("training set does not match model duals");
    double worst = 0.0;
    for (size_t i = 0; i < train.size(); ++i) {
        const double a = model.alpha[i];
        const double r = train[i].label * decision_value(model, train[i].features) - 1.0;
        if (a <= kBoundSlack) worst = std::max(worst, -r);                  // should have y f >= 1
        else if (a >= model.C - kBoundSlack) worst = std::max(worst, r);    // should have y f <= 1
        else worst = std::max(worst, std::abs(r));                          // should sit on margin
    }
    return std::max(worst, 0.0);
}

double dual_objective(const SvmModel& model, const std::vector<LabeledSample>& train) {
    const size_t n = train.size();
    if (n != model.alpha.size())
        throw std::invalid_argument("training set does not match model duals");
    double lin = 0.0, quad = 0.0;
    for (size_t i = 0; i < n; ++i) {
        lin += model.alpha[i];
        if (model.alpha[i] == 0.0) continue;
        for (size_t j = 0; j < n; ++j) {
            if (model.alpha[j] == 0.0) continue;
            double dot = 0.0;
            const Tensor& xi = train[i].features;
            const Tensor& xj = train[j].features;
            for (size_t k = 0; k < xi.size(); ++k) dot += xi[k] * xj[k];
            quad += model.alpha[i] * model.alpha[j] * train[i].label * train[j].label * dot;
        }
    }
    return lin - 0.5 * quad;
}

// ---- checkpoints ---------------------------------------------------------

namespace {
constexpr char kSvmMagic[8] = {'C', 'A', 'E', 'D', 'S', 'V', 'M', '1'};
}

void save_svm(const std::string& path, const SvmModel& model) {
    BinaryWriter w(path);
    w.magic(kSvmMagic);
    w.f64(model.C);
    w.f64(model.b);
    w.f64_array(model.w);
    w.f64_array(model.alpha);
}

SvmModel load_svm(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic(kSvmMagic);
    SvmModel m;
    m.C = r.f64();
    m.b = r.f64();
    m.w = r.f64_array();
    m.alpha = r.f64_array();
    return m;
}

// ---- incremental retraining ---------------------------------------------

struct IncrementalSvmTrainer::Impl {
    SmoCore core;
    std::vector<LabeledSample> samples;
    SvmModel model;
    uint64_t seed = 0;
    uint64_t retrains = 0;
    bool labels_dirty = false;
};

IncrementalSvmTrainer::IncrementalSvmTrainer(std::vector<LabeledSample> train,
                                             const SvmTrainConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
    validate(cfg);
    impl_->samples = std::move(train);
    impl_->core.init(impl_->samples, cfg);
    impl_->seed = cfg.rng_seed;
    retrain();
}

IncrementalSvmTrainer::~IncrementalSvmTrainer() = default;
IncrementalSvmTrainer::IncrementalSvmTrainer(IncrementalSvmTrainer&&) noexcept = default;
IncrementalSvmTrainer& IncrementalSvmTrainer::operator=(IncrementalSvmTrainer&&) noexcept =
    default;

int IncrementalSvmTrainer::size() const { return impl_->core.n; }

const std::vector<LabeledSample>& IncrementalSvmTrainer::samples() const {
    return impl_->samples;
}

void IncrementalSvmTrainer::set_features(int index, const Tensor& x) {
    if (index < 0 || index >= impl_->core.n) throw std::invalid_argument("sample index out of range");
    LabeledSample& s = impl_->samples[static_cast<size_t>(index)];
    require_same_shape(s.features, x, "set_features");
    s.features = x;
    impl_->core.set_row(index, x.data.data());
}

void IncrementalSvmTrainer::set_label(int index, int label) {
    if (index < 0 || index >= impl_->core.n) throw std::invalid_argument("sample index out of range");
    if (label != -1 && label != +1) throw std::invalid_argument("label must be -1 or +1");
    impl_->samples[static_cast<size_t>(index)].label = label;
    impl_->core.y[static_cast<size_t>(index)] = label;
    // a label change breaks dual feasibility of the warm start
    impl_->labels_dirty = true;
}

const SvmModel& IncrementalSvmTrainer::retrain() {
    SmoCore& core = impl_->core;
    if (impl_->labels_dirty) {
        std::fill(core.alpha.begin(), core.alpha.end(), 0.0);
        core.b = 0.0;
        impl_->labels_dirty = false;
    }
    core.reset_errors();
    Rng rng(derive_seed(impl_->seed, impl_->retrains++));
    core.solve(rng);
    impl_->model = core.extract();
    return impl_->model;
}

const SvmModel& IncrementalSvmTrainer::model() const { return impl_->model; }

}  // namespace caedet::svm
