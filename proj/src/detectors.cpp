#include "caedet/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "caedet/dataset.hpp"
#include "caedet/rng.hpp"
#include "caedet/serialize.hpp"

namespace caedet::detectors {

const char* detector_name(DetectorKind k) {
    switch (k) {
        case DetectorKind::RAE: return "rae";
        case DetectorKind::CAE: return "cae";
        case DetectorKind::CAEPlus: return "cae+";
        case DetectorKind::Centroid: return "centroid";
    }
    throw std::logic_error("unknown detector kind");
}

DetectorKind detector_from_name(const std::string& name) {
    if (name == "rae") return DetectorKind::RAE;
    if (name == "cae") return DetectorKind::CAE;
    if (name == "cae+" || name == "caeplus") return DetectorKind::CAEPlus;
    if (name == "centroid") return DetectorKind::Centroid;
    throw std::invalid_argument("unknown detector kind: " + name);
}

namespace {

constexpr double kConstChannel = 1e-12;

double norm_channel(double v, double lo, double hi, bool constant) {
    if (constant) return 0.0;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

bool uses_cae(DetectorKind k) { return k == DetectorKind::CAE || k == DetectorKind::CAEPlus; }
bool uses_rae(DetectorKind k) { return k == DetectorKind::RAE || k == DetectorKind::CAEPlus; }

/// Raw (unnormalized) per-sample channels for the network kinds: the
/// reconstruction-error source depends on the kind, the loss channel is
/// the CAE head's cross-entropy under the sample's own label.
void raw_channels(const DetectorModel& model, const std::vector<LabeledSample>& samples,
                  std::vector<double>& re, std::vector<double>& loss) {
    const size_t n = samples.size();
    re.assign(n, 0.0);
    loss.assign(n, 0.0);
    const Tensor X = data::stack_features(samples);
    const size_t k = X.size() / n;

    auto per_sample_re = [&](const Tensor& recon) {
        for (size_t i = 0; i < n; ++i) {
            const double* xp = X.data.data() + i * k;
            const double* rp = recon.data.data() + i * k;
            double s = 0.0;
            for (size_t j = 0; j < k; ++j) s += std::abs(xp[j] - rp[j]);
            re[i] = s / static_cast<double>(k);
        }
    };

    if (uses_cae(model.kind)) {
        const nn::ActivationTrace trace = nn::forward(model.cae_params, X, nn::RunMode::Eval);
        if (model.kind == DetectorKind::CAE) per_sample_re(trace.reconstruction());
        const Tensor& probs = trace.probabilities();
        const int d = probs.dim(1);
        for (size_t i = 0; i < n; ++i) {
            const int cls = nn::label_to_class(samples[i].label);
            loss[i] = -std::log(std::max(probs[i * d + cls], 1e-12));
        }
    }
    if (uses_rae(model.kind)) {
        const nn::ActivationTrace trace = nn::forward(model.rae_params, X, nn::RunMode::Eval);
        per_sample_re(trace.reconstruction());
    }
}

void refit_normalizer(DetectorModel& model, const std::vector<LabeledSample>& training_data) {
    std::vector<double> re, loss;
    raw_channels(model, training_data, re, loss);
    const auto [re_lo, re_hi] = std::minmax_element(re.begin(), re.end());
    const auto [l_lo, l_hi] = std::minmax_element(loss.begin(), loss.end());
    model.normalizer.re_min = *re_lo;
    model.normalizer.re_max = *re_hi;
    model.normalizer.re_constant = *re_hi - *re_lo < kConstChannel;
    model.normalizer.loss_min = *l_lo;
    model.normalizer.loss_max = *l_hi;
    model.normalizer.loss_constant = *l_hi - *l_lo < kConstChannel;
}

double centroid_distance(const DetectorModel& model, const LabeledSample& s) {
    const Tensor& c = s.label == +1 ? model.centroid_pos : model.centroid_neg;
    require_same_shape(s.features, c, "centroid_distance");
    double d2 = 0.0;
    for (size_t i = 0; i < s.features.size(); ++i) {
        const double d = s.features[i] - c[i];
        d2 += d * d;
    }
    return std::sqrt(d2);
}

}  // namespace

double ScoreNormalizer::norm_re(double v) const {
    return norm_channel(v, re_min, re_max, re_constant);
}

double ScoreNormalizer::norm_loss(double v) const {
    return norm_channel(v, loss_min, loss_max, loss_constant);
}

void validate(const DetectorTrainConfig& cfg) {
    nn::validate(cfg.cae);
    nn::validate(cfg.rae);
    if (cfg.alpha < 0.0 || cfg.alpha > 1.0)
        throw std::invalid_argument("alpha must lie in [0,1]");
    if (cfg.cae.epochs > 100)
        throw std::invalid_argument(
            "CAE epochs capped at 100: longer schedules overfit the anomalies the detector "
            "is meant to expose");
}

DetectorModel train_detector(DetectorKind kind, const std::vector<LabeledSample>& training_data,
                             const DetectorTrainConfig& cfg) {
    validate(cfg);
    if (training_data.empty()) throw std::invalid_argument("detector training data is empty");
    const Tensor& f0 = training_data.front().features;
    if (f0.rank() != 3) throw std::invalid_argument("detector features must be HxWxC");

    const bool needs_labels = kind != DetectorKind::RAE;
    if (needs_labels) {
        bool pos = false, neg = false;
        for (const LabeledSample& s : training_data) (s.label == +1 ? pos : neg) = true;
        if (!pos || !neg)
            throw std::invalid_argument(std::string(detector_name(kind)) +
                                        " training needs both classes present");
    }

    DetectorModel model;
    model.kind = kind;
    model.alpha = kind == DetectorKind::RAE ? 1.0 : cfg.alpha;

    if (kind == DetectorKind::Centroid) {
        Tensor sum_pos(f0.shape), sum_neg(f0.shape);
        int n_pos = 0, n_neg = 0;
        for (const LabeledSample& s : training_data) {
            Tensor& sum = s.label == +1 ? sum_pos : sum_neg;
            (s.label == +1 ? n_pos : n_neg) += 1;
            for (size_t i = 0; i < sum.size(); ++i) sum[i] += s.features[i];
        }
        for (size_t i = 0; i < sum_pos.size(); ++i) sum_pos[i] /= n_pos;
        for (size_t i = 0; i < sum_neg.size(); ++i) sum_neg[i] /= n_neg;
        model.centroid_pos = std::move(sum_pos);
        model.centroid_neg = std::move(sum_neg);
        model.trained = true;
        return model;
    }

    const nn::Shape3 input{f0.dim(0), f0.dim(1), f0.dim(2)};
    const Tensor X = data::stack_features(training_data);
    const std::vector<int> y = data::labels_of(training_data);

    if (uses_cae(kind)) {
        nn::NetworkSpec spec = nn::build_architecture(nn::ArchKind::CAE, input);
        model.cae_params = nn::init_params(spec, derive_seed(cfg.cae.rng_seed, 0xcae));
        nn::fit_network(model.cae_params, X, y, cfg.cae, {1.0, 1.0});
    }
    if (uses_rae(kind)) {
        nn::NetworkSpec spec = nn::build_architecture(nn::ArchKind::RAE, input);
        model.rae_params = nn::init_params(spec, derive_seed(cfg.rae.rng_seed, 0x7ae));
        nn::fit_network(model.rae_params, X, {}, cfg.rae, {1.0, 0.0});
    }

    // freeze normalization statistics on the same buffer the networks saw
    refit_normalizer(model, training_data);
    model.trained = true;
    return model;
}

DetectorModel rescore_view(const DetectorModel& model, DetectorKind kind,
                           const std::vector<LabeledSample>& training_data, double alpha) {
    if (!model.trained) throw std::invalid_argument("source detector is not trained");
    if (kind == DetectorKind::Centroid)
        throw std::invalid_argument("centroid scoring has no network to reuse");
    if (uses_cae(kind) && model.cae_params.slot_count() == 0)
        throw std::invalid_argument("source detector holds no classifier autoencoder");
    if (uses_rae(kind) && model.rae_params.slot_count() == 0)
        throw std::invalid_argument("source detector holds no plain autoencoder");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must lie in [0,1]");
    if (training_data.empty()) throw std::invalid_argument("normalizer needs training data");

    DetectorModel view;
    view.kind = kind;
    view.alpha = kind == DetectorKind::RAE ? 1.0 : alpha;
    if (uses_cae(kind)) view.cae_params = model.cae_params;
    if (uses_rae(kind)) view.rae_params = model.rae_params;
    refit_normalizer(view, training_data);
    view.trained = true;
    return view;
}

std::vector<ScoredSample> score_batch(const DetectorModel& model,
                                      const std::vector<LabeledSample>& samples) {
    if (!model.trained) throw std::invalid_argument("detector model is not trained");
    std::vector<ScoredSample> out(samples.size());
    if (samples.empty()) return out;

    if (model.kind == DetectorKind::Centroid) {
        for (size_t i = 0; i < samples.size(); ++i) {
            const double d = centroid_distance(model, samples[i]);
            out[i] = {d, d, d, static_cast<int>(i), samples[i].poison_flag};
        }
        return out;
    }

    std::vector<double> re, loss;
    raw_channels(model, samples, re, loss);
    const double a = model.alpha;
    for (size_t i = 0; i < samples.size(); ++i) {
        ScoredSample& s = out[i];
        s.re = model.normalizer.norm_re(re[i]);
        s.loss = model.kind == DetectorKind::RAE ? 0.0 : model.normalizer.norm_loss(loss[i]);
        s.combined = a * s.re + (1.0 - a) * s.loss;
        s.index = static_cast<int>(i);
        s.poison_truth = samples[i].poison_flag;
    }
    return out;
}

ScoredSample score(const DetectorModel& model, const LabeledSample& sample) {
    return score_batch(model, {sample}).front();
}

SeparatorKind SeparatorKind::top_k(int k) {
    if (k < 0) throw std::invalid_argument("top-k count must be >= 0");
    return {TopK, k};
}

std::vector<char> separate(const std::vector<ScoredSample>& scores, SeparatorKind separator) {
    if (scores.empty()) throw std::invalid_argument("cannot separate an empty score set");
    std::vector<char> verdicts(scores.size(), 0);

    if (separator.kind == SeparatorKind::TopK) {
        std::vector<int> order(scores.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return scores[static_cast<size_t>(a)].combined > scores[static_cast<size_t>(b)].combined;
        });
        const size_t k = std::min<size_t>(static_cast<size_t>(separator.k), scores.size());
        for (size_t i = 0; i < k; ++i) verdicts[static_cast<size_t>(order[i])] = 1;
        return verdicts;
    }

    std::vector<double> values;
    values.reserve(scores.size());
    for (const ScoredSample& s : scores) values.push_back(s.combined);
    if (values.size() < 2) return verdicts;  // one sample: nothing to contrast against

    const gmm::GmmParams fit = gmm::fit_gmm_1d(values);
    if (fit.degenerate) return verdicts;

    const int hi = fit.mean[1] >= fit.mean[0] ? 1 : 0;
    const double pooled_sd =
        std::sqrt(fit.weight[0] * fit.variance[0] + fit.weight[1] * fit.variance[1]);
    if (std::abs(fit.mean[1] - fit.mean[0]) < 0.1 * pooled_sd) return verdicts;  // one cluster

    // Clean-buffer guard. EM always finds some two-component split, so the
    // mean-gap test alone cannot recognize an uncontaminated buffer; the
    // mixture must also beat a single Gaussian by the BIC margin before any
    // sample is flagged. Well-separated contamination clears this by orders
    // of magnitude; scores drawn from one population almost never do.
    const double n = static_cast<double>(values.size());
    double mu = 0.0;
    for (double v : values) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : values) var += (v - mu) * (v - mu);
    var = std::max(var / n, 1e-8);
    double single_ll = 0.0;
    constexpr double kLogTwoPi = 1.8378770664093453;
    for (double v : values)
        single_ll += -0.5 * (kLogTwoPi + std::log(var) + (v - mu) * (v - mu) / var);
    if (2.0 * (fit.final_log_likelihood - single_ll) < 3.0 * std::log(n)) return verdicts;

    for (size_t i = 0; i < values.size(); ++i)
        verdicts[i] = gmm::assign_component(fit, values[i]) == hi ? 1 : 0;
    return verdicts;
}

DetectionMetrics detection_metrics(const std::vector<char>& verdicts,
                                   const std::vector<char>& truth) {
    if (verdicts.size() != truth.size())
        throw std::invalid_argument("verdicts and ground truth differ in length");
    DetectionMetrics m;
    for (size_t i = 0; i < verdicts.size(); ++i) {
        if (verdicts[i] && truth[i]) ++m.true_positives;
        else if (verdicts[i] && !truth[i]) ++m.false_positives;
        else if (!verdicts[i] && truth[i]) ++m.false_negatives;
    }
    m.precision = m.true_positives + m.false_positives == 0
                      ? 1.0
                      : static_cast<double>(m.true_positives) /
                            (m.true_positives + m.false_positives);
    m.recall = m.true_positives + m.false_negatives == 0
                   ? 1.0
                   : static_cast<double>(m.true_positives) /
                         (m.true_positives + m.false_negatives);
    m.f1 = m.precision + m.recall == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

FilterResult filter_round(const DetectorModel& model, SeparatorKind separator,
                          const RoundBuffer& round) {
    FilterResult result;
    if (round.train.empty()) return result;
    result.scores = score_batch(model, round.train);
    result.verdicts = separate(result.scores, separator);
    for (size_t i = 0; i < round.train.size(); ++i)
        if (!result.verdicts[i]) result.kept.push_back(round.train[i]);
    return result;
}

// ---- checkpoints ---------------------------------------------------------

namespace {
constexpr char kDetMagic[8] = {'C', 'A', 'E', 'D', 'D', 'E', 'T', '1'};
}

void save_detector(const std::string& path, const DetectorModel& model) {
    BinaryWriter w(path);
    w.magic(kDetMagic);
    w.u8(static_cast<uint8_t>(model.kind));
    w.u8(model.trained ? 1 : 0);
    w.f64(model.alpha);
    w.f64(model.normalizer.re_min);
    w.f64(model.normalizer.re_max);
    w.f64(model.normalizer.loss_min);
    w.f64(model.normalizer.loss_max);
    w.u8(model.normalizer.re_constant ? 1 : 0);
    w.u8(model.normalizer.loss_constant ? 1 : 0);
    w.u8(uses_cae(model.kind) ? 1 : 0);
    if (uses_cae(model.kind)) nn::write_network(w, model.cae_params);
    w.u8(uses_rae(model.kind) ? 1 : 0);
    if (uses_rae(model.kind)) nn::write_network(w, model.rae_params);
    w.u8(model.kind == DetectorKind::Centroid ? 1 : 0);
    if (model.kind == DetectorKind::Centroid) {
        w.tensor(model.centroid_pos);
        w.tensor(model.centroid_neg);
    }
}

DetectorModel load_detector(const std::string& path) {
    BinaryReader r(path);
    r.expect_magic(kDetMagic);
    DetectorModel m;
    m.kind = static_cast<DetectorKind>(r.u8());
    m.trained = r.u8() != 0;
    m.alpha = r.f64();
    m.normalizer.re_min = r.f64();
    m.normalizer.re_max = r.f64();
    m.normalizer.loss_min = r.f64();
    m.normalizer.loss_max = r.f64();
    m.normalizer.re_constant = r.u8() != 0;
    m.normalizer.loss_constant = r.u8() != 0;
    if (r.u8()) m.cae_params = nn::read_network(r);
    if (r.u8()) m.rae_params = nn::read_network(r);
    if (r.u8()) {
        m.centroid_pos = r.tensor();
        m.centroid_neg = r.tensor();
    }
    return m;
}

}  // namespace caedet::detectors
