#include "caedet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "caedet/rng.hpp"

namespace caedet::data {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw IdxError(IdxErrorCode::Truncated, path + ": truncated header");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace

RawDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IdxError(IdxErrorCode::Io, "cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IdxError(IdxErrorCode::Io, "cannot open " + labels_path);

    const uint32_t im = read_be_u32(img, images_path);
    if (im != kImageMagic)
        throw IdxError(IdxErrorCode::BadMagic,
                       images_path + ": expected image magic 0x00000803, got 0x" +
                           [&] { char buf[16]; snprintf(buf, sizeof buf, "%08x", im); return std::string(buf); }());
    const uint32_t n_img = read_be_u32(img, images_path);
    const uint32_t rows = read_be_u32(img, images_path);
    const uint32_t cols = read_be_u32(img, images_path);

    const uint32_t lm = read_be_u32(lab, labels_path);
    if (lm != kLabelMagic)
        throw IdxError(IdxErrorCode::BadMagic,
                       labels_path + ": expected label magic 0x00000801, got 0x" +
                           [&] { char buf[16]; snprintf(buf, sizeof buf, "%08x", lm); return std::string(buf); }());
    const uint32_t n_lab = read_be_u32(lab, labels_path);

    if (n_img != n_lab)
        throw IdxError(IdxErrorCode::CountMismatch,
                       "image count " + std::to_string(n_img) + " != label count " +
                           std::to_string(n_lab));

    RawDataset out;
    const size_t npix = size_t(n_img) * rows * cols;
    std::vector<unsigned char> pix(npix);
    img.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(npix));
    if (static_cast<size_t>(img.gcount()) != npix)
        throw IdxError(IdxErrorCode::Truncated, images_path + ": truncated pixel data");

    std::vector<unsigned char> lbytes(n_lab);
    lab.read(reinterpret_cast<char*>(lbytes.data()), static_cast<std::streamsize>(n_lab));
    if (static_cast<size_t>(lab.gcount()) != n_lab)
        throw IdxError(IdxErrorCode::Truncated, labels_path + ": truncated label data");

    out.images = Tensor({int(n_img), int(rows), int(cols), 1});
    for (size_t i = 0; i < npix; ++i) out.images[i] = pix[i] / 255.0;
    out.labels.assign(lbytes.begin(), lbytes.end());
    return out;
}

BinaryTask make_binary_task(const RawDataset& raw, int pos_class, int neg_class,
                            uint64_t rng_seed) {
    if (pos_class == neg_class)
        throw std::invalid_argument("positive and negative class must differ");

    const int n = raw.images.dim(0);
    if (static_cast<int>(raw.labels.size()) != n)
        throw std::invalid_argument("raw dataset label count does not match images");
    const size_t k = raw.images.size() / static_cast<size_t>(n);
    std::vector<int> sample_shape(raw.images.shape.begin() + 1, raw.images.shape.end());

    std::vector<int> keep;
    bool saw_pos = false, saw_neg = false;
    for (int i = 0; i < n; ++i) {
        if (raw.labels[static_cast<size_t>(i)] == pos_class) { keep.push_back(i); saw_pos = true; }
        else if (raw.labels[static_cast<size_t>(i)] == neg_class) { keep.push_back(i); saw_neg = true; }
    }
    if (!saw_pos) throw std::invalid_argument("class " + std::to_string(pos_class) + " not present");
    if (!saw_neg) throw std::invalid_argument("class " + std::to_string(neg_class) + " not present");

    Rng rng(rng_seed);
    rng.shuffle(keep);

    BinaryTask task;
    task.pos_class = pos_class;
    task.neg_class = neg_class;
    task.name = std::to_string(pos_class) + "v" + std::to_string(neg_class);
    task.samples.reserve(keep.size());
    for (size_t j = 0; j < keep.size(); ++j) {
        const int src = keep[j];
        LabeledSample s;
        s.features = Tensor(sample_shape);
        std::copy_n(raw.images.data.data() + static_cast<size_t>(src) * k, k,
                    s.features.data.data());
        s.label = raw.labels[static_cast<size_t>(src)] == pos_class ? +1 : -1;
        s.origin_id = static_cast<int64_t>(j);
        task.samples.push_back(std::move(s));
    }
    return task;
}

BinaryTask synth_blobs(int n_per_class, int dim, double center_distance, double spread,
                       uint64_t rng_seed) {
    if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
    if (dim < 1) throw std::invalid_argument("dim must be >= 1");
    if (spread < 0.0) throw std::invalid_argument("spread must be >= 0");

    // image-compatible shape when dim is a perfect square with even side
    std::vector<int> shape = {1, dim, 1};
    const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
    if (s * s == dim && s % 2 == 0) shape = {s, s, 1};

    const double off = 0.5 * center_distance / std::sqrt(static_cast<double>(dim));
    Rng rng(rng_seed);

    BinaryTask task;
    task.pos_class = +1;
    task.neg_class = -1;
    task.name = "blobs" + std::to_string(dim) + "d";
    task.samples.reserve(static_cast<size_t>(2 * n_per_class));
    for (int i = 0; i < 2 * n_per_class; ++i) {
        const int label = i % 2 == 0 ? +1 : -1;  // interleave so any prefix is balanced
        const double center = 0.5 + label * off;
        LabeledSample smp;
        smp.features = Tensor(shape);
        for (double& v : smp.features.data)
            v = std::clamp(center + spread * rng.normal(), 0.0, 1.0);
        smp.label = label;
        smp.origin_id = i;
        task.samples.push_back(std::move(smp));
    }
    return task;
}

// ---- synthetic image tasks ----------------------------------------------

std::string proto_name(ProtoKind k) {
    switch (k) {
        case ProtoKind::Disc: return "disc";
        case ProtoKind::Ring: return "ring";
        case ProtoKind::HStripes: return "hstripes";
        case ProtoKind::VStripes: return "vstripes";
        case ProtoKind::Cross: return "cross";
        case ProtoKind::Diamond: return "diamond";
        case ProtoKind::DiagStripes: return "dstripes";
        case ProtoKind::AntiDiagStripes: return "astripes";
        case ProtoKind::Checker: return "checker";
        case ProtoKind::Solid: return "solid";
    }
    throw std::logic_error("unknown prototype");
}

namespace {

/// Prototype intensity at (y,x) on a side x side grid, in [0,1].
double proto_value(ProtoKind k, int y, int x, int side) {
    const double cy = (side - 1) / 2.0, cx = (side - 1) / 2.0;
    const double dy = y - cy, dx = x - cx;
    const double r = std::sqrt(dy * dy + dx * dx);
    const double R = side / 2.0;
    switch (k) {
        case ProtoKind::Disc:
            return r < 0.55 * R ? 1.0 : 0.0;
        case ProtoKind::Ring:
            return (r > 0.45 * R && r < 0.8 * R) ? 1.0 : 0.0;
        case ProtoKind::HStripes:
            return (y / 4) % 2 == 0 ? 1.0 : 0.0;
        case ProtoKind::VStripes:
            return (x / 4) % 2 == 0 ? 1.0 : 0.0;
        case ProtoKind::Cross:
            return (std::abs(dy) < 0.18 * side || std::abs(dx) < 0.18 * side) ? 1.0 : 0.0;
        case ProtoKind::Diamond:
            return (std::abs(dy) + std::abs(dx)) < 0.62 * R ? 1.0 : 0.0;
        case ProtoKind::DiagStripes:
            return ((y + x) / 4) % 2 == 0 ? 1.0 : 0.0;
        case ProtoKind::AntiDiagStripes:
            return ((y - x + side) / 4) % 2 == 0 ? 1.0 : 0.0;
        case ProtoKind::Checker:
            return ((y / 7) + (x / 7)) % 2 == 0 ? 1.0 : 0.0;
        case ProtoKind::Solid:
            return 0.55;
    }
    throw std::logic_error("unknown prototype");
}

LabeledSample render_sample(ProtoKind k, int label, int side, Rng& rng) {
    // Pixels live in [0.2, 0.8] so the additive noise almost never clamps.
    // Clamping at 0 would cost background and foreground pixels differently,
    // making the per-sample reconstruction error track foreground area — a
    // class property — instead of genuine per-sample anomaly. Geometry is
    // held fixed for the same reason (shape edges reconstruct unevenly);
    // brightness jitter and dense pixel noise carry the in-class variation.
    // A small fraction of renders is much noisier, giving the pool the
    // heavy reconstruction-difficulty tail real image data has; that tail
    // anchors the top of the detectors' score normalization.
    const double amp = rng.uniform(0.9, 1.0);
    const bool hard = rng.uniform() < 0.01;
    const double noise = hard ? 0.25 : 0.08;
    LabeledSample s;
    s.features = Tensor({side, side, 1});
    size_t i = 0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x, ++i) {
            const double v = 0.2 + 0.6 * amp * proto_value(k, y, x, side);
            s.features[i] = std::clamp(v + noise * rng.normal(), 0.0, 1.0);
        }
    s.label = label;
    return s;
}

}  // namespace

BinaryTask synth_images(ProtoKind pos, ProtoKind neg, int n_per_class, uint64_t rng_seed,
                        int side) {
    if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
    if (side < 8 || side % 2 != 0)
        throw std::invalid_argument("side must be even and >= 8");
    Rng rng(rng_seed);
    BinaryTask task;
    task.pos_class = static_cast<int>(pos);
    task.neg_class = static_cast<int>(neg);
    task.name = proto_name(pos) + "-v-" + proto_name(neg);
    task.samples.reserve(static_cast<size_t>(2 * n_per_class));
    for (int i = 0; i < 2 * n_per_class; ++i) {
        const int label = i % 2 == 0 ? +1 : -1;
        LabeledSample s = render_sample(label == +1 ? pos : neg, label, side, rng);
        s.origin_id = i;
        task.samples.push_back(std::move(s));
    }
    return task;
}

std::vector<std::pair<ProtoKind, ProtoKind>> default_image_pairs() {
    return {{ProtoKind::Disc, ProtoKind::Ring},
            {ProtoKind::HStripes, ProtoKind::VStripes},
            {ProtoKind::Cross, ProtoKind::Diamond},
            {ProtoKind::DiagStripes, ProtoKind::AntiDiagStripes}};
}

// ---- round construction --------------------------------------------------

namespace {

/// Per-class pool that deals origin-task indices without replacement,
/// reshuffling once exhausted.
struct ClassPool {
    std::vector<int> indices;  // positions in task.samples
    std::vector<int> queue;    // dealt back-to-front
    bool recycled = false;

    void refill(Rng& rng) {
        queue = indices;
        rng.shuffle(queue);
    }

    /// Deal an index not yet used in the current round.
    int deal(Rng& rng, const std::unordered_set<int64_t>& used_ids,
             const std::vector<LabeledSample>& samples, bool allow_replacement) {
        size_t attempts = 0;
        const size_t limit = 2 * indices.size() + 16;
        while (true) {
            if (queue.empty()) {
                if (!allow_replacement)
                    throw std::runtime_error(
                        "task too small for the requested rounds with replacement disabled");
                refill(rng);
                recycled = true;
            }
            const int idx = queue.back();
            queue.pop_back();
            if (!used_ids.count(samples[static_cast<size_t>(idx)].origin_id)) return idx;
            if (++attempts > limit)
                throw std::runtime_error("class pool too small to fill a round without repeats");
        }
    }
};

}  // namespace

ExperimentDataset build_rounds(const BinaryTask& task, int n_rounds, SplitSizes sizes,
                               uint64_t rng_seed, int n_eval, bool allow_replacement) {
    if (n_rounds < 1) throw std::invalid_argument("n_rounds must be >= 1");
    if (sizes.train < 2 || sizes.validation < 2 || sizes.test < 2)
        throw std::invalid_argument("each split needs at least 2 samples");
    if (n_eval < 0) throw std::invalid_argument("n_eval must be >= 0");

    ClassPool pos, neg;
    for (size_t i = 0; i < task.samples.size(); ++i)
        (task.samples[i].label == +1 ? pos : neg).indices.push_back(static_cast<int>(i));
    if (pos.indices.empty() || neg.indices.empty())
        throw std::invalid_argument("task must contain both classes");

    const double frac_pos =
        static_cast<double>(pos.indices.size()) / static_cast<double>(task.samples.size());

    Rng rng(derive_seed(rng_seed, 0xd47a));
    pos.refill(rng);
    neg.refill(rng);

    ExperimentDataset ds;
    ds.n_eval_rounds = std::min(n_eval, n_rounds);
    ds.n_detector_rounds = n_rounds - ds.n_eval_rounds;
    if (ds.n_detector_rounds == 0)
        ds.warnings.push_back("no detector-training rounds: every round is an evaluation round");

    auto fill_split = [&](std::vector<LabeledSample>& out, int count,
                          std::unordered_set<int64_t>& used) {
        int n_pos = static_cast<int>(std::lround(count * frac_pos));
        n_pos = std::clamp(n_pos, 1, count - 1);  // keep both classes present
        for (int i = 0; i < count; ++i) {
            ClassPool& pool = i < n_pos ? pos : neg;
            const int idx = pool.deal(rng, used, task.samples, allow_replacement);
            LabeledSample s = task.samples[static_cast<size_t>(idx)];
            used.insert(s.origin_id);
            out.push_back(std::move(s));
        }
        rng.shuffle(out);
    };

    ds.rounds.reserve(static_cast<size_t>(n_rounds));
    for (int r = 0; r < n_rounds; ++r) {
        RoundBuffer buf;
        buf.round_index = r;
        std::unordered_set<int64_t> used;
        fill_split(buf.train, sizes.train, used);
        fill_split(buf.validation, sizes.validation, used);
        fill_split(buf.test, sizes.test, used);
        ds.rounds.push_back(std::move(buf));
    }

    ds.sampled_with_replacement = pos.recycled || neg.recycled;
    if (ds.sampled_with_replacement)
        ds.warnings.push_back(
            "source pool smaller than the total round demand: samples reused across rounds");
    return ds;
}

Tensor stack_features(const std::vector<LabeledSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("cannot stack an empty sample list");
    const Tensor& first = samples.front().features;
    std::vector<int> shape;
    shape.push_back(static_cast<int>(samples.size()));
    shape.insert(shape.end(), first.shape.begin(), first.shape.end());
    Tensor out(shape);
    const size_t k = first.size();
    for (size_t i = 0; i < samples.size(); ++i) {
        require_same_shape(samples[i].features, first, "stack_features");
        std::copy_n(samples[i].features.data.data(), k, out.data.data() + i * k);
    }
    return out;
}

std::vector<int> labels_of(const std::vector<LabeledSample>& samples) {
    std::vector<int> y;
    y.reserve(samples.size());
    for (const LabeledSample& s : samples) y.push_back(s.label);
    return y;
}

}  // namespace caedet::data
