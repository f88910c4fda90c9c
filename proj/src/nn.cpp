#include "caedet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "caedet/rng.hpp"
#include "caedet/serialize.hpp"

namespace caedet::nn {

namespace {

constexpr double kProbFloor = 1e-12;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void apply_activation(Activation act, Tensor& t) {
    if (act == Activation::Sigmoid)
        for (double& v : t.data) v = sigmoid(v);
}

/// Post-activation gradient -> pre-activation gradient, in place.
void activation_backward(Activation act, const Tensor& out_act, Tensor& d) {
    if (act == Activation::Sigmoid)
        for (size_t i = 0; i < d.size(); ++i) {
            double a = out_act[i];
            d[i] *= a * (1.0 - a);
        }
}

const LayerDesc& layer_at(const NetworkSpec& spec, size_t slot) {
    return slot < spec.trunk.size() ? spec.trunk[slot] : spec.head[slot - spec.trunk.size()];
}

std::vector<int> infer_one(const LayerDesc& l, const std::vector<int>& in) {
    switch (l.kind) {
        case LayerKind::Conv3x3: {
            if (in.size() != 3) throw std::invalid_argument("conv3x3 expects HxWxC input");
            if (l.units < 1) throw std::invalid_argument("conv3x3 needs at least one filter");
            return {in[0], in[1], l.units};
        }
        case LayerKind::MaxPool2x2: {
            if (in.size() != 3) throw std::invalid_argument("maxpool2x2 expects HxWxC input");
            if (in[0] % 2 != 0 || in[1] % 2 != 0)
                throw std::invalid_argument("maxpool2x2 requires even spatial dimensions, got " +
                                            std::to_string(in[0]) + "x" + std::to_string(in[1]));
            return {in[0] / 2, in[1] / 2, in[2]};
        }
        case LayerKind::Upsample2x2: {
            if (in.size() != 3) throw std::invalid_argument("upsample2x2 expects HxWxC input");
            return {in[0] * 2, in[1] * 2, in[2]};
        }
        case LayerKind::Flatten: {
            int n = 1;
            for (int d : in) n *= d;
            return {n};
        }
        case LayerKind::Dropout: {
            if (l.rate < 0.0 || l.rate >= 1.0)
                throw std::invalid_argument("dropout rate must be in [0,1)");
            return in;
        }
        case LayerKind::Dense: {
            if (in.size() != 1) throw std::invalid_argument("dense expects flat input");
            if (l.units < 1) throw std::invalid_argument("dense needs positive width");
            return {l.units};
        }
        case LayerKind::Softmax: {
            if (in.size() != 1) throw std::invalid_argument("softmax expects flat input");
            return in;
        }
    }
    throw std::logic_error("unknown layer kind");
}

std::vector<std::vector<int>> infer_chain(const std::vector<LayerDesc>& layers,
                                          std::vector<int> cur) {
    std::vector<std::vector<int>> out;
    out.reserve(layers.size());
    for (const LayerDesc& l : layers) {
        cur = infer_one(l, cur);
        out.push_back(cur);
    }
    return out;
}

void validate_spec(const NetworkSpec& spec) {
    if (spec.trunk.empty()) throw std::invalid_argument("network needs at least one trunk layer");
    if (spec.input.h < 1 || spec.input.w < 1 || spec.input.c < 1)
        throw std::invalid_argument("invalid input shape");
    if (spec.has_head()) {
        if (spec.latent_index < 0 || spec.latent_index >= static_cast<int>(spec.trunk.size()))
            throw std::invalid_argument("head requires a latent index inside the trunk");
    }
    infer_trunk_shapes(spec);
    infer_head_shapes(spec);
}

// [N,...sample shape] batch for the given per-sample shape
std::vector<int> with_batch(int n, const std::vector<int>& sample) {
    std::vector<int> s;
    s.reserve(sample.size() + 1);
    s.push_back(n);
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

// ---- layer kernels -------------------------------------------------------

Tensor conv_forward(const Tensor& in, const Tensor& W, const Tensor& b, Activation act) {
    const int N = in.dim(0), H = in.dim(1), Wd = in.dim(2), Ci = in.dim(3);
    const int Co = W.dim(3);
    Tensor out({N, H, Wd, Co});
    std::vector<double> acc(Co);
    const double* ip0 = in.data.data();
    const double* wp0 = W.data.data();
    double* op0 = out.data.data();
    for (int n = 0; n < N; ++n) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < Wd; ++x) {
                for (int co = 0; co < Co; ++co) acc[co] = b[static_cast<size_t>(co)];
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = x + kx - 1;
                        if (ix < 0 || ix >= Wd) continue;
                        const double* ip = ip0 + (static_cast<size_t>((n * H + iy) * Wd + ix)) * Ci;
                        const double* wp = wp0 + (static_cast<size_t>(ky * 3 + kx)) * Ci * Co;
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double v = ip[ci];
                            const double* wrow = wp + static_cast<size_t>(ci) * Co;
                            for (int co = 0; co < Co; ++co) acc[co] += v * wrow[co];
                        }
                    }
                }
                double* op = op0 + (static_cast<size_t>((n * H + y) * Wd + x)) * Co;
                for (int co = 0; co < Co; ++co) op[co] = acc[co];
            }
        }
    }
    apply_activation(act, out);
    return out;
}

Tensor conv_backward(const Tensor& in, const Tensor& W, const Tensor& out_act, Tensor d,
                     Activation act, Tensor& dW, Tensor& dB) {
    activation_backward(act, out_act, d);
    const int N = in.dim(0), H = in.dim(1), Wd = in.dim(2), Ci = in.dim(3);
    const int Co = W.dim(3);
    Tensor din(in.shape);
    const double* ip0 = in.data.data();
    const double* wp0 = W.data.data();
    const double* dp0 = d.data.data();
    double* dip0 = din.data.data();
    double* dwp0 = dW.data.data();
    for (int n = 0; n < N; ++n) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < Wd; ++x) {
                const double* dp = dp0 + (static_cast<size_t>((n * H + y) * Wd + x)) * Co;
                for (int co = 0; co < Co; ++co) dB[static_cast<size_t>(co)] += dp[co];
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = y + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = x + kx - 1;
                        if (ix < 0 || ix >= Wd) continue;
                        const size_t ioff = (static_cast<size_t>((n * H + iy) * Wd + ix)) * Ci;
                        const size_t woff = (static_cast<size_t>(ky * 3 + kx)) * Ci * Co;
                        for (int ci = 0; ci < Ci; ++ci) {
                            const double v = ip0[ioff + ci];
                            const double* wrow = wp0 + woff + static_cast<size_t>(ci) * Co;
                            double* dwrow = dwp0 + woff + static_cast<size_t>(ci) * Co;
                            double g = 0.0;
                            for (int co = 0; co < Co; ++co) {
                                const double dv = dp[co];
                                dwrow[co] += v * dv;
                                g += wrow[co] * dv;
                            }
                            dip0[ioff + ci] += g;
                        }
                    }
                }
            }
        }
    }
    return din;
}

Tensor pool_forward(const Tensor& in, std::vector<uint8_t>& argmax) {
    const int N = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
    const int OH = H / 2, OW = W / 2;
    Tensor out({N, OH, OW, C});
    argmax.assign(out.size(), 0);
    const double* ip = in.data.data();
    double* op = out.data.data();
    size_t o = 0;
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < OH; ++y)
            for (int x = 0; x < OW; ++x)
                for (int c = 0; c < C; ++c, ++o) {
                    double best = -1e300;
                    uint8_t which = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const size_t idx =
                                (static_cast<size_t>((n * H + 2 * y + dy) * W + 2 * x + dx)) * C + c;
                            if (ip[idx] > best) {
                                best = ip[idx];
                                which = static_cast<uint8_t>(2 * dy + dx);
                            }
                        }
                    op[o] = best;
                    argmax[o] = which;
                }
    return out;
}

Tensor pool_backward(const std::vector<int>& in_shape, const std::vector<uint8_t>& argmax,
                     const Tensor& d) {
    const int N = in_shape[0], H = in_shape[1], W = in_shape[2], C = in_shape[3];
    const int OH = H / 2, OW = W / 2;
    Tensor din(in_shape);
    const double* dp = d.data.data();
    double* dip = din.data.data();
    size_t o = 0;
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < OH; ++y)
            for (int x = 0; x < OW; ++x)
                for (int c = 0; c < C; ++c, ++o) {
                    const int dy = argmax[o] >> 1, dx = argmax[o] & 1;
                    const size_t idx =
                        (static_cast<size_t>((n * H + 2 * y + dy) * W + 2 * x + dx)) * C + c;
                    dip[idx] += dp[o];
                }
    return din;
}

Tensor upsample_forward(const Tensor& in) {
    const int N = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
    Tensor out({N, 2 * H, 2 * W, C});
    const double* ip = in.data.data();
    double* op = out.data.data();
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < 2 * H; ++y)
            for (int x = 0; x < 2 * W; ++x) {
                const double* s = ip + (static_cast<size_t>((n * H + y / 2) * W + x / 2)) * C;
                double* t = op + (static_cast<size_t>((n * 2 * H + y) * 2 * W + x)) * C;
                for (int c = 0; c < C; ++c) t[c] = s[c];
            }
    return out;
}

Tensor upsample_backward(const std::vector<int>& in_shape, const Tensor& d) {
    const int N = in_shape[0], H = in_shape[1], W = in_shape[2], C = in_shape[3];
    Tensor din(in_shape);
    const double* dp = d.data.data();
    double* dip = din.data.data();
    for (int n = 0; n < N; ++n)
        for (int y = 0; y < 2 * H; ++y)
            for (int x = 0; x < 2 * W; ++x) {
                const double* s = dp + (static_cast<size_t>((n * 2 * H + y) * 2 * W + x)) * C;
                double* t = dip + (static_cast<size_t>((n * H + y / 2) * W + x / 2)) * C;
                for (int c = 0; c < C; ++c) t[c] += s[c];
            }
    return din;
}

Tensor dense_forward(const Tensor& in, const Tensor& W, const Tensor& b, Activation act) {
    const int N = in.dim(0), D = in.dim(1), O = W.dim(1);
    Tensor out({N, O});
    const double* ip = in.data.data();
    const double* wp = W.data.data();
    double* op = out.data.data();
    for (int n = 0; n < N; ++n) {
        double* orow = op + static_cast<size_t>(n) * O;
        for (int o = 0; o < O; ++o) orow[o] = b[static_cast<size_t>(o)];
        const double* irow = ip + static_cast<size_t>(n) * D;
        for (int d = 0; d < D; ++d) {
            const double v = irow[d];
            const double* wrow = wp + static_cast<size_t>(d) * O;
            for (int o = 0; o < O; ++o) orow[o] += v * wrow[o];
        }
    }
    apply_activation(act, out);
    return out;
}

Tensor dense_backward(const Tensor& in, const Tensor& W, const Tensor& out_act, Tensor d,
                      Activation act, Tensor& dW, Tensor& dB) {
    activation_backward(act, out_act, d);
    const int N = in.dim(0), D = in.dim(1), O = W.dim(1);
    Tensor din(in.shape);
    const double* ip = in.data.data();
    const double* wp = W.data.data();
    const double* dp = d.data.data();
    double* dip = din.data.data();
    double* dwp = dW.data.data();
    for (int n = 0; n < N; ++n) {
        const double* irow = ip + static_cast<size_t>(n) * D;
        const double* drow = dp + static_cast<size_t>(n) * O;
        double* dirow = dip + static_cast<size_t>(n) * D;
        for (int o = 0; o < O; ++o) dB[static_cast<size_t>(o)] += drow[o];
        for (int dd = 0; dd < D; ++dd) {
            const double v = irow[dd];
            const double* wrow = wp + static_cast<size_t>(dd) * O;
            double* dwrow = dwp + static_cast<size_t>(dd) * O;
            double g = 0.0;
            for (int o = 0; o < O; ++o) {
                dwrow[o] += v * drow[o];
                g += wrow[o] * drow[o];
            }
            dirow[dd] = g;
        }
    }
    return din;
}

Tensor softmax_forward(const Tensor& in) {
    const int N = in.dim(0), D = in.dim(1);
    Tensor out(in.shape);
    for (int n = 0; n < N; ++n) {
        const double* irow = in.data.data() + static_cast<size_t>(n) * D;
        double* orow = out.data.data() + static_cast<size_t>(n) * D;
        double mx = irow[0];
        for (int d = 1; d < D; ++d) mx = std::max(mx, irow[d]);
        double sum = 0.0;
        for (int d = 0; d < D; ++d) {
            orow[d] = std::exp(irow[d] - mx);
            sum += orow[d];
        }
        for (int d = 0; d < D; ++d) orow[d] /= sum;
    }
    return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& d) {
    const int N = probs.dim(0), D = probs.dim(1);
    Tensor din(probs.shape);
    for (int n = 0; n < N; ++n) {
        const double* p = probs.data.data() + static_cast<size_t>(n) * D;
        const double* dp = d.data.data() + static_cast<size_t>(n) * D;
        double* o = din.data.data() + static_cast<size_t>(n) * D;
        double dot = 0.0;
        for (int k = 0; k < D; ++k) dot += dp[k] * p[k];
        for (int k = 0; k < D; ++k) o[k] = p[k] * (dp[k] - dot);
    }
    return din;
}

Tensor dropout_forward(const Tensor& in, double rate, RunMode mode, Rng& rng, Tensor& mask_out) {
    if (mode == RunMode::Eval || rate == 0.0) return in;
    const double scale = 1.0 / (1.0 - rate);
    Tensor mask(in.shape);
    Tensor out(in.shape);
    for (size_t i = 0; i < in.size(); ++i) {
        const double keep = rng.uniform() >= rate ? scale : 0.0;  // inverted dropout
        mask[i] = keep;
        out[i] = in[i] * keep;
    }
    mask_out = std::move(mask);
    return out;
}

struct SlotRunner {
    const NetworkParams& params;
    ActivationTrace& trace;
    RunMode mode;
    Rng& rng;

    Tensor run(size_t slot, const LayerDesc& l, const Tensor& in) {
        switch (l.kind) {
            case LayerKind::Conv3x3:
                return conv_forward(in, params.weights[slot], params.biases[slot], l.act);
            case LayerKind::MaxPool2x2:
                return pool_forward(in, trace.pool_argmax[slot]);
            case LayerKind::Upsample2x2:
                return upsample_forward(in);
            case LayerKind::Flatten: {
                int n = 1;
                for (size_t i = 1; i < in.shape.size(); ++i) n *= in.shape[i];
                return in.reshaped({in.dim(0), n});
            }
            case LayerKind::Dropout:
                return dropout_forward(in, l.rate, mode, rng, trace.dropout_masks[slot]);
            case LayerKind::Dense:
                return dense_forward(in, params.weights[slot], params.biases[slot], l.act);
            case LayerKind::Softmax:
                return softmax_forward(in);
        }
        throw std::logic_error("unknown layer kind");
    }
};

Tensor backward_slot(const NetworkParams& params, const ActivationTrace& trace, size_t slot,
                     const LayerDesc& l, const Tensor& in_act, const Tensor& out_act, Tensor d,
                     Gradients& g) {
    switch (l.kind) {
        case LayerKind::Conv3x3:
            return conv_backward(in_act, params.weights[slot], out_act, std::move(d), l.act,
                                 g.weights[slot], g.biases[slot]);
        case LayerKind::MaxPool2x2:
            return pool_backward(in_act.shape, trace.pool_argmax[slot], d);
        case LayerKind::Upsample2x2:
            return upsample_backward(in_act.shape, d);
        case LayerKind::Flatten:
            return d.reshaped(in_act.shape);
        case LayerKind::Dropout: {
            if (trace.dropout_masks[slot].empty()) return d;  // eval mode or rate 0
            Tensor out(d.shape);
            const Tensor& m = trace.dropout_masks[slot];
            for (size_t i = 0; i < d.size(); ++i) out[i] = d[i] * m[i];
            return out;
        }
        case LayerKind::Dense:
            return dense_backward(in_act, params.weights[slot], out_act, std::move(d), l.act,
                                  g.weights[slot], g.biases[slot]);
        case LayerKind::Softmax:
            return softmax_backward(out_act, d);
    }
    throw std::logic_error("unknown layer kind");
}

}  // namespace

LayerDesc conv3x3(int filters, Activation act) { return {LayerKind::Conv3x3, filters, 0.0, act}; }
LayerDesc maxpool2x2() { return {LayerKind::MaxPool2x2, 0, 0.0, Activation::None}; }
LayerDesc upsample2x2() { return {LayerKind::Upsample2x2, 0, 0.0, Activation::None}; }
LayerDesc flatten() { return {LayerKind::Flatten, 0, 0.0, Activation::None}; }
LayerDesc dropout(double rate) { return {LayerKind::Dropout, 0, rate, Activation::None}; }
LayerDesc dense(int out_dim, Activation act) { return {LayerKind::Dense, out_dim, 0.0, act}; }
LayerDesc softmax() { return {LayerKind::Softmax, 0, 0.0, Activation::None}; }

NetworkSpec build_architecture(ArchKind kind, Shape3 input, int num_classes) {
    if (input.h % 2 != 0 || input.w % 2 != 0)
        throw std::invalid_argument("input height and width must be divisible by 2, got " +
                                    std::to_string(input.h) + "x" + std::to_string(input.w));
    if (input.c != 1) throw std::invalid_argument("single-channel input expected");

    NetworkSpec spec;
    spec.input = input;
    spec.trunk = {
        conv3x3(3, Activation::Sigmoid),
        maxpool2x2(),
        conv3x3(3, Activation::Sigmoid),  // latent z
        conv3x3(3, Activation::Sigmoid),
        upsample2x2(),
        conv3x3(input.c, Activation::Sigmoid),
    };
    spec.latent_index = 2;
    if (kind == ArchKind::CAE) {
        if (num_classes < 2) throw std::invalid_argument("CAE needs at least two classes");
        spec.head = {
            flatten(),
            dropout(0.25),
            dense(128, Activation::Sigmoid),
            dropout(0.5),
            dense(num_classes, Activation::None),
            softmax(),
        };
    }
    validate_spec(spec);
    return spec;
}

std::vector<std::vector<int>> infer_trunk_shapes(const NetworkSpec& spec) {
    return infer_chain(spec.trunk, {spec.input.h, spec.input.w, spec.input.c});
}

std::vector<std::vector<int>> infer_head_shapes(const NetworkSpec& spec) {
    if (!spec.has_head()) return {};
    return infer_chain(spec.head, latent_shape(spec));
}

std::vector<int> latent_shape(const NetworkSpec& spec) {
    if (spec.latent_index < 0) throw std::invalid_argument("network has no latent branch point");
    return infer_trunk_shapes(spec)[static_cast<size_t>(spec.latent_index)];
}

bool NetworkParams::all_finite() const {
    for (const Tensor& t : weights)
        if (!t.all_finite()) return false;
    for (const Tensor& t : biases)
        if (!t.all_finite()) return false;
    return true;
}

NetworkParams init_params(const NetworkSpec& spec, uint64_t seed) {
    validate_spec(spec);
    NetworkParams p;
    p.spec = spec;
    const size_t nslots = spec.layer_count();
    p.weights.resize(nslots);
    p.biases.resize(nslots);

    auto trunk_shapes = infer_trunk_shapes(spec);
    auto head_shapes = infer_head_shapes(spec);
    Rng rng(seed);

    auto glorot = [&rng](Tensor& t, int fan_in, int fan_out) {
        const double s = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : t.data) v = rng.uniform(-s, s);
    };

    std::vector<int> cur = {spec.input.h, spec.input.w, spec.input.c};
    for (size_t slot = 0; slot < nslots; ++slot) {
        const bool in_trunk = slot < spec.trunk.size();
        if (!in_trunk && slot == spec.trunk.size()) cur = latent_shape(spec);
        const LayerDesc& l = layer_at(spec, slot);
        if (l.kind == LayerKind::Conv3x3) {
            const int ci = cur[2], co = l.units;
            p.weights[slot] = Tensor({3, 3, ci, co});
            p.biases[slot] = Tensor({co});
            glorot(p.weights[slot], 9 * ci, 9 * co);
        } else if (l.kind == LayerKind::Dense) {
            const int d = cur[0], o = l.units;
            p.weights[slot] = Tensor({d, o});
            p.biases[slot] = Tensor({o});
            glorot(p.weights[slot], d, o);
        }
        cur = in_trunk ? trunk_shapes[slot] : head_shapes[slot - spec.trunk.size()];
    }
    return p;
}

const Tensor& ActivationTrace::probabilities() const {
    if (head_acts.empty()) throw std::invalid_argument("network has no classifier head");
    return head_acts.back();
}

const Tensor& ActivationTrace::latent(const NetworkSpec& spec) const {
    if (spec.latent_index < 0) throw std::invalid_argument("network has no latent branch point");
    return trunk_acts[static_cast<size_t>(spec.latent_index)];
}

ActivationTrace forward(const NetworkParams& params, const Tensor& batch, RunMode mode,
                        uint64_t rng_seed) {
    const NetworkSpec& spec = params.spec;
    if (batch.rank() != 4 || batch.dim(1) != spec.input.h || batch.dim(2) != spec.input.w ||
        batch.dim(3) != spec.input.c)
        throw std::invalid_argument("batch shape " + batch.shape_str() +
                                    " does not match network input");

    ActivationTrace trace;
    trace.mode = mode;
    trace.input = batch;
    const size_t nslots = spec.layer_count();
    trace.pool_argmax.resize(nslots);
    trace.dropout_masks.resize(nslots);
    trace.trunk_acts.reserve(spec.trunk.size());
    trace.head_acts.reserve(spec.head.size());

    Rng rng(rng_seed);
    SlotRunner runner{params, trace, mode, rng};

    const Tensor* cur = &batch;
    for (size_t i = 0; i < spec.trunk.size(); ++i) {
        trace.trunk_acts.push_back(runner.run(i, spec.trunk[i], *cur));
        cur = &trace.trunk_acts.back();
    }
    if (spec.has_head()) {
        cur = &trace.trunk_acts[static_cast<size_t>(spec.latent_index)];
        for (size_t j = 0; j < spec.head.size(); ++j) {
            trace.head_acts.push_back(runner.run(spec.trunk.size() + j, spec.head[j], *cur));
            cur = &trace.head_acts.back();
        }
    }
    return trace;
}

double batch_loss(const ActivationTrace& trace, const std::vector<int>& labels, LossWeights w) {
    const Tensor& x = trace.input;
    const Tensor& recon = trace.reconstruction();
    const int n = x.dim(0);
    double loss = 0.0;
    if (w.recon != 0.0) {
        double re = 0.0;
        for (int i = 0; i < n; ++i) {
            // per-sample tensors share the batch layout; slice via offsets
            const size_t k = x.size() / n;
            const double* xp = x.data.data() + static_cast<size_t>(i) * k;
            const double* rp = recon.data.data() + static_cast<size_t>(i) * k;
            double s = 0.0;
            for (size_t j = 0; j < k; ++j) s += std::abs(xp[j] - rp[j]);
            re += s / static_cast<double>(k);
        }
        loss += w.recon * re / n;
    }
    if (w.classification != 0.0 && !trace.head_acts.empty()) {
        if (static_cast<int>(labels.size()) != n)
            throw std::invalid_argument("labels do not match batch size");
        const Tensor& probs = trace.probabilities();
        const int d = probs.dim(1);
        double ce = 0.0;
        for (int i = 0; i < n; ++i) {
            const int cls = label_to_class(labels[static_cast<size_t>(i)]);
            ce += -std::log(std::max(probs[static_cast<size_t>(i * d + cls)], kProbFloor));
        }
        loss += w.classification * ce / n;
    }
    return loss;
}

Gradients backward(const NetworkParams& params, const ActivationTrace& trace,
                   const std::vector<int>& labels, LossWeights w) {
    if (trace.mode != RunMode::Train)
        throw std::invalid_argument("backward requires a train-mode trace");
    const NetworkSpec& spec = params.spec;

    Gradients g;
    g.weights.resize(params.slot_count());
    g.biases.resize(params.slot_count());
    for (size_t s = 0; s < params.slot_count(); ++s) {
        g.weights[s] = Tensor(params.weights[s].shape);
        g.biases[s] = Tensor(params.biases[s].shape);
    }

    const int n = trace.input.dim(0);
    const size_t T = spec.trunk.size();

    // classifier-head gradient, entering the trunk at the latent output
    Tensor dz_head;
    const bool use_head = spec.has_head() && w.classification != 0.0;
    if (use_head) {
        if (static_cast<int>(labels.size()) != n)
            throw std::invalid_argument("labels do not match batch size");
        const Tensor& probs = trace.probabilities();
        const int d = probs.dim(1);
        Tensor dp(probs.shape);
        for (int i = 0; i < n; ++i) {
            const int cls = label_to_class(labels[static_cast<size_t>(i)]);
            const double p = probs[static_cast<size_t>(i * d + cls)];
            if (p > kProbFloor)
                dp[static_cast<size_t>(i * d + cls)] = -w.classification / (n * p);
        }
        Tensor dh = std::move(dp);
        for (size_t j = spec.head.size(); j-- > 0;) {
            const Tensor& in_act = j == 0 ? trace.latent(spec) : trace.head_acts[j - 1];
            dh = backward_slot(params, trace, T + j, spec.head[j], in_act, trace.head_acts[j],
                               std::move(dh), g);
        }
        dz_head = std::move(dh);
    }

    // reconstruction gradient at trunk output
    const Tensor& x = trace.input;
    const Tensor& recon = trace.reconstruction();
    Tensor d(recon.shape);
    if (w.recon != 0.0) {
        const size_t k = x.size() / n;
        const double scale = w.recon / (static_cast<double>(n) * static_cast<double>(k));
        for (size_t i = 0; i < x.size(); ++i) {
            const double diff = recon[i] - x[i];
            d[i] = diff > 0.0 ? scale : (diff < 0.0 ? -scale : 0.0);
        }
    }

    for (size_t i = T; i-- > 0;) {
        if (use_head && static_cast<int>(i) == spec.latent_index)
            for (size_t e = 0; e < d.size(); ++e) d[e] += dz_head[e];
        const Tensor& in_act = i == 0 ? trace.input : trace.trunk_acts[i - 1];
        d = backward_slot(params, trace, i, spec.trunk[i], in_act, trace.trunk_acts[i],
                          std::move(d), g);
    }
    return g;
}

AdamState init_adam(const NetworkParams& params, AdamConfig cfg) {
    AdamState s;
    s.cfg = cfg;
    s.step = 0;
    const size_t n = params.slot_count();
    s.m_w.resize(n);
    s.v_w.resize(n);
    s.m_b.resize(n);
    s.v_b.resize(n);
    for (size_t i = 0; i < n; ++i) {
        s.m_w[i] = Tensor(params.weights[i].shape);
        s.v_w[i] = Tensor(params.weights[i].shape);
        s.m_b[i] = Tensor(params.biases[i].shape);
        s.v_b[i] = Tensor(params.biases[i].shape);
    }
    return s;
}

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state) {
    if (grads.weights.size() != params.slot_count())
        throw std::invalid_argument("adam_step: gradient slots do not match parameters");
    for (const Tensor& t : grads.weights)
        if (!t.all_finite()) throw std::runtime_error("adam_step: non-finite gradient (training diverged)");
    for (const Tensor& t : grads.biases)
        if (!t.all_finite()) throw std::runtime_error("adam_step: non-finite gradient (training diverged)");

    const AdamConfig& c = state.cfg;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

    auto update = [&](Tensor& p, const Tensor& dg, Tensor& m, Tensor& v) {
        require_same_shape(p, dg, "adam_step");
        for (size_t i = 0; i < p.size(); ++i) {
            const double gi = dg[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    };
    for (size_t s = 0; s < params.slot_count(); ++s) {
        update(params.weights[s], grads.weights[s], state.m_w[s], state.v_w[s]);
        update(params.biases[s], grads.biases[s], state.m_b[s], state.v_b[s]);
    }
}

double l1_reconstruction_error(const Tensor& x, const Tensor& x_prime) {
    require_same_shape(x, x_prime, "l1_reconstruction_error");
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - x_prime[i]);
    return s / static_cast<double>(x.size());
}

int label_to_class(int label) {
    if (label != -1 && label != +1)
        throw std::invalid_argument("label must be -1 or +1, got " + std::to_string(label));
    return label == -1 ? 0 : 1;
}

double cross_entropy(const std::vector<double>& probs, int label) {
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("class probabilities must sum to 1");
    const int cls = label_to_class(label);
    if (cls >= static_cast<int>(probs.size()))
        throw std::invalid_argument("probability vector too short for label");
    return -std::log(std::max(probs[static_cast<size_t>(cls)], kProbFloor));
}

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
}

FitResult fit_network(NetworkParams& params, const Tensor& X, const std::vector<int>& labels,
                      const TrainConfig& cfg, LossWeights w) {
    validate(cfg);
    const int n = X.dim(0);
    if (n < 1) throw std::invalid_argument("empty training set");
    if (!labels.empty() && static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("labels do not match training set size");
    if (params.spec.has_head() && w.classification != 0.0 && labels.empty())
        throw std::invalid_argument("classifier training needs labels");
    const size_t k = X.size() / n;

    AdamConfig ac;
    ac.learning_rate = cfg.learning_rate;
    AdamState adam = init_adam(params, ac);
    Rng rng(cfg.rng_seed);

    std::vector<int> sample_shape(X.shape.begin() + 1, X.shape.end());
    FitResult result;
    result.epoch_losses.reserve(static_cast<size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> perm = rng.permutation(n);
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - start);
            std::vector<int> bshape = with_batch(bs, sample_shape);
            Tensor Xb(bshape);
            std::vector<int> yb;
            if (!labels.empty()) yb.resize(static_cast<size_t>(bs));
            for (int i = 0; i < bs; ++i) {
                const int src = perm[static_cast<size_t>(start + i)];
                std::copy_n(X.data.data() + static_cast<size_t>(src) * k, k,
                            Xb.data.data() + static_cast<size_t>(i) * k);
                if (!labels.empty()) yb[static_cast<size_t>(i)] = labels[static_cast<size_t>(src)];
            }
            const uint64_t fseed = rng.next_u64();
            ActivationTrace trace = forward(params, Xb, RunMode::Train, fseed);
            epoch_loss += batch_loss(trace, yb, w) * bs;
            Gradients g = backward(params, trace, yb, w);
            adam_step(params, g, adam);
        }
        result.epoch_losses.push_back(epoch_loss / n);
    }
    if (!params.all_finite()) throw std::runtime_error("training diverged: non-finite parameters");
    return result;
}

// ---- checkpoints ---------------------------------------------------------

namespace {
constexpr char kNetMagic[8] = {'C', 'A', 'E', 'D', 'N', 'E', 'T', '1'};

void write_layers(BinaryWriter& w, const std::vector<LayerDesc>& layers) {
    w.u32(static_cast<uint32_t>(layers.size()));
    for (const LayerDesc& l : layers) {
        w.u8(static_cast<uint8_t>(l.kind));
        w.i32(l.units);
        w.f64(l.rate);
        w.u8(static_cast<uint8_t>(l.act));
    }
}

std::vector<LayerDesc> read_layers(BinaryReader& r) {
    const uint32_t n = r.u32();
    std::vector<LayerDesc> layers(n);
    for (LayerDesc& l : layers) {
        l.kind = static_cast<LayerKind>(r.u8());
        l.units = r.i32();
        l.rate = r.f64();
        l.act = static_cast<Activation>(r.u8());
    }
    return layers;
}
}  // namespace

void write_network(BinaryWriter& w, const NetworkParams& params) {
    w.magic(kNetMagic);
    w.i32(params.spec.input.h);
    w.i32(params.spec.input.w);
    w.i32(params.spec.input.c);
    write_layers(w, params.spec.trunk);
    w.i32(params.spec.latent_index);
    write_layers(w, params.spec.head);
    w.u32(static_cast<uint32_t>(params.slot_count()));
    for (size_t s = 0; s < params.slot_count(); ++s) {
        w.tensor(params.weights[s]);
        w.tensor(params.biases[s]);
    }
}

NetworkParams read_network(BinaryReader& r) {
    r.expect_magic(kNetMagic);
    NetworkParams p;
    p.spec.input.h = r.i32();
    p.spec.input.w = r.i32();
    p.spec.input.c = r.i32();
    p.spec.trunk = read_layers(r);
    p.spec.latent_index = r.i32();
    p.spec.head = read_layers(r);
    const uint32_t nslots = r.u32();
    if (nslots != p.spec.layer_count())
        throw std::runtime_error("checkpoint slot count does not match spec");
    p.weights.resize(nslots);
    p.biases.resize(nslots);
    for (uint32_t s = 0; s < nslots; ++s) {
        p.weights[s] = r.tensor();
        p.biases[s] = r.tensor();
    }
    validate_spec(p.spec);
    return p;
}

void save_network(const std::string& path, const NetworkParams& params) {
    BinaryWriter w(path);
    write_network(w, params);
}

NetworkParams load_network(const std::string& path) {
    BinaryReader r(path);
    return read_network(r);
}

}  // namespace caedet::nn
