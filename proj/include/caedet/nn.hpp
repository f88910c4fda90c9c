#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caedet/tensor.hpp"

namespace caedet {
class BinaryWriter;
class BinaryReader;
}  // namespace caedet

namespace caedet::nn {

enum class LayerKind : uint8_t { Conv3x3, MaxPool2x2, Upsample2x2, Flatten, Dropout, Dense, Softmax };
enum class Activation : uint8_t { None, Sigmoid };

struct LayerDesc {
    LayerKind kind = LayerKind::Conv3x3;
    int units = 0;        // Conv3x3: filter count; Dense: output width
    double rate = 0.0;    // Dropout: drop probability
    Activation act = Activation::None;

    bool operator==(const LayerDesc&) const = default;
};

LayerDesc conv3x3(int filters, Activation act = Activation::Sigmoid);
LayerDesc maxpool2x2();
LayerDesc upsample2x2();
LayerDesc flatten();
LayerDesc dropout(double rate);
LayerDesc dense(int out_dim, Activation act = Activation::None);
LayerDesc softmax();

struct Shape3 {
    int h = 0, w = 0, c = 0;

    bool operator==(const Shape3&) const = default;
};

/// A trunk (encoder + decoder, output = reconstruction) plus an optional
/// classifier head fed by the latent output of trunk[latent_index].
struct NetworkSpec {
    Shape3 input;
    std::vector<LayerDesc> trunk;
    int latent_index = -1;
    std::vector<LayerDesc> head;

    bool has_head() const { return !head.empty(); }
    size_t layer_count() const { return trunk.size() + head.size(); }
    bool operator==(const NetworkSpec&) const = default;
};

enum class ArchKind : uint8_t { CAE, RAE };

/// The two fixed detector architectures. Input H and W must be even and
/// single-channel; a CAE additionally gets the flatten/dropout/dense head
/// ending in a softmax over num_classes.
NetworkSpec build_architecture(ArchKind kind, Shape3 input, int num_classes = 2);

/// Per-layer output shapes (sample level, without the batch dimension).
/// Throws std::invalid_argument on incompatible consecutive layers.
std::vector<std::vector<int>> infer_trunk_shapes(const NetworkSpec& spec);
std::vector<std::vector<int>> infer_head_shapes(const NetworkSpec& spec);

/// Shape of the latent activation z, i.e. the output of trunk[latent_index].
std::vector<int> latent_shape(const NetworkSpec& spec);

/// Weights and biases per layer slot. Slot i < trunk.size() addresses
/// trunk[i]; slot trunk.size()+j addresses head[j]. Layers without
/// parameters hold empty tensors.
struct NetworkParams {
    NetworkSpec spec;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    size_t slot_count() const { return weights.size(); }
    bool all_finite() const;
};

/// Glorot-uniform initialization, seeded and deterministic.
NetworkParams init_params(const NetworkSpec& spec, uint64_t seed);

enum class RunMode : uint8_t { Train, Eval };

/// Everything forward() computed: per-layer activations plus the pooling
/// argmaxes and dropout masks backward() needs. Eval mode draws nothing
/// and is a pure function of (params, batch).
struct ActivationTrace {
    RunMode mode = RunMode::Eval;
    Tensor input;
    std::vector<Tensor> trunk_acts;
    std::vector<Tensor> head_acts;
    std::vector<std::vector<uint8_t>> pool_argmax;  // per slot; 2*dy+dx of the max corner
    std::vector<Tensor> dropout_masks;              // per slot; scale-premultiplied

    const Tensor& reconstruction() const { return trunk_acts.back(); }
    const Tensor& probabilities() const;
    const Tensor& latent(const NetworkSpec& spec) const;
};

ActivationTrace forward(const NetworkParams& params, const Tensor& batch, RunMode mode,
                        uint64_t rng_seed = 0);

struct LossWeights {
    double recon = 1.0;
    double classification = 1.0;
};

struct Gradients {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};

/// Gradients of recon_weight * mean RE + class_weight * mean CE over the
/// batch, with respect to every parameter. The trace must come from a
/// train-mode forward pass. labels may be empty when the classification
/// term is inactive.
Gradients backward(const NetworkParams& params, const ActivationTrace& trace,
                   const std::vector<int>& labels, LossWeights w);

/// The scalar loss backward() differentiates, computed from the same trace.
double batch_loss(const ActivationTrace& trace, const std::vector<int>& labels, LossWeights w);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    int64_t step = 0;
    std::vector<Tensor> m_w, v_w, m_b, v_b;
};

AdamState init_adam(const NetworkParams& params, AdamConfig cfg = {});

/// Standard Adam update with bias correction. Rejects non-finite
/// gradients (diverged training) with std::runtime_error.
void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state);

/// Mean absolute difference per element. Size-independent; min-max
/// normalization happens later in the detector.
double l1_reconstruction_error(const Tensor& x, const Tensor& x_prime);

/// -log p(true class), probability floored at 1e-12. label is -1 or +1.
double cross_entropy(const std::vector<double>& probs, int label);

/// -1 -> 0, +1 -> 1.
int label_to_class(int label);

struct TrainConfig {
    int epochs = 1;
    int batch_size = 256;
    double learning_rate = 1e-3;
    uint64_t rng_seed = 0;
};

void validate(const TrainConfig& cfg);

struct FitResult {
    std::vector<double> epoch_losses;
};

/// Mini-batch Adam training of one network; deterministic given the seed.
/// X is the full dataset as one [N,...] tensor; labels are per row and may
/// be empty when the spec has no head.
FitResult fit_network(NetworkParams& params, const Tensor& X, const std::vector<int>& labels,
                      const TrainConfig& cfg, LossWeights w);

/// Bit-exact binary checkpoint of spec + parameters.
void save_network(const std::string& path, const NetworkParams& params);
NetworkParams load_network(const std::string& path);

/// In-stream variants for containers that embed a network.
void write_network(BinaryWriter& w, const NetworkParams& params);
NetworkParams read_network(BinaryReader& r);

}  // namespace caedet::nn
