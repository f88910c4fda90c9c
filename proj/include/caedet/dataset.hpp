#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "caedet/tensor.hpp"
#include "caedet/types.hpp"

namespace caedet::data {

enum class IdxErrorCode : uint8_t { Io, BadMagic, Truncated, CountMismatch };

class IdxError : public std::runtime_error {
public:
    IdxError(IdxErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
    IdxErrorCode code;
};

struct RawDataset {
    Tensor images;            // [N,H,W,1], values in [0,1]
    std::vector<int> labels;  // source class ids, one per image
};

/// Read an IDX image/label file pair (the MNIST container format:
/// big-endian magic + dimension sizes, then raw bytes). Pixels are scaled
/// by 1/255. Throws IdxError with a distinct code for unreadable files,
/// wrong magic, short reads and image/label count mismatch.
RawDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Keep only pos_class (labeled +1) and neg_class (labeled -1), shuffle
/// by seed. origin_id is the index within the returned task.
BinaryTask make_binary_task(const RawDataset& raw, int pos_class, int neg_class,
                            uint64_t rng_seed);

/// Two isotropic Gaussian clouds with centers center_distance apart
/// (euclidean, split evenly across coordinates around 0.5), clamped to
/// [0,1]. When dim is a perfect square with even side the features are
/// shaped [s,s,1] so they can also feed the networks; otherwise [1,dim,1].
BinaryTask synth_blobs(int n_per_class, int dim, double center_distance, double spread,
                       uint64_t rng_seed);

/// Prototype shapes for the synthetic image tasks used when no IDX data
/// directory is available. Each sample is a randomly shifted, rescaled and
/// noised copy of its class prototype.
enum class ProtoKind : uint8_t {
    Disc, Ring, HStripes, VStripes, Cross, Diamond, DiagStripes, AntiDiagStripes, Checker, Solid
};

std::string proto_name(ProtoKind k);

BinaryTask synth_images(ProtoKind pos, ProtoKind neg, int n_per_class, uint64_t rng_seed,
                        int side = 28);

/// The four image-pair tasks the experiment runners cycle through.
std::vector<std::pair<ProtoKind, ProtoKind>> default_image_pairs();

struct SplitSizes {
    int train = 100;
    int validation = 200;
    int test = 200;
};

/// Slice a task into per-round train/validation/test buffers. Splits are
/// stratified by class at the task's overall balance and disjoint by
/// origin_id within a round. Rounds draw from a per-class shuffled pool
/// without replacement; once a pool is exhausted it is reshuffled and
/// reused, which is recorded (sampled_with_replacement + warning). With
/// allow_replacement = false an exhausted pool is an error instead. The
/// last min(n_eval, n_rounds) rounds are evaluation rounds, the rest
/// detector-training rounds.
ExperimentDataset build_rounds(const BinaryTask& task, int n_rounds, SplitSizes sizes,
                               uint64_t rng_seed, int n_eval = 10,
                               bool allow_replacement = true);

/// Stack sample features into one [N,...] batch tensor.
Tensor stack_features(const std::vector<LabeledSample>& samples);

std::vector<int> labels_of(const std::vector<LabeledSample>& samples);

}  // namespace caedet::data
