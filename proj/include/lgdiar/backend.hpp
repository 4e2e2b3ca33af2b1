#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lgdiar/features.hpp"
#include "lgdiar/mat.hpp"
#include "lgdiar/rng.hpp"

namespace lgdiar {

/// T x S_local matrix of per-frame speaker-activity posteriors in [0, 1].
using PosteriorMatrix = MatF;

/// T x S_local binary activity matrix.
using LabelMatrix = Mat<std::uint8_t>;

struct BackendConfig {
    int s_local = 3;
    int layers = 6;
    int heads = 8;
    int hidden = 256;
    int feat_dim = 23;
    std::uint64_t seed = 0;
    double epsilon_oracle = 0.01;

    void validate() const;
};

/// Frame-posterior estimator. Implementations are immutable after
/// construction; infer may be called concurrently from many workers.
class Backend {
public:
    virtual ~Backend() = default;

    virtual int slots() const = 0;

    /// One posterior row per input frame, entries in [0, 1], deterministic
    /// for a given (backend, chunk). Throws on empty chunks or inputs the
    /// backend cannot consume.
    virtual PosteriorMatrix infer(const FeatureSequence& chunk) const = 0;
};

// --- transformer ------------------------------------------------------------

/// Named parameter tensors of the self-attention encoder. Flat row-major
/// storage; loaded from / stored to the raw-float32 + JSON-header format.
struct TransformerWeights {
    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::vector<float> data;
    };
    BackendConfig config;
    std::vector<Entry> tensors;

    const Entry& find(const std::string& name) const;

    static TransformerWeights zeros(const BackendConfig& config);
    static TransformerWeights random(const BackendConfig& config, std::uint64_t seed);
};

void write_weights(const std::string& path, const TransformerWeights& weights);
TransformerWeights read_weights(const std::string& path);

/// Self-attention EEND forward pass: linear input projection, `layers`
/// encoder blocks (multi-head self-attention + 2-layer feed-forward, both
/// with residual and layer norm, no positional encoding), then a linear
/// head squashed to [0, 1] by the logistic function.
PosteriorMatrix transformer_forward(const FeatureSequence& chunk, const TransformerWeights& weights);

class TransformerBackend : public Backend {
public:
    explicit TransformerBackend(TransformerWeights weights);

    int slots() const override { return weights_.config.s_local; }
    PosteriorMatrix infer(const FeatureSequence& chunk) const override;

    const TransformerWeights& weights() const { return weights_; }

private:
    TransformerWeights weights_;
};

// --- oracle -----------------------------------------------------------------

/// Test double that derives ideal posteriors from hidden ground-truth
/// identities. Slot assignment is the order of first appearance within the
/// chunk, so the cross-window permutation ambiguity of a real EEND is
/// reproduced on purpose.
class OracleBackend : public Backend {
public:
    explicit OracleBackend(int s_local = 3, double epsilon = 0.01);

    int slots() const override { return s_local_; }
    PosteriorMatrix infer(const FeatureSequence& chunk) const override;

private:
    int s_local_;
    double epsilon_;
};

// --- training-time pieces ---------------------------------------------------

/// Permutation-invariant binary cross-entropy: the minimum over all column
/// permutations of the mean BCE between labels and posteriors. Probabilities
/// are clamped to [1e-7, 1 - 1e-7] before the log.
double pit_loss(const PosteriorMatrix& posteriors, const LabelMatrix& labels);

struct ReformatResult {
    FeatureSequence features;
    LabelMatrix labels;
    bool reformatted = false;
};

/// Adaptation-time data transform: drops overlapped frames, groups the rest
/// by speaker, and concatenates an rng-chosen pair of speaker blocks into a
/// new utterance with labels re-indexed to the pair. Inputs with fewer than
/// two usable speakers come back unchanged with reformatted = false.
ReformatResult concat_adaptation_reformat(const FeatureSequence& features, const LabelMatrix& labels,
                                          Rng& rng);

// --- factory ----------------------------------------------------------------

/// Backend from a spec string: "oracle" | "transformer:<weights-path>" |
/// "transformer:random:<seed>". Dimensions for random weights come from
/// `config`; file-backed weights carry their own.
std::unique_ptr<Backend> make_backend(const std::string& spec, const BackendConfig& config);

} // namespace lgdiar
