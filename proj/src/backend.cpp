#include "lgdiar/backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace lgdiar {

void BackendConfig::validate() const {
    if (s_local < 1) throw std::invalid_argument("s_local must be >= 1");
    if (layers < 0) throw std::invalid_argument("layers must be >= 0");
    if (heads < 1 || hidden < 1) throw std::invalid_argument("heads and hidden must be >= 1");
    if (hidden % heads != 0) throw std::invalid_argument("hidden must be divisible by heads");
    if (feat_dim < 1) throw std::invalid_argument("feat_dim must be >= 1");
}

namespace {

constexpr double kLayerNormEps = 1e-5;

// C = A * B + bias (row-broadcast). A: m x k, B: k x n, C: m x n.
void matmul_bias(const float* a, std::size_t m, std::size_t k, const float* b, std::size_t n,
                 const float* bias, float* c) {
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        if (bias) {
            std::memcpy(crow, bias, n * sizeof(float));
        } else {
            std::memset(crow, 0, n * sizeof(float));
        }
        const float* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void layer_norm_inplace(float* x, std::size_t rows, std::size_t cols, const float* gamma,
                        const float* beta) {
    for (std::size_t i = 0; i < rows; ++i) {
        float* row = x + i * cols;
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += row[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t j = 0; j < cols; ++j) {
            row[j] = static_cast<float>((row[j] - mean) * inv * gamma[j] + beta[j]);
        }
    }
}

void softmax_row(float* row, std::size_t n) {
    float mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    const float inv = 1.0f / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

bool all_finite(const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

std::size_t shape_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

const TransformerWeights::Entry& TransformerWeights::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw std::runtime_error("missing weight tensor: " + name);
}

namespace {

// Tensor catalog in storage order. Weight matrices are row-major
// (input_dim x output_dim) so the forward pass is x * W + b throughout.
std::vector<std::pair<std::string, std::vector<std::size_t>>> tensor_catalog(const BackendConfig& c) {
    const std::size_t f = static_cast<std::size_t>(c.feat_dim);
    const std::size_t h = static_cast<std::size_t>(c.hidden);
    const std::size_t ff = 4 * h;
    const std::size_t s = static_cast<std::size_t>(c.s_local);
    std::vector<std::pair<std::string, std::vector<std::size_t>>> cat;
    cat.emplace_back("input.weight", std::vector<std::size_t>{f, h});
    cat.emplace_back("input.bias", std::vector<std::size_t>{h});
    for (int l = 0; l < c.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        for (const char* m : {"wq", "wk", "wv", "wo"}) {
            cat.emplace_back(p + "attn." + m, std::vector<std::size_t>{h, h});
        }
        for (const char* b : {"bq", "bk", "bv", "bo"}) {
            cat.emplace_back(p + "attn." + b, std::vector<std::size_t>{h});
        }
        cat.emplace_back(p + "norm1.gamma", std::vector<std::size_t>{h});
        cat.emplace_back(p + "norm1.beta", std::vector<std::size_t>{h});
        cat.emplace_back(p + "ff.w1", std::vector<std::size_t>{h, ff});
        cat.emplace_back(p + "ff.b1", std::vector<std::size_t>{ff});
        cat.emplace_back(p + "ff.w2", std::vector<std::size_t>{ff, h});
        cat.emplace_back(p + "ff.b2", std::vector<std::size_t>{h});
        cat.emplace_back(p + "norm2.gamma", std::vector<std::size_t>{h});
        cat.emplace_back(p + "norm2.beta", std::vector<std::size_t>{h});
    }
    cat.emplace_back("output.weight", std::vector<std::size_t>{h, s});
    cat.emplace_back("output.bias", std::vector<std::size_t>{s});
    return cat;
}

bool is_gamma(const std::string& name) {
    return name.size() >= 5 && name.compare(name.size() - 5, 5, "gamma") == 0;
}

bool is_matrix(const std::vector<std::size_t>& shape) { return shape.size() == 2; }

} // namespace

TransformerWeights TransformerWeights::zeros(const BackendConfig& config) {
    config.validate();
    TransformerWeights w;
    w.config = config;
    for (auto& [name, shape] : tensor_catalog(config)) {
        Entry e{name, shape, std::vector<float>(shape_count(shape), 0.0f)};
        if (is_gamma(name)) std::fill(e.data.begin(), e.data.end(), 1.0f);
        w.tensors.push_back(std::move(e));
    }
    return w;
}

TransformerWeights TransformerWeights::random(const BackendConfig& config, std::uint64_t seed) {
    config.validate();
    TransformerWeights w;
    w.config = config;
    Rng rng(seed);
    for (auto& [name, shape] : tensor_catalog(config)) {
        Entry e{name, shape, std::vector<float>(shape_count(shape), 0.0f)};
        if (is_matrix(shape)) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(shape[0]));
            for (auto& v : e.data) v = static_cast<float>(rng.normal(0.0, scale));
        } else if (is_gamma(name)) {
            std::fill(e.data.begin(), e.data.end(), 1.0f);
        }
        w.tensors.push_back(std::move(e));
    }
    return w;
}

void write_weights(const std::string& path, const TransformerWeights& weights) {
    std::ofstream raw(path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open for writing: " + path);
    nlohmann::json header;
    header["model"] = {
        {"s_local", weights.config.s_local}, {"layers", weights.config.layers},
        {"heads", weights.config.heads},     {"hidden", weights.config.hidden},
        {"feat_dim", weights.config.feat_dim},
    };
    header["tensors"] = nlohmann::json::array();
    for (const auto& t : weights.tensors) {
        header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
        raw.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!raw) throw std::runtime_error("short write: " + path);
    std::ofstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot open for writing: " + path + ".json");
    side << header.dump(2) << "\n";
}

TransformerWeights read_weights(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("missing weight header: " + path + ".json");
    nlohmann::json header = nlohmann::json::parse(side);

    TransformerWeights w;
    const auto& model = header.at("model");
    w.config.s_local = model.at("s_local").get<int>();
    w.config.layers = model.at("layers").get<int>();
    w.config.heads = model.at("heads").get<int>();
    w.config.hidden = model.at("hidden").get<int>();
    w.config.feat_dim = model.at("feat_dim").get<int>();
    w.config.validate();

    std::ifstream raw(path, std::ios::binary);
    if (!raw) throw std::runtime_error("missing weight data: " + path);
    for (const auto& jt : header.at("tensors")) {
        TransformerWeights::Entry e;
        e.name = jt.at("name").get<std::string>();
        e.shape = jt.at("shape").get<std::vector<std::size_t>>();
        e.data.resize(shape_count(e.shape));
        raw.read(reinterpret_cast<char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(float)));
        if (static_cast<std::size_t>(raw.gcount()) != e.data.size() * sizeof(float)) {
            throw std::runtime_error("weight data truncated: " + path);
        }
        w.tensors.push_back(std::move(e));
    }
    return w;
}

PosteriorMatrix transformer_forward(const FeatureSequence& chunk, const TransformerWeights& weights) {
    const BackendConfig& cfg = weights.config;
    const std::size_t t_len = chunk.size();
    const std::size_t h = static_cast<std::size_t>(cfg.hidden);
    const std::size_t ff = 4 * h;
    const std::size_t n_heads = static_cast<std::size_t>(cfg.heads);
    const std::size_t dk = h / n_heads;

    if (t_len == 0) throw std::invalid_argument("transformer_forward: empty chunk");
    if (chunk.dim() != static_cast<std::size_t>(cfg.feat_dim)) {
        throw std::invalid_argument("transformer_forward: feature dimension mismatch");
    }
    if (!all_finite(chunk.frames.data(), t_len * chunk.dim())) {
        throw std::invalid_argument("transformer_forward: non-finite input");
    }

    std::vector<float> x(t_len * h);
    {
        const auto& win = weights.find("input.weight");
        const auto& bin = weights.find("input.bias");
        matmul_bias(chunk.frames.data(), t_len, chunk.dim(), win.data.data(), h, bin.data.data(),
                    x.data());
    }

    std::vector<float> q(t_len * h), k(t_len * h), v(t_len * h), ctx(t_len * h), attn_out(t_len * h);
    std::vector<float> scores(t_len * t_len);
    std::vector<float> ff_hidden(t_len * ff), ff_out(t_len * h);
    const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        matmul_bias(x.data(), t_len, h, weights.find(p + "attn.wq").data.data(), h,
                    weights.find(p + "attn.bq").data.data(), q.data());
        matmul_bias(x.data(), t_len, h, weights.find(p + "attn.wk").data.data(), h,
                    weights.find(p + "attn.bk").data.data(), k.data());
        matmul_bias(x.data(), t_len, h, weights.find(p + "attn.wv").data.data(), h,
                    weights.find(p + "attn.bv").data.data(), v.data());

        for (std::size_t head = 0; head < n_heads; ++head) {
            const std::size_t off = head * dk;
            for (std::size_t i = 0; i < t_len; ++i) {
                const float* qi = q.data() + i * h + off;
                float* srow = scores.data() + i * t_len;
                for (std::size_t j = 0; j < t_len; ++j) {
                    const float* kj = k.data() + j * h + off;
                    float dot = 0.0f;
                    for (std::size_t d = 0; d < dk; ++d) dot += qi[d] * kj[d];
                    srow[j] = dot * inv_sqrt_dk;
                }
                softmax_row(srow, t_len);
            }
            for (std::size_t i = 0; i < t_len; ++i) {
                float* out = ctx.data() + i * h + off;
                std::memset(out, 0, dk * sizeof(float));
                const float* srow = scores.data() + i * t_len;
                for (std::size_t j = 0; j < t_len; ++j) {
                    const float w = srow[j];
                    const float* vj = v.data() + j * h + off;
                    for (std::size_t d = 0; d < dk; ++d) out[d] += w * vj[d];
                }
            }
        }
        matmul_bias(ctx.data(), t_len, h, weights.find(p + "attn.wo").data.data(), h,
                    weights.find(p + "attn.bo").data.data(), attn_out.data());
        for (std::size_t i = 0; i < t_len * h; ++i) x[i] += attn_out[i];
        layer_norm_inplace(x.data(), t_len, h, weights.find(p + "norm1.gamma").data.data(),
                           weights.find(p + "norm1.beta").data.data());

        matmul_bias(x.data(), t_len, h, weights.find(p + "ff.w1").data.data(), ff,
                    weights.find(p + "ff.b1").data.data(), ff_hidden.data());
        for (auto& val : ff_hidden) val = std::max(val, 0.0f);
        matmul_bias(ff_hidden.data(), t_len, ff, weights.find(p + "ff.w2").data.data(), h,
                    weights.find(p + "ff.b2").data.data(), ff_out.data());
        for (std::size_t i = 0; i < t_len * h; ++i) x[i] += ff_out[i];
        layer_norm_inplace(x.data(), t_len, h, weights.find(p + "norm2.gamma").data.data(),
                           weights.find(p + "norm2.beta").data.data());
    }

    const std::size_t s = static_cast<std::size_t>(cfg.s_local);
    PosteriorMatrix out(t_len, s);
    matmul_bias(x.data(), t_len, h, weights.find("output.weight").data.data(), s,
                weights.find("output.bias").data.data(), out.data());
    for (std::size_t i = 0; i < t_len * s; ++i) {
        out.data()[i] = 1.0f / (1.0f + std::exp(-out.data()[i]));
    }
    return out;
}

TransformerBackend::TransformerBackend(TransformerWeights weights) : weights_(std::move(weights)) {
    weights_.config.validate();
    for (const auto& t : weights_.tensors) {
        if (shape_count(t.shape) != t.data.size()) {
            throw std::invalid_argument("weight tensor shape/data mismatch: " + t.name);
        }
        if (!all_finite(t.data.data(), t.data.size())) {
            throw std::invalid_argument("non-finite weight tensor: " + t.name);
        }
    }
    // Fail fast if any catalog tensor is missing.
    for (auto& [name, shape] : tensor_catalog(weights_.config)) {
        if (weights_.find(name).shape != shape) {
            throw std::invalid_argument("unexpected shape for weight tensor: " + name);
        }
    }
}

PosteriorMatrix TransformerBackend::infer(const FeatureSequence& chunk) const {
    return transformer_forward(chunk, weights_);
}

OracleBackend::OracleBackend(int s_local, double epsilon) : s_local_(s_local), epsilon_(epsilon) {
    if (s_local < 1) throw std::invalid_argument("s_local must be >= 1");
    if (epsilon <= 0.0 || epsilon >= 0.5) throw std::invalid_argument("epsilon must be in (0, 0.5)");
}

PosteriorMatrix OracleBackend::infer(const FeatureSequence& chunk) const {
    if (chunk.empty()) throw std::invalid_argument("oracle infer: empty chunk");
    if (!chunk.hidden_identities) {
        throw std::invalid_argument("oracle infer: chunk carries no hidden identities");
    }
    const IdentityTrack& ids = *chunk.hidden_identities;

    // Slot per identity, in order of first appearance within this chunk.
    std::vector<int> identity_at;
    auto slot_for = [&](int identity) {
        for (std::size_t i = 0; i < identity_at.size(); ++i) {
            if (identity_at[i] == identity) return static_cast<int>(i);
        }
        identity_at.push_back(identity);
        if (identity_at.size() > static_cast<std::size_t>(s_local_)) {
            throw std::runtime_error("oracle infer: more distinct identities than slots");
        }
        return static_cast<int>(identity_at.size() - 1);
    };

    const auto eps = static_cast<float>(epsilon_);
    PosteriorMatrix out(chunk.size(), s_local_, eps);
    for (std::size_t t = 0; t < chunk.size(); ++t) {
        for (int identity : ids[t]) {
            out(t, slot_for(identity)) = 1.0f - eps;
        }
    }
    return out;
}

double pit_loss(const PosteriorMatrix& posteriors, const LabelMatrix& labels) {
    if (posteriors.rows() != labels.rows() || posteriors.cols() != labels.cols()) {
        throw std::invalid_argument("pit_loss: shape mismatch");
    }
    const std::size_t t_len = posteriors.rows();
    const std::size_t s = posteriors.cols();
    if (t_len == 0 || s == 0) return 0.0;

    constexpr double kClamp = 1e-7;
    std::vector<int> perm(s);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double sum = 0.0;
        for (std::size_t t = 0; t < t_len; ++t) {
            for (std::size_t col = 0; col < s; ++col) {
                const double p =
                    std::clamp(static_cast<double>(posteriors(t, perm[col])), kClamp, 1.0 - kClamp);
                sum -= labels(t, col) ? std::log(p) : std::log(1.0 - p);
            }
        }
        best = std::min(best, sum / static_cast<double>(t_len * s));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

ReformatResult concat_adaptation_reformat(const FeatureSequence& features, const LabelMatrix& labels,
                                          Rng& rng) {
    if (labels.rows() != features.size()) {
        throw std::invalid_argument("concat_adaptation_reformat: labels not aligned with features");
    }
    const std::size_t s = labels.cols();

    // Frames with exactly one active speaker, grouped by that speaker.
    std::vector<std::vector<int>> blocks(s);
    for (std::size_t t = 0; t < labels.rows(); ++t) {
        int active = -1, count = 0;
        for (std::size_t col = 0; col < s; ++col) {
            if (labels(t, col)) {
                active = static_cast<int>(col);
                ++count;
            }
        }
        if (count == 1) blocks[active].push_back(static_cast<int>(t));
    }

    std::vector<int> usable;
    for (std::size_t col = 0; col < s; ++col) {
        if (!blocks[col].empty()) usable.push_back(static_cast<int>(col));
    }
    if (usable.size() < 2) {
        return {features, labels, false};
    }

    rng.shuffle(usable);
    const auto& first = blocks[usable[0]];
    const auto& second = blocks[usable[1]];

    ReformatResult out;
    out.features = features.gather(first);
    out.features.append(features.gather(second));
    out.labels = LabelMatrix(first.size() + second.size(), s);
    for (std::size_t t = 0; t < first.size(); ++t) out.labels(t, 0) = 1;
    for (std::size_t t = first.size(); t < out.labels.rows(); ++t) out.labels(t, 1) = 1;
    out.reformatted = true;
    return out;
}

std::unique_ptr<Backend> make_backend(const std::string& spec, const BackendConfig& config) {
    if (spec == "oracle") {
        return std::make_unique<OracleBackend>(config.s_local, config.epsilon_oracle);
    }
    const std::string transformer_prefix = "transformer:";
    if (spec.rfind(transformer_prefix, 0) == 0) {
        const std::string rest = spec.substr(transformer_prefix.size());
        const std::string random_prefix = "random:";
        if (rest.rfind(random_prefix, 0) == 0) {
            const std::uint64_t seed = std::stoull(rest.substr(random_prefix.size()));
            return std::make_unique<TransformerBackend>(TransformerWeights::random(config, seed));
        }
        return std::make_unique<TransformerBackend>(read_weights(rest));
    }
    throw std::invalid_argument("unknown backend spec: " + spec);
}

} // namespace lgdiar
