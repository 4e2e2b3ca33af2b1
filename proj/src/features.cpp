#include "lgdiar/features.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lgdiar {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place radix-2 Cooley-Tukey FFT. Sizes here are tiny (256 for the
// default 25 ms window at 8 kHz), so no real-input optimization is needed.
void fft_inplace(std::vector<std::complex<double>>& x) {
    const std::size_t n = x.size();
    if (n <= 1) return;
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = x[i + j];
                const std::complex<double> v = x[i + j + len / 2] * w;
                x[i + j] = u + v;
                x[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Triangular mel filterbank, HTK mel scale, spanning 0 Hz to Nyquist.
// Returns n_mels rows of (n_fft/2 + 1) weights.
MatD mel_filterbank(const FrontendConfig& cfg, std::size_t n_fft) {
    const std::size_t n_bins = n_fft / 2 + 1;
    const double nyquist = cfg.sample_rate_hz / 2.0;
    const double mel_max = hz_to_mel(nyquist);
    std::vector<double> edges(cfg.n_mels + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
        edges[i] = mel_to_hz(mel_max * i / (cfg.n_mels + 1));
    }
    MatD fb(cfg.n_mels, n_bins);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (std::size_t k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * cfg.sample_rate_hz / static_cast<double>(n_fft);
            if (f > left && f < center) {
                fb(m, k) = (f - left) / (center - left);
            } else if (f >= center && f < right) {
                fb(m, k) = (right - f) / (right - center);
            }
        }
    }
    return fb;
}

} // namespace

FeatureSequence FeatureSequence::gather(const std::vector<int>& indices) const {
    FeatureSequence out;
    out.frames = MatF(indices.size(), dim());
    out.frame_period_s = frame_period_s;
    out.start_time_s = start_time_s;
    if (hidden_identities) out.hidden_identities = IdentityTrack(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        if (src < 0 || static_cast<std::size_t>(src) >= size()) {
            throw std::out_of_range("gather: frame index out of range");
        }
        auto dst = out.frames.row(i);
        auto row = frames.row(src);
        std::copy(row.begin(), row.end(), dst.begin());
        if (hidden_identities) (*out.hidden_identities)[i] = (*hidden_identities)[src];
    }
    return out;
}

void FeatureSequence::append(const FeatureSequence& other) {
    if (empty()) {
        *this = other;
        return;
    }
    if (other.dim() != dim()) throw std::invalid_argument("append: feature dimension mismatch");
    MatF merged(size() + other.size(), dim());
    std::memcpy(merged.data(), frames.data(), size() * dim() * sizeof(float));
    std::memcpy(merged.data() + size() * dim(), other.frames.data(),
                other.size() * other.dim() * sizeof(float));
    if (hidden_identities && other.hidden_identities) {
        hidden_identities->insert(hidden_identities->end(), other.hidden_identities->begin(),
                                  other.hidden_identities->end());
    } else {
        hidden_identities.reset();
    }
    frames = std::move(merged);
}

void FeatureSequence::validate() const {
    if (frame_period_s <= 0.0) throw std::invalid_argument("frame_period_s must be > 0");
    if (start_time_s < 0.0) throw std::invalid_argument("start_time_s must be >= 0");
    if (hidden_identities && hidden_identities->size() != size()) {
        throw std::invalid_argument("hidden_identities must have one entry per frame");
    }
}

FeatureSequence compute_logmel(const std::vector<float>& samples, const FrontendConfig& config) {
    const std::size_t win = static_cast<std::size_t>(std::lround(config.fft_window_s * config.sample_rate_hz));
    const std::size_t hop = static_cast<std::size_t>(std::lround(config.fft_hop_s * config.sample_rate_hz));
    if (win == 0 || hop == 0 || hop > win) throw std::invalid_argument("bad frontend window/hop");
    if (samples.size() < win) {
        throw std::invalid_argument("audio shorter than one analysis window");
    }
    const std::size_t n_frames = (samples.size() - win) / hop + 1;
    const std::size_t n_fft = next_pow2(win);
    const std::size_t n_bins = n_fft / 2 + 1;

    std::vector<double> window(win);
    for (std::size_t n = 0; n < win; ++n) {
        window[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / static_cast<double>(win - 1));
    }
    const MatD fb = mel_filterbank(config, n_fft);

    FeatureSequence out;
    out.frames = MatF(n_frames, config.n_mels);
    out.frame_period_s = config.fft_hop_s;

    std::vector<std::complex<double>> buf(n_fft);
    std::vector<double> power(n_bins);
    for (std::size_t t = 0; t < n_frames; ++t) {
        for (std::size_t n = 0; n < n_fft; ++n) {
            buf[n] = (n < win) ? std::complex<double>(samples[t * hop + n] * window[n], 0.0)
                               : std::complex<double>(0.0, 0.0);
        }
        fft_inplace(buf);
        for (std::size_t k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
        for (int m = 0; m < config.n_mels; ++m) {
            double energy = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k) energy += fb(m, k) * power[k];
            out.frames(t, m) = static_cast<float>(std::log(std::max(energy, config.log_floor)));
        }
    }
    return out;
}

FeatureSequence subsample(const FeatureSequence& features, int factor) {
    if (factor < 1) throw std::invalid_argument("subsample factor must be >= 1");
    if (factor == 1) return features;
    std::vector<int> keep;
    for (std::size_t t = 0; t < features.size(); t += factor) keep.push_back(static_cast<int>(t));
    FeatureSequence out = features.gather(keep);
    out.frame_period_s = features.frame_period_s * factor;
    return out;
}

std::vector<Window> split_windows(const FeatureSequence& features, int window_frames) {
    if (window_frames < 1) throw std::invalid_argument("window_frames must be >= 1");
    std::vector<Window> windows;
    const std::size_t total = features.size();
    for (std::size_t begin = 0, i = 0; begin < total; begin += window_frames, ++i) {
        const std::size_t end = std::min(begin + window_frames, total);
        std::vector<int> idx(end - begin);
        for (std::size_t t = begin; t < end; ++t) idx[t - begin] = static_cast<int>(t);
        Window w;
        w.index = static_cast<int>(i);
        w.features = features.gather(idx);
        w.features.start_time_s = features.start_time_s + static_cast<double>(begin) * features.frame_period_s;
        windows.push_back(std::move(w));
    }
    return windows;
}

std::vector<double> mel_center_frequencies(const FrontendConfig& config) {
    const double mel_max = hz_to_mel(config.sample_rate_hz / 2.0);
    std::vector<double> centers(config.n_mels);
    for (int m = 0; m < config.n_mels; ++m) {
        centers[m] = mel_to_hz(mel_max * (m + 1) / (config.n_mels + 1));
    }
    return centers;
}

void write_features(const std::string& path, const FeatureSequence& features) {
    features.validate();
    std::ofstream raw(path, std::ios::binary);
    if (!raw) throw std::runtime_error("cannot open for writing: " + path);
    raw.write(reinterpret_cast<const char*>(features.frames.data()),
              static_cast<std::streamsize>(features.size() * features.dim() * sizeof(float)));
    if (!raw) throw std::runtime_error("short write: " + path);

    nlohmann::json header = {
        {"frames", features.size()},
        {"dim", features.dim()},
        {"frame_period_s", features.frame_period_s},
        {"start_time_s", features.start_time_s},
    };
    std::ofstream side(path + ".json");
    if (!side) throw std::runtime_error("cannot open for writing: " + path + ".json");
    side << header.dump(2) << "\n";
}

FeatureSequence read_features(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw std::runtime_error("missing feature header: " + path + ".json");
    nlohmann::json header = nlohmann::json::parse(side);
    const std::size_t frames = header.at("frames").get<std::size_t>();
    const std::size_t dim = header.at("dim").get<std::size_t>();

    FeatureSequence out;
    out.frames = MatF(frames, dim);
    out.frame_period_s = header.at("frame_period_s").get<double>();
    out.start_time_s = header.at("start_time_s").get<double>();

    std::ifstream raw(path, std::ios::binary);
    if (!raw) throw std::runtime_error("missing feature data: " + path);
    raw.read(reinterpret_cast<char*>(out.frames.data()),
             static_cast<std::streamsize>(frames * dim * sizeof(float)));
    if (static_cast<std::size_t>(raw.gcount()) != frames * dim * sizeof(float)) {
        throw std::runtime_error("feature data truncated: " + path);
    }
    out.validate();
    return out;
}

namespace {

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16)
         | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

} // namespace

std::vector<float> read_wav(const std::string& path, int* sample_rate_hz) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open wav: " + path);

    char tag[4];
    in.read(tag, 4);
    if (std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("not a RIFF file: " + path);
    read_u32(in); // riff size
    in.read(tag, 4);
    if (std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("not a WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::vector<float> samples;
    bool got_fmt = false, got_data = false;
    while (in.read(tag, 4)) {
        const std::uint32_t chunk_size = read_u32(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            format = read_u16(in);
            channels = read_u16(in);
            rate = read_u32(in);
            read_u32(in); // byte rate
            read_u16(in); // block align
            bits = read_u16(in);
            if (chunk_size > 16) in.ignore(chunk_size - 16);
            got_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!got_fmt) throw std::runtime_error("wav data before fmt: " + path);
            if (format != 1 || bits != 16) throw std::runtime_error("only PCM16 wav supported: " + path);
            if (channels != 1) throw std::runtime_error("only mono wav supported: " + path);
            const std::size_t n = chunk_size / 2;
            samples.resize(n);
            std::vector<std::int16_t> pcm(n);
            in.read(reinterpret_cast<char*>(pcm.data()), static_cast<std::streamsize>(chunk_size));
            if (static_cast<std::uint32_t>(in.gcount()) != chunk_size) {
                throw std::runtime_error("wav data truncated: " + path);
            }
            for (std::size_t i = 0; i < n; ++i) samples[i] = pcm[i] / 32768.0f;
            got_data = true;
            break;
        } else {
            in.ignore(chunk_size + (chunk_size & 1));
        }
    }
    if (!got_data) throw std::runtime_error("wav has no data chunk: " + path);
    if (sample_rate_hz) *sample_rate_hz = static_cast<int>(rate);
    return samples;
}

} // namespace lgdiar
