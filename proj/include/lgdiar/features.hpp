#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lgdiar/mat.hpp"

namespace lgdiar {

/// Per-frame set of ground-truth speaker ids. Attached by the simulator so
/// the oracle backend can produce ideal posteriors; the real inference path
/// never reads it.
using IdentityTrack = std::vector<std::vector<int>>;

/// Time-major sequence of acoustic feature frames at a fixed frame period.
struct FeatureSequence {
    MatF frames;                             // T x F
    double frame_period_s = 0.01;
    double start_time_s = 0.0;
    std::optional<IdentityTrack> hidden_identities; // one entry per frame when present

    std::size_t size() const { return frames.rows(); }
    std::size_t dim() const { return frames.cols(); }
    bool empty() const { return frames.rows() == 0; }
    double duration_s() const { return static_cast<double>(size()) * frame_period_s; }

    /// New sequence holding the given frame rows (in the given order),
    /// identities carried along when present.
    FeatureSequence gather(const std::vector<int>& indices) const;

    /// Appends all frames of `other`; frame periods must match.
    void append(const FeatureSequence& other);

    void validate() const; // throws on violated invariants
};

struct FrontendConfig {
    int sample_rate_hz = 8000;
    double fft_window_s = 0.025;
    double fft_hop_s = 0.010;
    int n_mels = 23;
    double log_floor = 1e-10;
    int subsample_factor = 10;
};

/// Fixed-length slice of a recording's feature sequence.
struct Window {
    int index = 0;
    FeatureSequence features;
    std::size_t length_frames() const { return features.size(); }
};

/// Log-Mel filterbank features from mono PCM samples in [-1, 1].
/// Frames of fft_window_s every fft_hop_s, Hamming window, triangular
/// HTK-mel filters from 0 Hz to Nyquist, log with a floor guard.
/// Throws if the input is shorter than one analysis window.
FeatureSequence compute_logmel(const std::vector<float>& samples, const FrontendConfig& config);

/// Plain decimation: keeps frames 0, factor, 2*factor, ...
FeatureSequence subsample(const FeatureSequence& features, int factor);

/// Tiles the sequence into ceil(len/T) windows; only the last may be short.
std::vector<Window> split_windows(const FeatureSequence& features, int window_frames);

/// Mel filter center frequencies (Hz) for the given config, one per filter.
std::vector<double> mel_center_frequencies(const FrontendConfig& config);

// --- serialization ----------------------------------------------------------

/// Raw little-endian float32 rows at `path`, JSON header at `path + ".json"`.
void write_features(const std::string& path, const FeatureSequence& features);
FeatureSequence read_features(const std::string& path);

/// 16-bit PCM mono WAV. Returns samples scaled to [-1, 1) and the file's
/// sample rate. Throws on anything but PCM16 mono.
std::vector<float> read_wav(const std::string& path, int* sample_rate_hz);

} // namespace lgdiar
