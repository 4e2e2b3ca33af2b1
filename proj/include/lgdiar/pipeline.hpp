#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lgdiar/backend.hpp"
#include "lgdiar/global.hpp"
#include "lgdiar/scoring.hpp"
#include "lgdiar/simulate.hpp"

namespace lgdiar {

struct PipelineConfig {
    int window_frames = 300;
    float threshold = 0.5f;
    int median_len = 11;
    int min_nonoverlap = 10;
    FrameSelectStrategy frame_strategy; // default All
    int batch_size = 500;
    SpeakerCount speakers = SpeakerCount::autodetect(10);
    std::string backend_spec = "oracle";
    BackendConfig backend;
    std::uint64_t seed = 0;
    std::string recording_id = "rec0";

    void validate() const;
};

// Per-run facts the benchmark harness and tests read off instead of
// re-instrumenting the pipeline.
struct Diagnostics {
    int num_windows = 0;
    std::vector<int> speakers_per_window;
    std::size_t num_chunks = 0; // C
    int s_global = 0;
    int num_clusters = 0; // M
    bool global_skipped = false;
    double local_s = 0.0;
    double global_s = 0.0;
    double cluster_s = 0.0;
};

struct DiarizeResult {
    Annotation annotation;
    Diagnostics diagnostics;
};

// The full local-global pipeline: windows, local EEND with binarize +
// median filter, pairwise-speaker rescoring into the affinity matrix,
// spectral clustering, then relabeling of every local segment by its
// cluster. A run with one window or at most one local speaker skips the
// global step and emits the local segments directly.
DiarizeResult diarize(const FeatureSequence& features, const PipelineConfig& config,
                      const Backend& backend);

struct RtfReport {
    double wall_s = 0.0;
    double rtf = 0.0;
};

// Wall-clocks run_fn and divides by the audio duration.
RtfReport measure_rtf(const std::function<void()>& run_fn, double audio_duration_s);

struct BenchRow {
    std::string strategy;
    int batch_size = 0;
    double rtf = 0.0;
    double der = 0.0;
};

// One row per config: RTF over all scenarios (total wall / total audio) and
// the aggregate DER (total error time / total scored time) against the
// scenario references. An empty scenario list yields no rows.
std::vector<BenchRow> bench_sweep(const std::vector<PipelineConfig>& configs,
                                  const std::vector<Scenario>& scenarios);

// CSV with the fixed header strategy,batch_size,rtf,der.
std::string bench_csv(const std::vector<BenchRow>& rows);

} // namespace lgdiar
