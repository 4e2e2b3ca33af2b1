#include "lgdiar/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "lgdiar/clustering.hpp"
#include "lgdiar/local.hpp"

namespace lgdiar {

void PipelineConfig::validate() const {
    if (window_frames < 1) throw std::invalid_argument("window_frames must be >= 1");
    if (!(threshold > 0.0f && threshold < 1.0f)) throw std::invalid_argument("threshold in (0,1)");
    if (median_len < 1 || median_len % 2 == 0) throw std::invalid_argument("median_len odd >= 1");
    if (min_nonoverlap < 0) throw std::invalid_argument("min_nonoverlap must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (speakers.value < 1) throw std::invalid_argument("speaker count must be >= 1");
    backend.validate();
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string(stage) + ": " + e.what());
    }
}

} // namespace

DiarizeResult diarize(const FeatureSequence& features, const PipelineConfig& config,
                      const Backend& backend) {
    config.validate();
    features.validate();

    DiarizeResult result;
    result.annotation.recording_id = config.recording_id;
    if (features.empty()) return result;

    // Local step: per-window posteriors, binarization, speaker detection.
    const auto local_start = std::chrono::steady_clock::now();
    const std::vector<Window> windows = split_windows(features, config.window_frames);
    std::vector<std::vector<LocalSpeaker>> speakers(windows.size());
    std::vector<std::vector<SlotSegment>> segments(windows.size());
    run_stage("local step", [&] {
        for (std::size_t w = 0; w < windows.size(); ++w) {
            const PosteriorMatrix posteriors = backend.infer(windows[w].features);
            const LabelMatrix labels =
                binarize_and_filter(posteriors, config.threshold, config.median_len);
            speakers[w] =
                detect_local_speakers(labels, static_cast<int>(w), config.min_nonoverlap);
            segments[w] = segments_from_labels(labels, windows[w].features.start_time_s,
                                               features.frame_period_s);
        }
        return 0;
    });
    result.diagnostics.num_windows = static_cast<int>(windows.size());
    int s_global = 0;
    for (const auto& window_speakers : speakers) {
        result.diagnostics.speakers_per_window.push_back(static_cast<int>(window_speakers.size()));
        s_global += static_cast<int>(window_speakers.size());
    }
    result.diagnostics.s_global = s_global;
    result.diagnostics.local_s = seconds_since(local_start);

    // Cluster id per (window, slot). With one window or at most one speaker
    // the local labels are already globally consistent.
    std::map<SpeakerKey, int> cluster_of;
    if (windows.size() <= 1 || s_global <= 1) {
        result.diagnostics.global_skipped = true;
        int next = 0;
        for (const auto& window_speakers : speakers) {
            for (const LocalSpeaker& spk : window_speakers) {
                cluster_of[{spk.window_index, spk.slot}] = next++;
            }
        }
        result.diagnostics.num_clusters = next;
    } else {
        const auto global_start = std::chrono::steady_clock::now();
        const AffinityMatrix affinity = run_stage("global step", [&] {
            const auto chunks = build_pair_chunks(windows, speakers, config.frame_strategy);
            result.diagnostics.num_chunks = chunks.size();
            const auto scores = run_global(backend, chunks, config.batch_size);
            return assemble_affinity(scores, speakers);
        });
        result.diagnostics.global_s = seconds_since(global_start);

        const auto cluster_start = std::chrono::steady_clock::now();
        const ClusterAssignment assignment =
            run_stage("clustering", [&] { return spectral_cluster(affinity, config.speakers); });
        result.diagnostics.cluster_s = seconds_since(cluster_start);
        result.diagnostics.num_clusters = assignment.num_clusters;
        for (std::size_t i = 0; i < affinity.index_map.size(); ++i) {
            cluster_of[affinity.index_map[i]] = assignment.labels[i];
        }
    }

    // Relabel local segments by cluster; normalization merges abutting
    // same-cluster segments.
    for (std::size_t w = 0; w < windows.size(); ++w) {
        for (const SlotSegment& seg : segments[w]) {
            const auto it = cluster_of.find({static_cast<int>(w), seg.slot});
            if (it == cluster_of.end()) continue; // slot had no active frames
            result.annotation.segments.push_back(
                {"spk" + std::to_string(it->second), seg.start_s, seg.end_s});
        }
    }
    result.annotation = result.annotation.normalized();
    return result;
}

RtfReport measure_rtf(const std::function<void()>& run_fn, double audio_duration_s) {
    if (!(audio_duration_s > 0.0)) throw std::invalid_argument("audio duration must be positive");
    const auto start = std::chrono::steady_clock::now();
    run_fn();
    RtfReport report;
    report.wall_s = seconds_since(start);
    report.rtf = report.wall_s / audio_duration_s;
    return report;
}

std::vector<BenchRow> bench_sweep(const std::vector<PipelineConfig>& configs,
                                  const std::vector<Scenario>& scenarios) {
    std::vector<BenchRow> rows;
    if (scenarios.empty()) return rows;

    for (const PipelineConfig& config : configs) {
        const auto backend = make_backend(config.backend_spec, config.backend);
        const bool oracle = config.backend_spec == "oracle";

        double total_wall = 0.0, total_audio = 0.0;
        double total_error = 0.0, total_scored = 0.0;
        for (const Scenario& scenario : scenarios) {
            auto [features, reference] = scenario_to_inputs(scenario, oracle);
            Annotation hypothesis;
            const RtfReport rtf = measure_rtf(
                [&] { hypothesis = diarize(features, config, *backend).annotation; },
                features.duration_s());
            total_wall += rtf.wall_s;
            total_audio += features.duration_s();

            const DerReport der = compute_der(reference, hypothesis);
            total_error += der.miss_s + der.falarm_s + der.confusion_s;
            total_scored += der.scored_speech_s;
        }

        rows.push_back({config.frame_strategy.format(), config.batch_size,
                        total_wall / total_audio, total_error / total_scored});
    }
    return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
    std::string out = "strategy,batch_size,rtf,der\n";
    char line[160];
    for (const BenchRow& row : rows) {
        std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.6f\n", row.strategy.c_str(), row.batch_size,
                      row.rtf, row.der);
        out += line;
    }
    return out;
}

} // namespace lgdiar
