#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lgdiar/features.hpp"
#include "lgdiar/scoring.hpp"

namespace lgdiar {

struct SimConfig {
    int n_speakers = 2;
    double duration_s = 300.0;
    double beta_s = 0.0; // mean pause; 0 picks the default for n_speakers
    double utt_min_s = 1.0;
    double utt_max_s = 5.0;
    double signature_noise = 0.3;
    int feat_dim = 23;
    double frame_period_s = 0.1;
    std::uint64_t seed = 0;

    double resolved_beta() const; // 2 s up to two speakers, 9 s beyond
    void validate() const;
};

// A synthetic conversation: ground-truth segments, a feature sequence with
// hidden per-frame identities, and the per-speaker signature vectors the
// features were built from.
struct Scenario {
    Annotation reference;
    FeatureSequence features;
    MatF speaker_signatures; // n_speakers x feat_dim

    std::vector<std::string> speaker_names() const;
};

// Speakers evolve independently as alternating Exponential(beta) pauses and
// Uniform[utt_min, utt_max] utterances; overlap arises naturally. Each frame
// is the mean of the active speakers' signatures plus Gaussian noise
// (silence is noise around zero). Segment times snap to milliseconds so the
// reference round-trips through RTTM exactly. Deterministic given the seed.
Scenario generate_scenario(const SimConfig& config);

// Pipeline-side view of a scenario. The oracle path keeps the hidden
// identities; the transformer path drops them.
std::pair<FeatureSequence, Annotation> scenario_to_inputs(const Scenario& scenario,
                                                          bool keep_identities);

// Per-frame identity sets reconstructed from reference segments by the
// frame-midpoint rule, in integer milliseconds so boundary frames are exact.
IdentityTrack identities_from_reference(const Annotation& reference,
                                        const std::vector<std::string>& speaker_names,
                                        std::size_t n_frames, double frame_period_s);

// Directory layout: features.f32 (+ .json sidecar), ref.rttm, scenario.json.
void save_scenario(const std::string& dir, const Scenario& scenario, const SimConfig& config);
Scenario load_scenario(const std::string& dir);
SimConfig load_scenario_config(const std::string& dir);

} // namespace lgdiar
