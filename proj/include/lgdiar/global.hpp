#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgdiar/backend.hpp"
#include "lgdiar/clustering.hpp"
#include "lgdiar/local.hpp"

namespace lgdiar {

// How a speaker's frames are thinned before entering a pair chunk.
struct FrameSelectStrategy {
    enum class Kind { kAll, kFirstN, kSubsample, kRandomN };
    Kind kind = Kind::kAll;
    int n = 0;              // FirstN, RandomN
    int factor = 1;         // Subsample
    std::uint64_t seed = 0; // RandomN

    // "all" | "first:N" | "sub:F" | "random:N" | "random:N:SEED"
    static FrameSelectStrategy parse(const std::string& text);
    std::string format() const;
};

// Apply the strategy to an ordered frame-index list. RandomN draws without
// replacement from an rng keyed by the strategy seed and the list content,
// so the result depends only on (input, strategy), never on call order;
// selected indices are re-sorted ascending to keep temporal order.
std::vector<int> select_frames(const std::vector<int>& frames, const FrameSelectStrategy& strategy);

// Concatenation of one speaker's selected frames from window j with
// another's from window k (j < k), left block first.
struct PairChunk {
    SpeakerKey left;
    SpeakerKey right;
    FeatureSequence features;
    std::size_t boundary_m = 0;   // frame count of the left block
    std::size_t right_count_n = 0;
};

struct PairScore {
    SpeakerKey left;
    SpeakerKey right;
    double similarity = 0.0;
};

// One chunk per unordered cross-window speaker pair, window-major order.
// Frames come from each speaker's nonoverlap set (or fallback set).
std::vector<PairChunk> build_pair_chunks(const std::vector<Window>& windows,
                                         const std::vector<std::vector<LocalSpeaker>>& speakers,
                                         const FrameSelectStrategy& strategy);

// Cosine similarity of the mean posterior over rows [0, M) vs [M, end).
// A zero-norm mean on either side scores 0.
double score_pair(const PosteriorMatrix& posteriors, std::size_t boundary_m);

// Score every chunk through the backend, batch_size chunks at a time with a
// worker pool per batch. Output is sorted by pair key and is identical for
// every batch size; backend errors carry the offending pair.
std::vector<PairScore> run_global(const Backend& backend, const std::vector<PairChunk>& chunks,
                                  int batch_size);

// Affinity with diagonal 1, cannot-link zeros between same-window speakers,
// and symmetric cosine entries elsewhere. index_map is window-major.
AffinityMatrix assemble_affinity(const std::vector<PairScore>& scores,
                                 const std::vector<std::vector<LocalSpeaker>>& speakers);

} // namespace lgdiar
