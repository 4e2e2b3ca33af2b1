#pragma once

#include <vector>

#include "lgdiar/backend.hpp"

namespace lgdiar {

// One speaker slot detected inside one window, with its frame sets.
// Frame indices are window-local and strictly increasing.
struct LocalSpeaker {
    int window_index = 0;
    int slot = 0;
    std::vector<int> active_frames;
    std::vector<int> nonoverlap_frames;
    bool used_overlap_fallback = false;
};

// A maximal run of activity for one slot, in absolute seconds.
struct SlotSegment {
    int slot = 0;
    double start_s = 0.0;
    double end_s = 0.0;
};

// Threshold posteriors (active iff p >= threshold) and smooth each slot
// with a 1-D median filter of odd length, replicating edge values.
LabelMatrix binarize_and_filter(const PosteriorMatrix& posteriors, float threshold, int median_len);

// One LocalSpeaker per slot with at least one active frame. A frame is
// non-overlapping when no other slot is active there; slots left with fewer
// than min_nonoverlap such frames fall back to their full active set.
std::vector<LocalSpeaker> detect_local_speakers(const LabelMatrix& labels, int window_index,
                                                int min_nonoverlap);

// Turn each slot's activity runs into time segments. Frame t covers
// [t, t+1) frame periods offset by the window start.
std::vector<SlotSegment> segments_from_labels(const LabelMatrix& labels, double window_start_s,
                                              double frame_period_s);

} // namespace lgdiar
