#include "lgdiar/local.hpp"

#include <algorithm>
#include <stdexcept>

namespace lgdiar {

LabelMatrix binarize_and_filter(const PosteriorMatrix& posteriors, float threshold, int median_len) {
    if (!(threshold > 0.0f && threshold < 1.0f)) {
        throw std::invalid_argument("threshold must be in (0, 1)");
    }
    if (median_len < 1 || median_len % 2 == 0) {
        throw std::invalid_argument("median_len must be odd and >= 1");
    }

    const std::size_t t_len = posteriors.rows();
    const std::size_t s = posteriors.cols();
    LabelMatrix binary(t_len, s);
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t col = 0; col < s; ++col) {
            binary(t, col) = posteriors(t, col) >= threshold ? 1 : 0;
        }
    }
    if (median_len == 1 || t_len == 0) return binary;

    // Median of a 0/1 window is its majority vote; edges replicate by
    // clamping the window indices.
    const int half = median_len / 2;
    const int majority = half + 1;
    LabelMatrix filtered(t_len, s);
    for (std::size_t col = 0; col < s; ++col) {
        for (std::size_t t = 0; t < t_len; ++t) {
            int ones = 0;
            for (int d = -half; d <= half; ++d) {
                const auto idx = std::clamp<long>(static_cast<long>(t) + d, 0,
                                                  static_cast<long>(t_len) - 1);
                ones += binary(static_cast<std::size_t>(idx), col);
            }
            filtered(t, col) = ones >= majority ? 1 : 0;
        }
    }
    return filtered;
}

std::vector<LocalSpeaker> detect_local_speakers(const LabelMatrix& labels, int window_index,
                                                int min_nonoverlap) {
    const std::size_t t_len = labels.rows();
    const std::size_t s = labels.cols();

    std::vector<int> active_slots(t_len, 0);
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t col = 0; col < s; ++col) active_slots[t] += labels(t, col);
    }

    std::vector<LocalSpeaker> speakers;
    for (std::size_t col = 0; col < s; ++col) {
        LocalSpeaker spk;
        spk.window_index = window_index;
        spk.slot = static_cast<int>(col);
        for (std::size_t t = 0; t < t_len; ++t) {
            if (!labels(t, col)) continue;
            spk.active_frames.push_back(static_cast<int>(t));
            if (active_slots[t] == 1) spk.nonoverlap_frames.push_back(static_cast<int>(t));
        }
        if (spk.active_frames.empty()) continue;
        if (static_cast<int>(spk.nonoverlap_frames.size()) < min_nonoverlap) {
            spk.nonoverlap_frames = spk.active_frames;
            spk.used_overlap_fallback = true;
        }
        speakers.push_back(std::move(spk));
    }
    return speakers;
}

std::vector<SlotSegment> segments_from_labels(const LabelMatrix& labels, double window_start_s,
                                              double frame_period_s) {
    std::vector<SlotSegment> segments;
    const std::size_t t_len = labels.rows();
    for (std::size_t col = 0; col < labels.cols(); ++col) {
        std::size_t t = 0;
        while (t < t_len) {
            if (!labels(t, col)) {
                ++t;
                continue;
            }
            std::size_t end = t + 1;
            while (end < t_len && labels(end, col)) ++end;
            segments.push_back({static_cast<int>(col),
                                window_start_s + static_cast<double>(t) * frame_period_s,
                                window_start_s + static_cast<double>(end) * frame_period_s});
            t = end;
        }
    }
    return segments;
}

} // namespace lgdiar
