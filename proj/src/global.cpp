#include "lgdiar/global.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "lgdiar/rng.hpp"

namespace lgdiar {

FrameSelectStrategy FrameSelectStrategy::parse(const std::string& text) {
    FrameSelectStrategy s;
    if (text == "all") {
        s.kind = Kind::kAll;
        return s;
    }
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    try {
        if (colon != std::string::npos) {
            std::string rest = text.substr(colon + 1);
            const auto colon2 = rest.find(':');
            if (head == "first" && colon2 == std::string::npos) {
                s.kind = Kind::kFirstN;
                s.n = std::stoi(rest);
                if (s.n >= 1) return s;
            } else if (head == "sub" && colon2 == std::string::npos) {
                s.kind = Kind::kSubsample;
                s.factor = std::stoi(rest);
                if (s.factor >= 1) return s;
            } else if (head == "random") {
                s.kind = Kind::kRandomN;
                s.n = std::stoi(rest.substr(0, colon2));
                if (colon2 != std::string::npos) s.seed = std::stoull(rest.substr(colon2 + 1));
                if (s.n >= 1) return s;
            }
        }
    } catch (const std::logic_error&) {
        // fall through to the error below
    }
    throw std::invalid_argument("bad frame-select strategy: " + text +
                                " (expected all | first:N | sub:F | random:N[:seed])");
}

std::string FrameSelectStrategy::format() const {
    switch (kind) {
    case Kind::kAll: return "all";
    case Kind::kFirstN: return "first:" + std::to_string(n);
    case Kind::kSubsample: return "sub:" + std::to_string(factor);
    case Kind::kRandomN: return "random:" + std::to_string(n);
    }
    return "all";
}

std::vector<int> select_frames(const std::vector<int>& frames, const FrameSelectStrategy& strategy) {
    switch (strategy.kind) {
    case FrameSelectStrategy::Kind::kAll: return frames;
    case FrameSelectStrategy::Kind::kFirstN: {
        const std::size_t keep = std::min<std::size_t>(strategy.n, frames.size());
        return {frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(keep)};
    }
    case FrameSelectStrategy::Kind::kSubsample: {
        std::vector<int> out;
        for (std::size_t i = 0; i < frames.size(); i += strategy.factor) out.push_back(frames[i]);
        return out;
    }
    case FrameSelectStrategy::Kind::kRandomN: {
        // Key the rng on the strategy seed and the list content so the
        // selection is a pure function of its arguments; workers can then
        // run in any order without changing results.
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&h](std::uint64_t x) {
            h ^= x;
            h *= 1099511628211ull;
        };
        mix(strategy.seed);
        mix(frames.size());
        for (int f : frames) mix(static_cast<std::uint64_t>(f) + 0x9e3779b97f4a7c15ull);
        Rng rng(h);

        auto picked = rng.sample_indices(frames.size(), static_cast<std::size_t>(strategy.n));
        std::vector<int> out;
        out.reserve(picked.size());
        for (std::size_t i : picked) out.push_back(frames[i]);
        std::sort(out.begin(), out.end());
        return out;
    }
    }
    return frames;
}

std::vector<PairChunk> build_pair_chunks(const std::vector<Window>& windows,
                                         const std::vector<std::vector<LocalSpeaker>>& speakers,
                                         const FrameSelectStrategy& strategy) {
    if (speakers.size() != windows.size()) {
        throw std::invalid_argument("build_pair_chunks: speakers not grouped per window");
    }
    std::vector<PairChunk> chunks;
    for (std::size_t j = 0; j + 1 < windows.size(); ++j) {
        for (std::size_t k = j + 1; k < windows.size(); ++k) {
            for (const LocalSpeaker& m : speakers[j]) {
                for (const LocalSpeaker& n : speakers[k]) {
                    PairChunk chunk;
                    chunk.left = {m.window_index, m.slot};
                    chunk.right = {n.window_index, n.slot};
                    FeatureSequence left =
                        windows[j].features.gather(select_frames(m.nonoverlap_frames, strategy));
                    FeatureSequence right =
                        windows[k].features.gather(select_frames(n.nonoverlap_frames, strategy));
                    chunk.boundary_m = left.size();
                    chunk.right_count_n = right.size();
                    left.append(right);
                    chunk.features = std::move(left);
                    chunks.push_back(std::move(chunk));
                }
            }
        }
    }
    return chunks;
}

double score_pair(const PosteriorMatrix& posteriors, std::size_t boundary_m) {
    const std::size_t rows = posteriors.rows();
    const std::size_t s = posteriors.cols();
    if (boundary_m < 1 || boundary_m >= rows) {
        throw std::invalid_argument("score_pair: boundary out of range");
    }

    std::vector<double> mean_left(s, 0.0), mean_right(s, 0.0);
    for (std::size_t t = 0; t < boundary_m; ++t) {
        for (std::size_t c = 0; c < s; ++c) mean_left[c] += posteriors(t, c);
    }
    for (std::size_t t = boundary_m; t < rows; ++t) {
        for (std::size_t c = 0; c < s; ++c) mean_right[c] += posteriors(t, c);
    }
    for (std::size_t c = 0; c < s; ++c) {
        mean_left[c] /= static_cast<double>(boundary_m);
        mean_right[c] /= static_cast<double>(rows - boundary_m);
    }

    double dot = 0.0, nl = 0.0, nr = 0.0;
    for (std::size_t c = 0; c < s; ++c) {
        dot += mean_left[c] * mean_right[c];
        nl += mean_left[c] * mean_left[c];
        nr += mean_right[c] * mean_right[c];
    }
    if (nl <= 0.0 || nr <= 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nl) * std::sqrt(nr)), 0.0, 1.0);
}

namespace {

std::string pair_name(const PairChunk& chunk) {
    return "(" + std::to_string(chunk.left.window) + "," + std::to_string(chunk.left.slot) + ")x(" +
           std::to_string(chunk.right.window) + "," + std::to_string(chunk.right.slot) + ")";
}

void score_one(const Backend& backend, const PairChunk& chunk, PairScore& out) {
    try {
        const PosteriorMatrix posteriors = backend.infer(chunk.features);
        out = {chunk.left, chunk.right, score_pair(posteriors, chunk.boundary_m)};
    } catch (const std::exception& e) {
        throw std::runtime_error("global scoring failed for pair " + pair_name(chunk) + ": " +
                                 e.what());
    }
}

} // namespace

std::vector<PairScore> run_global(const Backend& backend, const std::vector<PairChunk>& chunks,
                                  int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("run_global: batch_size must be >= 1");

    std::vector<PairScore> results(chunks.size());
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());

    for (std::size_t begin = 0; begin < chunks.size(); begin += batch_size) {
        const std::size_t end = std::min(chunks.size(), begin + batch_size);
        const std::size_t count = end - begin;
        const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(hw, count));

        if (batch_size == 1 || workers <= 1) {
            for (std::size_t i = begin; i < end; ++i) score_one(backend, chunks[i], results[i]);
            continue;
        }

        // Work queue over the batch: workers pull the next unscored chunk.
        std::atomic<std::size_t> cursor{begin};
        std::mutex error_mutex;
        std::string first_error;
        std::size_t first_error_index = chunks.size();
        auto worker = [&] {
            for (;;) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= end) return;
                try {
                    score_one(backend, chunks[i], results[i]);
                } catch (const std::exception& e) {
                    std::lock_guard lock(error_mutex);
                    if (i < first_error_index) {
                        first_error_index = i;
                        first_error = e.what();
                    }
                }
            }
        };
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (first_error_index < chunks.size()) throw std::runtime_error(first_error);
    }

    std::sort(results.begin(), results.end(), [](const PairScore& a, const PairScore& b) {
        return std::tie(a.left, a.right) < std::tie(b.left, b.right);
    });
    return results;
}

AffinityMatrix assemble_affinity(const std::vector<PairScore>& scores,
                                 const std::vector<std::vector<LocalSpeaker>>& speakers) {
    AffinityMatrix affinity;
    for (const auto& window_speakers : speakers) {
        for (const LocalSpeaker& spk : window_speakers) {
            affinity.index_map.push_back({spk.window_index, spk.slot});
        }
    }
    const std::size_t n = affinity.index_map.size();
    affinity.entries = Mat<double>(n, n);
    for (std::size_t i = 0; i < n; ++i) affinity.entries(i, i) = 1.0;

    std::map<std::pair<SpeakerKey, SpeakerKey>, double> by_pair;
    for (const PairScore& score : scores) {
        SpeakerKey lo = score.left, hi = score.right;
        if (hi < lo) std::swap(lo, hi);
        by_pair[{lo, hi}] = score.similarity;
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (affinity.index_map[i].window == affinity.index_map[j].window) continue;
            const auto it = by_pair.find({affinity.index_map[i], affinity.index_map[j]});
            if (it == by_pair.end()) {
                throw std::invalid_argument("assemble_affinity: missing score for a cross-window pair");
            }
            affinity.entries(i, j) = affinity.entries(j, i) = it->second;
        }
    }
    return affinity;
}

} // namespace lgdiar
