#pragma once

#include <compare>
#include <cstdint>
#include <vector>

#include "lgdiar/mat.hpp"

namespace lgdiar {

// Identity of one local speaker: which window it was detected in, which slot.
struct SpeakerKey {
    int window = 0;
    int slot = 0;
    auto operator<=>(const SpeakerKey&) const = default;
};

// Symmetric pairwise-speaker similarity matrix. Diagonal is 1; two speakers
// from the same window are hard-zero (cannot-link); everything else is the
// cosine similarity of their mean posteriors.
struct AffinityMatrix {
    Mat<double> entries;
    std::vector<SpeakerKey> index_map;

    std::size_t dim() const { return entries.rows(); }
    void validate() const;
};

struct EigResult {
    std::vector<double> values; // ascending
    Mat<double> vectors;        // column j is the eigenvector of values[j]
};

// Cyclic Jacobi rotations. Input must be symmetric within 1e-9; results
// satisfy ||A v - lambda v|| <= 1e-8 ||A|| with orthonormal vectors.
EigResult symmetric_eig(const Mat<double>& matrix);

// Max-eigengap count over ascending Laplacian eigenvalues: the i in
// [1, min(k_max, n-1)] maximizing values[i] - values[i-1], ties going to
// the larger i so a clamped search window keeps its clamped answer.
int estimate_num_clusters(const std::vector<double>& eigenvalues, int k_max);

// Speaker-count mode: fixed M (oracle) or eigengap estimate capped at k_max.
struct SpeakerCount {
    bool is_oracle = false;
    int value = 10;

    static SpeakerCount autodetect(int k_max = 10) { return {false, k_max}; }
    static SpeakerCount oracle(int m) { return {true, m}; }
};

struct ClusterAssignment {
    std::vector<int> labels; // per index_map entry, ids relabeled by first occurrence
    int num_clusters = 0;
};

// Lloyd iterations with k-means++ seeding, 10 restarts, at most 100
// iterations each, squared-Euclidean objective. Deterministic given seed.
std::vector<int> kmeans(const Mat<double>& points, int k, std::uint64_t seed);

// Spectral clustering on the symmetric normalized Laplacian
// L = I - D^{-1/2} S D^{-1/2} with a 1e-8 degree guard. Speakers embed as
// rows of the M bottom eigenvectors, row-normalized, then k-means.
ClusterAssignment spectral_cluster(const AffinityMatrix& affinity, const SpeakerCount& count);

} // namespace lgdiar
