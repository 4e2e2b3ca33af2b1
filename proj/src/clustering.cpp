#include "lgdiar/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lgdiar/rng.hpp"

namespace lgdiar {

void AffinityMatrix::validate() const {
    const std::size_t n = entries.rows();
    if (entries.cols() != n) throw std::invalid_argument("affinity must be square");
    if (index_map.size() != n) throw std::invalid_argument("affinity index_map size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (entries(i, i) != 1.0) throw std::invalid_argument("affinity diagonal must be 1");
        for (std::size_t j = 0; j < n; ++j) {
            const double v = entries(i, j);
            if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("affinity entry outside [0,1]");
            if (v != entries(j, i)) throw std::invalid_argument("affinity must be symmetric");
            if (i != j && index_map[i].window == index_map[j].window && v != 0.0) {
                throw std::invalid_argument("same-window affinity must be 0 (cannot-link)");
            }
        }
    }
}

EigResult symmetric_eig(const Mat<double>& matrix) {
    const std::size_t n = matrix.rows();
    if (matrix.cols() != n) throw std::invalid_argument("symmetric_eig: matrix must be square");
    double frob = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(matrix(i, j) - matrix(j, i)) > 1e-9) {
                throw std::invalid_argument("symmetric_eig: matrix is not symmetric");
            }
            frob += matrix(i, j) * matrix(i, j);
        }
    }
    frob = std::sqrt(frob);

    Mat<double> a = matrix;
    Mat<double> v = Mat<double>::identity(n);
    const double tol = 1e-12 * std::max(1.0, frob);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
        }
        if (std::sqrt(off) < tol) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                const double app = a(p, p), aqq = a(q, q);
                a(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                a(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = a(p, i) = c * aip - s * aiq;
                    a(i, q) = a(q, i) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EigResult result;
    result.values.resize(n);
    result.vectors = Mat<double>(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        result.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) result.vectors(i, j) = v(i, order[j]);
    }
    return result;
}

int estimate_num_clusters(const std::vector<double>& eigenvalues, int k_max) {
    if (eigenvalues.empty()) throw std::invalid_argument("estimate_num_clusters: no eigenvalues");
    if (k_max < 1) throw std::invalid_argument("estimate_num_clusters: k_max must be >= 1");
    const int n = static_cast<int>(eigenvalues.size());
    if (n == 1) return 1;

    const int hi = std::min(k_max, n - 1);
    int best = 1;
    double best_gap = -std::numeric_limits<double>::infinity();
    for (int i = 1; i <= hi; ++i) {
        const double gap = eigenvalues[i] - eigenvalues[i - 1];
        if (gap >= best_gap) { // ties favor the larger count
            best_gap = gap;
            best = i;
        }
    }
    return best;
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        sum += diff * diff;
    }
    return sum;
}

} // namespace

std::vector<int> kmeans(const Mat<double>& points, int k, std::uint64_t seed) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
    if (static_cast<std::size_t>(k) > n) throw std::invalid_argument("kmeans: k exceeds point count");

    constexpr int kRestarts = 10;
    constexpr int kMaxIters = 100;
    Rng rng(seed);

    std::vector<int> best_labels(n, 0);
    double best_objective = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart < kRestarts; ++restart) {
        // k-means++ seeding: subsequent centers drawn proportionally to the
        // squared distance from the nearest already-chosen center.
        Mat<double> centroids(k, d);
        std::vector<double> dist2(n);
        {
            const std::size_t first = rng.uniform_int(n);
            std::copy_n(&points(first, 0), d, &centroids(0, 0));
            for (std::size_t i = 0; i < n; ++i) dist2[i] = sq_dist(&points(i, 0), &centroids(0, 0), d);
            for (int c = 1; c < k; ++c) {
                const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
                std::size_t pick = 0;
                if (total > 0.0) {
                    double r = rng.uniform() * total;
                    for (pick = 0; pick + 1 < n; ++pick) {
                        r -= dist2[pick];
                        if (r <= 0.0) break;
                    }
                } else {
                    pick = rng.uniform_int(n);
                }
                std::copy_n(&points(pick, 0), d, &centroids(c, 0));
                for (std::size_t i = 0; i < n; ++i) {
                    dist2[i] = std::min(dist2[i], sq_dist(&points(i, 0), &centroids(c, 0), d));
                }
            }
        }

        std::vector<int> labels(n, -1);
        for (int iter = 0; iter < kMaxIters; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                int nearest = 0;
                double nearest_d = sq_dist(&points(i, 0), &centroids(0, 0), d);
                for (int c = 1; c < k; ++c) {
                    const double dd = sq_dist(&points(i, 0), &centroids(c, 0), d);
                    if (dd < nearest_d) {
                        nearest_d = dd;
                        nearest = c;
                    }
                }
                if (labels[i] != nearest) {
                    labels[i] = nearest;
                    changed = true;
                }
            }
            if (!changed) break;

            Mat<double> sums(k, d);
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                ++counts[labels[i]];
                for (std::size_t j = 0; j < d; ++j) sums(labels[i], j) += points(i, j);
            }
            for (int c = 0; c < k; ++c) {
                if (counts[c] > 0) {
                    for (std::size_t j = 0; j < d; ++j) {
                        centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
                    }
                } else {
                    // Revive an empty cluster at the point farthest from its
                    // current centroid.
                    std::size_t far = 0;
                    double far_d = -1.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double dd = sq_dist(&points(i, 0), &centroids(labels[i], 0), d);
                        if (dd > far_d) {
                            far_d = dd;
                            far = i;
                        }
                    }
                    std::copy_n(&points(far, 0), d, &centroids(c, 0));
                }
            }
        }

        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            objective += sq_dist(&points(i, 0), &centroids(labels[i], 0), d);
        }
        if (objective < best_objective) {
            best_objective = objective;
            best_labels = labels;
        }
    }
    return best_labels;
}

ClusterAssignment spectral_cluster(const AffinityMatrix& affinity, const SpeakerCount& count) {
    affinity.validate();
    const std::size_t n = affinity.dim();
    if (n == 0) return {{}, 0};
    if (count.value < 1) throw std::invalid_argument("spectral_cluster: speaker count must be >= 1");
    if (count.is_oracle && static_cast<std::size_t>(count.value) > n) {
        throw std::invalid_argument("spectral_cluster: oracle count exceeds number of speakers");
    }

    constexpr double kDegreeGuard = 1e-8;
    std::vector<double> inv_sqrt_deg(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = kDegreeGuard;
        for (std::size_t j = 0; j < n; ++j) deg += affinity.entries(i, j);
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    Mat<double> laplacian(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            laplacian(i, j) = (i == j ? 1.0 : 0.0) -
                              affinity.entries(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }

    const EigResult eig = symmetric_eig(laplacian);
    const int m = count.is_oracle ? count.value : estimate_num_clusters(eig.values, count.value);

    // Row-normalized spectral embedding from the M bottom eigenvectors.
    Mat<double> embedding(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int j = 0; j < m; ++j) {
            embedding(i, j) = eig.vectors(i, static_cast<std::size_t>(j));
            norm += embedding(i, j) * embedding(i, j);
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            for (int j = 0; j < m; ++j) embedding(i, j) = j == 0 ? 1.0 : 0.0;
        } else {
            for (int j = 0; j < m; ++j) embedding(i, j) /= norm;
        }
    }

    constexpr std::uint64_t kKmeansSeed = 0;
    const std::vector<int> raw = kmeans(embedding, m, kKmeansSeed);

    // Relabel cluster ids by first occurrence.
    ClusterAssignment assignment;
    assignment.labels.resize(n);
    std::vector<int> relabel(m, -1);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (relabel[raw[i]] < 0) relabel[raw[i]] = next++;
        assignment.labels[i] = relabel[raw[i]];
    }
    assignment.num_clusters = next;
    return assignment;
}

} // namespace lgdiar
