#include "lgdiar/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace lgdiar {

namespace {

constexpr double kAbutTol = 1e-9;

bool segment_order(const Segment& a, const Segment& b) {
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    if (a.speaker != b.speaker) return a.speaker < b.speaker;
    return a.end_s < b.end_s;
}

} // namespace

Annotation Annotation::normalized() const {
    std::map<std::string, std::vector<Segment>> by_speaker;
    for (const auto& seg : segments) {
        if (!(seg.start_s < seg.end_s)) {
            throw std::invalid_argument("segment must have start < end");
        }
        by_speaker[seg.speaker].push_back(seg);
    }

    Annotation out;
    out.recording_id = recording_id;
    for (auto& [speaker, segs] : by_speaker) {
        std::sort(segs.begin(), segs.end(), segment_order);
        for (const auto& seg : segs) {
            if (!out.segments.empty() && out.segments.back().speaker == speaker &&
                seg.start_s <= out.segments.back().end_s + kAbutTol) {
                out.segments.back().end_s = std::max(out.segments.back().end_s, seg.end_s);
            } else {
                out.segments.push_back(seg);
            }
        }
    }
    std::sort(out.segments.begin(), out.segments.end(), segment_order);
    return out;
}

double Annotation::total_speech_s() const {
    double total = 0.0;
    for (const auto& seg : normalized().segments) total += seg.end_s - seg.start_s;
    return total;
}

std::vector<std::string> Annotation::speakers() const {
    std::vector<std::string> names;
    for (const auto& seg : segments) {
        if (std::find(names.begin(), names.end(), seg.speaker) == names.end()) {
            names.push_back(seg.speaker);
        }
    }
    return names;
}

std::vector<Annotation> parse_rttm(const std::string& text) {
    std::vector<Annotation> recordings;
    auto annotation_for = [&](const std::string& rec) -> Annotation& {
        for (auto& a : recordings) {
            if (a.recording_id == rec) return a;
        }
        recordings.push_back(Annotation{rec, {}});
        return recordings.back();
    };

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::vector<std::string> tok;
        std::string t;
        while (fields >> t) tok.push_back(t);
        if (tok.empty() || tok[0] == ";;") continue;

        auto fail = [&](const std::string& why) {
            throw std::runtime_error("rttm parse error at line " + std::to_string(line_no) + ": " +
                                     why);
        };
        if (tok[0] != "SPEAKER") fail("expected SPEAKER record");
        if (tok.size() < 9) fail("expected at least 9 fields, got " + std::to_string(tok.size()));
        double tbeg = 0.0, tdur = 0.0;
        try {
            std::size_t used = 0;
            tbeg = std::stod(tok[3], &used);
            if (used != tok[3].size()) fail("bad onset time");
            tdur = std::stod(tok[4], &used);
            if (used != tok[4].size()) fail("bad duration");
        } catch (const std::logic_error&) {
            fail("bad time field");
        }
        if (tdur <= 0.0) fail("duration must be positive");
        annotation_for(tok[1]).segments.push_back({tok[7], tbeg, tbeg + tdur});
    }
    for (auto& a : recordings) a = a.normalized();
    return recordings;
}

std::string emit_rttm(const std::vector<Annotation>& annotations) {
    std::string out;
    char line[256];
    for (const auto& annotation : annotations) {
        for (const auto& seg : annotation.normalized().segments) {
            std::snprintf(line, sizeof(line), "SPEAKER %s 1 %.3f %.3f <NA> <NA> %s <NA> <NA>\n",
                          annotation.recording_id.c_str(), seg.start_s, seg.end_s - seg.start_s,
                          seg.speaker.c_str());
            out += line;
        }
    }
    return out;
}

Annotation read_rttm_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open rttm file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    auto recordings = parse_rttm(buf.str());
    if (recordings.size() != 1) {
        throw std::runtime_error("expected exactly one recording in " + path + ", found " +
                                 std::to_string(recordings.size()));
    }
    return recordings.front();
}

void write_rttm_file(const std::string& path, const Annotation& annotation) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << emit_rttm({annotation});
    if (!out) throw std::runtime_error("short write: " + path);
}

std::vector<int> optimal_assignment(const Mat<double>& overlap) {
    const int rows = static_cast<int>(overlap.rows());
    const int cols = static_cast<int>(overlap.cols());
    std::vector<int> match(rows, -1);
    if (rows == 0 || cols == 0) return match;
    const int n = std::max(rows, cols);

    // Hungarian algorithm with potentials on the zero-padded square matrix;
    // maximization becomes minimization of the negated overlaps.
    auto cost = [&](int i, int j) {
        if (i < rows && j < cols) return -overlap(i, j);
        return 0.0;
    };
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, -1), way(n + 1, 0);
    for (int i = 0; i < n; ++i) {
        p[n] = i;
        int j0 = n;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = kInf;
            for (int j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != -1);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != n);
    }

    for (int j = 0; j < cols; ++j) {
        const int i = p[j];
        if (i >= 0 && i < rows && overlap(i, j) > 0.0) match[i] = j;
    }
    return match;
}

namespace {

struct Interval {
    double start;
    double end;
    std::vector<int> ref_active;
    std::vector<int> hyp_active;
};

std::vector<int> active_at(const std::vector<Segment>& segments,
                           const std::vector<std::string>& names, double t) {
    std::vector<int> active;
    for (const auto& seg : segments) {
        if (seg.start_s <= t && t < seg.end_s) {
            const auto it = std::find(names.begin(), names.end(), seg.speaker);
            active.push_back(static_cast<int>(it - names.begin()));
        }
    }
    std::sort(active.begin(), active.end());
    active.erase(std::unique(active.begin(), active.end()), active.end());
    return active;
}

} // namespace

DerReport compute_der(const Annotation& reference, const Annotation& hypothesis, double collar_s,
                      bool score_overlap) {
    if (reference.recording_id != hypothesis.recording_id) {
        throw std::invalid_argument("reference and hypothesis recording ids differ: " +
                                    reference.recording_id + " vs " + hypothesis.recording_id);
    }
    if (collar_s < 0.0) throw std::invalid_argument("collar must be >= 0");

    const Annotation ref = reference.normalized();
    const Annotation hyp = hypothesis.normalized();
    const std::vector<std::string> ref_names = ref.speakers();
    const std::vector<std::string> hyp_names = hyp.speakers();

    // Elementary intervals between all event boundaries: segment edges plus
    // the edges of the collar zones around reference boundaries.
    std::vector<std::pair<double, double>> collars;
    std::vector<double> events;
    for (const auto& seg : ref.segments) {
        events.push_back(seg.start_s);
        events.push_back(seg.end_s);
        if (collar_s > 0.0) {
            collars.emplace_back(seg.start_s - collar_s, seg.start_s + collar_s);
            collars.emplace_back(seg.end_s - collar_s, seg.end_s + collar_s);
        }
    }
    for (const auto& seg : hyp.segments) {
        events.push_back(seg.start_s);
        events.push_back(seg.end_s);
    }
    for (const auto& [a, b] : collars) {
        events.push_back(a);
        events.push_back(b);
    }
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());

    std::vector<Interval> scored_intervals;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
        const double a = events[i];
        const double b = events[i + 1];
        if (!(b > a)) continue;
        const double mid = a + (b - a) / 2.0;
        const bool in_collar = std::any_of(collars.begin(), collars.end(), [&](const auto& c) {
            return c.first <= mid && mid < c.second;
        });
        if (in_collar) continue;
        Interval iv{a, b, active_at(ref.segments, ref_names, mid),
                    active_at(hyp.segments, hyp_names, mid)};
        if (!score_overlap && iv.ref_active.size() >= 2) continue;
        if (iv.ref_active.empty() && iv.hyp_active.empty()) continue;
        scored_intervals.push_back(std::move(iv));
    }

    // Global speaker mapping from co-occurrence time on the scored regions.
    Mat<double> co(ref_names.size(), hyp_names.size());
    for (const auto& iv : scored_intervals) {
        const double len = iv.end - iv.start;
        for (int r : iv.ref_active) {
            for (int h : iv.hyp_active) co(r, h) += len;
        }
    }
    const std::vector<int> mapping = optimal_assignment(co);

    DerReport report;
    for (const auto& iv : scored_intervals) {
        const double len = iv.end - iv.start;
        const auto n_ref = static_cast<double>(iv.ref_active.size());
        const auto n_hyp = static_cast<double>(iv.hyp_active.size());
        int correct = 0;
        for (int r : iv.ref_active) {
            if (mapping[r] >= 0 && std::binary_search(iv.hyp_active.begin(), iv.hyp_active.end(),
                                                      mapping[r])) {
                ++correct;
            }
        }
        report.scored_speech_s += len * n_ref;
        report.miss_s += len * std::max(0.0, n_ref - n_hyp);
        report.falarm_s += len * std::max(0.0, n_hyp - n_ref);
        report.confusion_s += len * (std::min(n_ref, n_hyp) - correct);
    }

    if (report.scored_speech_s <= 0.0) {
        throw std::runtime_error("no scored reference speech, DER undefined");
    }
    report.der = (report.miss_s + report.falarm_s + report.confusion_s) / report.scored_speech_s;
    return report;
}

} // namespace lgdiar
