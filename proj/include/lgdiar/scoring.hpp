#pragma once

#include <string>
#include <vector>

#include "lgdiar/mat.hpp"

namespace lgdiar {

struct Segment {
    std::string speaker;
    double start_s = 0.0;
    double end_s = 0.0;
};

// Speaker-labeled time segments for one recording. Speakers may overlap.
struct Annotation {
    std::string recording_id;
    std::vector<Segment> segments;

    // Sorted by (start, speaker), with same-speaker segments that overlap
    // or abut merged into one. Parsing and emission both normalize.
    Annotation normalized() const;
    double total_speech_s() const;
    std::vector<std::string> speakers() const;
};

struct DerReport {
    double miss_s = 0.0;
    double falarm_s = 0.0;
    double confusion_s = 0.0;
    double scored_speech_s = 0.0;
    double der = 0.0;
};

// RTTM interchange. Lines look like
//   SPEAKER <rec> 1 <tbeg> <tdur> <NA> <NA> <speaker> <NA> <NA>
// with times emitted at millisecond precision. Recordings come back in
// first-appearance order; malformed lines fail with their line number.
std::vector<Annotation> parse_rttm(const std::string& text);
std::string emit_rttm(const std::vector<Annotation>& annotations);
Annotation read_rttm_file(const std::string& path); // exactly one recording expected
void write_rttm_file(const std::string& path, const Annotation& annotation);

// One-to-one partial mapping of rows to columns maximizing total overlap.
// Entry -1 means the row stays unmapped; zero-overlap pairs are never mapped.
std::vector<int> optimal_assignment(const Mat<double>& overlap);

// DER by exact interval sweep over event boundaries. The +-collar_s region
// around every reference segment boundary is excluded from scoring; with
// score_overlap false, instants where the reference has >=2 speakers are
// skipped as well. Speaker mapping is the single global optimal assignment
// over co-occurrence time on the scored regions.
DerReport compute_der(const Annotation& reference, const Annotation& hypothesis,
                      double collar_s = 0.25, bool score_overlap = true);

} // namespace lgdiar
