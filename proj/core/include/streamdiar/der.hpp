#pragma once

#include "streamdiar/matrix.hpp"
#include "streamdiar/rttm.hpp"

#include <string>
#include <vector>

namespace streamdiar {

struct DerBreakdown {
    double missed = 0.0;      // seconds of reference speech the hypothesis lacks
    double false_alarm = 0.0; // seconds of hypothesis speech with no reference
    double confusion = 0.0;   // seconds attributed to the wrong speaker
    double scored_speech = 0.0;

    double der() const;
    DerBreakdown& operator+=(const DerBreakdown& other);
};

// Diarization error rate on a 1 ms grid with frame-midpoint scoring. Frames
// within +-collar seconds of any reference segment boundary are excluded.
// Speakers are mapped one-to-one to minimise total error (exhaustive up to 8
// speakers per side, assignment solver beyond). No scored reference speech is
// an error.
DerBreakdown der(const SegmentList& reference, const SegmentList& hypothesis,
                 double collar = 0.25);

// Frame-level variant on already aligned label/posterior matrices; columns
// are mapped the same way, no collar. Durations are frames * frame_period.
DerBreakdown label_der(const MatrixF& reference, const MatrixF& posterior, float threshold,
                       double frame_period);

// Maximum-sum one-to-one assignment of rows to columns; returns col index per
// row (-1 when unmatched). Exhaustive for min side <= 8, Hungarian beyond.
std::vector<int> best_assignment(const std::vector<std::vector<double>>& overlap);

struct DerReportRow {
    std::string label;  // e.g. model or variant name
    std::string bucket; // e.g. speaker count
    DerBreakdown breakdown;
};

// Aligned plain-text table with a DER% column.
std::string format_der_table(const std::vector<DerReportRow>& rows);

} // namespace streamdiar
