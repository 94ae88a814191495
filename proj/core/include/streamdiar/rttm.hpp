#pragma once

#include "streamdiar/matrix.hpp"
#include "streamdiar/pipeline.hpp"

#include <string>
#include <vector>

namespace streamdiar {

struct RttmSegment {
    std::string speaker;
    double onset = 0.0;
    double duration = 0.0;
};

struct SegmentList {
    std::string recording_id;
    std::vector<RttmSegment> segments;
};

// SPEAKER lines: "SPEAKER <rec> 1 <onset> <dur> <NA> <NA> <speaker> <NA> <NA>".
// Comment lines starting with ';' and blank lines are skipped; anything else
// malformed raises an error naming the line number. Recordings are grouped in
// order of first appearance.
std::vector<SegmentList> parse_rttm(const std::string& text);
std::vector<SegmentList> read_rttm(const std::string& path);

// Times are written with three decimals (millisecond resolution).
std::string format_rttm(const SegmentList& list);
std::string format_rttm(const std::vector<SegmentList>& lists);
void write_rttm(const std::string& path, const std::vector<SegmentList>& lists);

// Names diarization speaker ids "spk0", "spk1", ... for RTTM output.
SegmentList to_segment_list(const std::vector<Segment>& segments, const std::string& recording_id);

} // namespace streamdiar
