#include "streamdiar/rttm.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace streamdiar {

namespace {

[[noreturn]] void rttm_error(std::size_t line_no, const std::string& what) {
    throw std::runtime_error("rttm: line " + std::to_string(line_no) + ": " + what);
}

double parse_time(const std::string& tok, std::size_t line_no, const char* field) {
    std::size_t consumed = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &consumed);
    } catch (const std::exception&) {
        rttm_error(line_no, std::string("bad ") + field + " '" + tok + "'");
    }
    if (consumed != tok.size()) rttm_error(line_no, std::string("bad ") + field + " '" + tok + "'");
    if (v < 0.0) rttm_error(line_no, std::string(field) + " is negative");
    return v;
}

} // namespace

std::vector<SegmentList> parse_rttm(const std::string& text) {
    std::vector<SegmentList> lists;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok[0][0] == ';') continue;
        if (tok[0] != "SPEAKER") rttm_error(line_no, "expected SPEAKER record, got '" + tok[0] + "'");
        if (tok.size() != 10)
            rttm_error(line_no, "expected 10 fields, got " + std::to_string(tok.size()));

        RttmSegment seg;
        seg.onset = parse_time(tok[3], line_no, "onset");
        seg.duration = parse_time(tok[4], line_no, "duration");
        seg.speaker = tok[7];
        if (seg.speaker == "<NA>") rttm_error(line_no, "missing speaker name");

        const std::string& rec = tok[1];
        SegmentList* list = nullptr;
        for (auto& l : lists)
            if (l.recording_id == rec) list = &l;
        if (!list) {
            lists.push_back({rec, {}});
            list = &lists.back();
        }
        list->segments.push_back(std::move(seg));
    }
    return lists;
}

std::vector<SegmentList> read_rttm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("rttm: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_rttm(ss.str());
}

std::string format_rttm(const SegmentList& list) {
    std::ostringstream os;
    for (const RttmSegment& s : list.segments) {
        char onset[32], dur[32];
        std::snprintf(onset, sizeof onset, "%.3f", s.onset);
        std::snprintf(dur, sizeof dur, "%.3f", s.duration);
        os << "SPEAKER " << list.recording_id << " 1 " << onset << ' ' << dur << " <NA> <NA> "
           << s.speaker << " <NA> <NA>\n";
    }
    return os.str();
}

std::string format_rttm(const std::vector<SegmentList>& lists) {
    std::string out;
    for (const auto& l : lists) out += format_rttm(l);
    return out;
}

void write_rttm(const std::string& path, const std::vector<SegmentList>& lists) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("rttm: cannot open for writing: " + path);
    out << format_rttm(lists);
    if (!out) throw std::runtime_error("rttm: write failed: " + path);
}

SegmentList to_segment_list(const std::vector<Segment>& segments, const std::string& recording_id) {
    SegmentList list;
    list.recording_id = recording_id;
    for (const Segment& s : segments)
        list.segments.push_back({"spk" + std::to_string(s.speaker_id), s.onset, s.duration});
    return list;
}

} // namespace streamdiar
