#include "streamdiar/der.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace streamdiar {

double DerBreakdown::der() const {
    return (missed + false_alarm + confusion) / scored_speech;
}

DerBreakdown& DerBreakdown::operator+=(const DerBreakdown& other) {
    missed += other.missed;
    false_alarm += other.false_alarm;
    confusion += other.confusion;
    scored_speech += other.scored_speech;
    return *this;
}

namespace {

std::int64_t to_ms(double seconds) { return std::llround(seconds * 1000.0); }

// active[speaker][t] for a 1 ms grid of the given length.
std::vector<std::vector<char>> activity_grid(const SegmentList& list,
                                             std::vector<std::string>& names, std::int64_t t_ms) {
    std::vector<std::vector<char>> grid;
    for (const RttmSegment& seg : list.segments) {
        std::size_t idx = 0;
        for (; idx < names.size(); ++idx)
            if (names[idx] == seg.speaker) break;
        if (idx == names.size()) {
            names.push_back(seg.speaker);
            grid.emplace_back(static_cast<std::size_t>(t_ms), char{0});
        }
        const std::int64_t on = std::clamp<std::int64_t>(to_ms(seg.onset), 0, t_ms);
        const std::int64_t off =
            std::clamp<std::int64_t>(to_ms(seg.onset + seg.duration), 0, t_ms);
        for (std::int64_t t = on; t < off; ++t) grid[idx][static_cast<std::size_t>(t)] = 1;
    }
    return grid;
}

DerBreakdown score_grids(const std::vector<std::vector<char>>& ref,
                         const std::vector<std::vector<char>>& hyp,
                         const std::vector<char>* scored, std::int64_t t_len,
                         double seconds_per_frame) {
    const std::size_t nr_spk = ref.size();
    const std::size_t nh_spk = hyp.size();

    std::vector<std::vector<double>> overlap(nr_spk, std::vector<double>(nh_spk, 0.0));
    for (std::int64_t t = 0; t < t_len; ++t) {
        if (scored && !(*scored)[static_cast<std::size_t>(t)]) continue;
        for (std::size_t r = 0; r < nr_spk; ++r) {
            if (!ref[r][static_cast<std::size_t>(t)]) continue;
            for (std::size_t h = 0; h < nh_spk; ++h)
                if (hyp[h][static_cast<std::size_t>(t)]) overlap[r][h] += 1.0;
        }
    }
    const std::vector<int> match = best_assignment(overlap);

    std::int64_t miss = 0, fa = 0, conf = 0, speech = 0;
    for (std::int64_t t = 0; t < t_len; ++t) {
        if (scored && !(*scored)[static_cast<std::size_t>(t)]) continue;
        std::int64_t nr = 0, nh = 0, ncorrect = 0;
        for (std::size_t r = 0; r < nr_spk; ++r) {
            if (!ref[r][static_cast<std::size_t>(t)]) continue;
            ++nr;
            const int h = match[r];
            if (h >= 0 && hyp[static_cast<std::size_t>(h)][static_cast<std::size_t>(t)]) ++ncorrect;
        }
        for (std::size_t h = 0; h < nh_spk; ++h)
            if (hyp[h][static_cast<std::size_t>(t)]) ++nh;
        miss += std::max<std::int64_t>(0, nr - nh);
        fa += std::max<std::int64_t>(0, nh - nr);
        conf += std::min(nr, nh) - ncorrect;
        speech += nr;
    }
    if (speech == 0) throw std::runtime_error("der: no scored reference speech");

    DerBreakdown b;
    b.missed = static_cast<double>(miss) * seconds_per_frame;
    b.false_alarm = static_cast<double>(fa) * seconds_per_frame;
    b.confusion = static_cast<double>(conf) * seconds_per_frame;
    b.scored_speech = static_cast<double>(speech) * seconds_per_frame;
    return b;
}

std::vector<int> exhaustive_assignment(const std::vector<std::vector<double>>& overlap) {
    const std::size_t rows = overlap.size();
    const std::size_t cols = overlap.empty() ? 0 : overlap[0].size();
    const std::size_t n = std::max(rows, cols);
    std::vector<int> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);

    std::vector<int> best_perm = perm;
    double best = -1.0;
    do {
        double sum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t c = static_cast<std::size_t>(perm[r]);
            if (c < cols) sum += overlap[r][c];
        }
        if (sum > best) {
            best = sum;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    std::vector<int> match(rows, -1);
    for (std::size_t r = 0; r < rows; ++r)
        if (static_cast<std::size_t>(best_perm[r]) < cols) match[r] = best_perm[r];
    return match;
}

// O(n^3) min-cost assignment with potentials, run on the negated overlaps.
std::vector<int> hungarian_assignment(const std::vector<std::vector<double>>& overlap) {
    const int rows = static_cast<int>(overlap.size());
    const int cols = overlap.empty() ? 0 : static_cast<int>(overlap[0].size());
    const int n = std::max(rows, cols);
    const double inf = std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> a(static_cast<std::size_t>(n + 1),
                                       std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            a[static_cast<std::size_t>(r + 1)][static_cast<std::size_t>(c + 1)] = -overlap
                [static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];

    std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<double> v(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<int> p(static_cast<std::size_t>(n + 1), 0);
    std::vector<int> way(static_cast<std::size_t>(n + 1), 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
        std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = a[static_cast<std::size_t>(i0)][static_cast<std::size_t>(j)] -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<int> match(static_cast<std::size_t>(rows), -1);
    for (int j = 1; j <= n; ++j) {
        const int r = p[static_cast<std::size_t>(j)];
        if (r >= 1 && r <= rows && j <= cols) match[static_cast<std::size_t>(r - 1)] = j - 1;
    }
    return match;
}

} // namespace

std::vector<int> best_assignment(const std::vector<std::vector<double>>& overlap) {
    const std::size_t rows = overlap.size();
    const std::size_t cols = overlap.empty() ? 0 : overlap[0].size();
    if (rows == 0) return {};
    if (cols == 0) return std::vector<int>(rows, -1);
    if (std::max(rows, cols) <= 8) return exhaustive_assignment(overlap);
    return hungarian_assignment(overlap);
}

DerBreakdown der(const SegmentList& reference, const SegmentList& hypothesis, double collar) {
    if (collar < 0.0) throw std::invalid_argument("der: collar must be >= 0");

    std::int64_t t_ms = 0;
    for (const RttmSegment& s : reference.segments)
        t_ms = std::max(t_ms, to_ms(s.onset + s.duration));
    for (const RttmSegment& s : hypothesis.segments)
        t_ms = std::max(t_ms, to_ms(s.onset + s.duration));
    if (t_ms == 0) throw std::runtime_error("der: no scored reference speech");

    std::vector<std::string> ref_names, hyp_names;
    const auto ref_grid = activity_grid(reference, ref_names, t_ms);
    const auto hyp_grid = activity_grid(hypothesis, hyp_names, t_ms);

    // Frames within the collar of a reference onset or offset are unscored.
    std::vector<char> scored(static_cast<std::size_t>(t_ms), 1);
    const std::int64_t collar_ms = to_ms(collar);
    for (const RttmSegment& s : reference.segments) {
        for (const std::int64_t bnd : {to_ms(s.onset), to_ms(s.onset + s.duration)}) {
            const std::int64_t lo = std::clamp<std::int64_t>(bnd - collar_ms, 0, t_ms);
            const std::int64_t hi = std::clamp<std::int64_t>(bnd + collar_ms, 0, t_ms);
            for (std::int64_t t = lo; t < hi; ++t) scored[static_cast<std::size_t>(t)] = 0;
        }
    }

    return score_grids(ref_grid, hyp_grid, &scored, t_ms, 1e-3);
}

DerBreakdown label_der(const MatrixF& reference, const MatrixF& posterior, float threshold,
                       double frame_period) {
    if (reference.rows() != posterior.rows())
        throw std::invalid_argument("label_der: frame counts differ");
    if (frame_period <= 0.0) throw std::invalid_argument("label_der: frame_period must be > 0");

    const auto to_grid = [](const MatrixF& m, float thr) {
        std::vector<std::vector<char>> grid(static_cast<std::size_t>(m.cols()),
                                            std::vector<char>(static_cast<std::size_t>(m.rows()), 0));
        for (index_t j = 0; j < m.cols(); ++j)
            for (index_t t = 0; t < m.rows(); ++t)
                grid[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)] =
                    m.at(t, j) >= thr ? 1 : 0;
        return grid;
    };
    const auto ref_grid = to_grid(reference, 0.5f);
    const auto hyp_grid = to_grid(posterior, threshold);
    return score_grids(ref_grid, hyp_grid, nullptr, reference.rows(), frame_period);
}

std::string format_der_table(const std::vector<DerReportRow>& rows) {
    std::size_t label_w = 5, bucket_w = 6;
    for (const auto& r : rows) {
        label_w = std::max(label_w, r.label.size());
        bucket_w = std::max(bucket_w, r.bucket.size());
    }
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %-*s  %8s %8s %8s %8s\n", static_cast<int>(label_w),
                  "model", static_cast<int>(bucket_w), "bucket", "miss%", "fa%", "conf%", "DER%");
    out += line;
    for (const auto& r : rows) {
        const double denom = r.breakdown.scored_speech;
        std::snprintf(line, sizeof line, "%-*s  %-*s  %8.2f %8.2f %8.2f %8.2f\n",
                      static_cast<int>(label_w), r.label.c_str(), static_cast<int>(bucket_w),
                      r.bucket.c_str(), 100.0 * r.breakdown.missed / denom,
                      100.0 * r.breakdown.false_alarm / denom,
                      100.0 * r.breakdown.confusion / denom, 100.0 * r.breakdown.der());
        out += line;
    }
    return out;
}

} // namespace streamdiar
