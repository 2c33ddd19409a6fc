#pragma once

// q-admissible controls. Every policy reads only (t, x, flag), where the flag
// records whether the walk has visited 0 (since the current phase began, for
// schedules that restart the flag). That makes each control F_t-adapted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crw/errors.hpp"
#include "crw/lattice.hpp"

namespace crw {

/// Space-time bitmap over t in [0, horizon) and x in [lo, hi]; a set bit
/// means u = q_cap at that cell.
class RegionBitmap {
public:
    RegionBitmap() = default;
    RegionBitmap(Step horizon, Site lo, Site hi)
        : horizon_(horizon), lo_(lo), hi_(hi),
          rows_(static_cast<std::size_t>(std::max<Step>(horizon, 0)),
                std::vector<bool>(static_cast<std::size_t>(std::max<Site>(hi - lo + 1, 0)), false)) {
        if (horizon < 0 || hi < lo) throw ParameterError("bad region bitmap extent");
    }

    Step horizon() const { return horizon_; }
    Site lo() const { return lo_; }
    Site hi() const { return hi_; }
    std::size_t width() const { return static_cast<std::size_t>(hi_ - lo_ + 1); }

    bool get(Step t, Site x) const {
        if (t < 0 || t >= horizon_ || x < lo_ || x > hi_) return false;
        return rows_[static_cast<std::size_t>(t)][static_cast<std::size_t>(x - lo_)];
    }
    void set(Step t, Site x, bool v) {
        if (t < 0 || t >= horizon_ || x < lo_ || x > hi_)
            throw ParameterError("region bitmap cell out of range");
        rows_[static_cast<std::size_t>(t)][static_cast<std::size_t>(x - lo_)] = v;
    }
    const std::vector<bool>& row(Step t) const { return rows_.at(static_cast<std::size_t>(t)); }

    /// Run lengths of row t, alternating and starting with a run of zeros
    /// (possibly empty).
    std::vector<std::uint64_t> encode_row(Step t) const {
        std::vector<std::uint64_t> runs;
        bool current = false;
        std::uint64_t len = 0;
        for (bool b : row(t)) {
            if (b != current) {
                runs.push_back(len);
                current = b;
                len = 0;
            }
            ++len;
        }
        runs.push_back(len);
        return runs;
    }

    void decode_row(Step t, const std::vector<std::uint64_t>& runs) {
        auto& r = rows_.at(static_cast<std::size_t>(t));
        std::size_t pos = 0;
        bool value = false;
        for (std::uint64_t len : runs) {
            if (pos + len > r.size()) throw ParameterError("run-length row overflows bitmap width");
            std::fill(r.begin() + static_cast<std::ptrdiff_t>(pos), r.begin() + static_cast<std::ptrdiff_t>(pos + len), value);
            pos += len;
            value = !value;
        }
        if (pos != r.size()) throw ParameterError("run-length row does not cover bitmap width");
    }

    bool operator==(const RegionBitmap&) const = default;

private:
    Step horizon_ = 0;
    Site lo_ = 0;
    Site hi_ = -1;
    std::vector<std::vector<bool>> rows_;
};

struct ConstantControl {
    double u = 0.0;
};

/// u = q_cap on |x| <= band, 0 elsewhere.
struct TwoZoneControl {
    Site band = 0;
};

/// u = 0 until the walk visits 0, q_cap afterwards.
struct FastUntilZeroControl {};

using PhaseControl = std::variant<ConstantControl, TwoZoneControl, FastUntilZeroControl>;

struct ScheduleSegment {
    Step t_start = 0;
    Step t_end = 0;
    PhaseControl control;
    /// Scale index l of the phase (0 for the free/lazy opening phase).
    int scale_index = 0;
    /// Spatial scale K the phase was built for (0 when not applicable).
    double scale = 0.0;
    /// Restart the visited-0 flag at t_start.
    bool resets_flag = false;

    Step length() const { return t_end - t_start; }
};

struct ScheduleControl {
    std::vector<ScheduleSegment> segments;
};

struct BangBangControl {
    std::shared_ptr<const RegionBitmap> region;
};

enum class PolicyKind { constant, two_zone, fast_until_zero, schedule, bang_bang_table };

inline std::string to_string(PolicyKind k) {
    switch (k) {
        case PolicyKind::constant: return "constant";
        case PolicyKind::two_zone: return "two-zone";
        case PolicyKind::fast_until_zero: return "fast-until-zero";
        case PolicyKind::schedule: return "schedule";
        case PolicyKind::bang_bang_table: return "bang-bang-table";
    }
    return "unknown";
}

namespace detail {

inline double phase_value(const PhaseControl& c, double q_cap, Site x, Flag flag) {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ConstantControl>) {
                return p.u;
            } else if constexpr (std::is_same_v<T, TwoZoneControl>) {
                return (x <= p.band && x >= -p.band) ? q_cap : 0.0;
            } else {
                return flag == Flag::hit ? q_cap : 0.0;
            }
        },
        c);
}

inline void check_cap(double q_cap) {
    if (!(q_cap >= 0.0 && q_cap < 1.0))
        throw ParameterError("q_cap must lie in [0, 1), got " + std::to_string(q_cap));
}

}  // namespace detail

/// A q-admissible control, immutable after construction.
class PolicySpec {
public:
    using Body = std::variant<ConstantControl, TwoZoneControl, FastUntilZeroControl, ScheduleControl, BangBangControl>;

    PolicySpec(double q_cap, Body body) : q_cap_(q_cap), body_(std::move(body)) {
        detail::check_cap(q_cap_);
        validate();
    }

    double q_cap() const { return q_cap_; }
    const Body& body() const { return body_; }

    PolicyKind kind() const { return static_cast<PolicyKind>(body_.index()); }

    /// Last valid step + 1, or nullopt when the control is defined for all t.
    std::optional<Step> horizon() const {
        if (auto* s = std::get_if<ScheduleControl>(&body_)) return s->segments.back().t_end;
        if (auto* b = std::get_if<BangBangControl>(&body_)) return b->region->horizon();
        return std::nullopt;
    }

    bool flag_dependent() const {
        if (std::holds_alternative<FastUntilZeroControl>(body_)) return true;
        if (auto* s = std::get_if<ScheduleControl>(&body_))
            return std::any_of(s->segments.begin(), s->segments.end(), [](const ScheduleSegment& g) {
                return std::holds_alternative<FastUntilZeroControl>(g.control);
            });
        return false;
    }

    /// Whether the visited-0 flag restarts before step t.
    bool resets_flag_at(Step t) const {
        if (auto* s = std::get_if<ScheduleControl>(&body_)) {
            const auto* g = find_segment(*s, t);
            return g != nullptr && g->resets_flag && g->t_start == t;
        }
        return false;
    }

    /// The control u_t at site x with history flag `flag`.
    double evaluate(Step t, Site x, Flag flag) const {
        check_time(t);
        return std::visit(
            [&](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, ScheduleControl>) {
                    return detail::phase_value(find_segment(p, t)->control, q_cap_, x, flag);
                } else if constexpr (std::is_same_v<T, BangBangControl>) {
                    return p.region->get(t, x) ? q_cap_ : 0.0;
                } else {
                    return detail::phase_value(PhaseControl(p), q_cap_, x, flag);
                }
            },
            body_);
    }

    /// Fills a control row for step t over [lo, hi].
    template <class Real = double>
    ControlRow<Real> row(Step t, Site lo, Site hi) const {
        check_time(t);
        ControlRow<Real> r;
        r.time = t;
        r.q_cap = from_double<Real>(q_cap_);
        r.offset = lo;
        const auto n = static_cast<std::size_t>(std::max<Site>(hi - lo + 1, 0));
        r.u_not_hit.resize(n);
        r.u_hit.resize(n);
        const Real q = r.q_cap;
        const Real zero(0);
        auto fill_phase = [&](const PhaseControl& c) {
            if (auto* k = std::get_if<ConstantControl>(&c)) {
                const Real v = from_double<Real>(k->u);
                std::fill(r.u_not_hit.begin(), r.u_not_hit.end(), v);
                std::fill(r.u_hit.begin(), r.u_hit.end(), v);
            } else if (auto* z = std::get_if<TwoZoneControl>(&c)) {
                for (std::size_t i = 0; i < n; ++i) {
                    const Site x = lo + static_cast<Site>(i);
                    r.u_not_hit[i] = r.u_hit[i] = (x <= z->band && x >= -z->band) ? q : zero;
                }
            } else {
                std::fill(r.u_not_hit.begin(), r.u_not_hit.end(), zero);
                std::fill(r.u_hit.begin(), r.u_hit.end(), q);
            }
        };
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, ScheduleControl>) {
                    fill_phase(find_segment(p, t)->control);
                } else if constexpr (std::is_same_v<T, BangBangControl>) {
                    for (std::size_t i = 0; i < n; ++i)
                        r.u_not_hit[i] = r.u_hit[i] = p.region->get(t, lo + static_cast<Site>(i)) ? q : zero;
                } else {
                    fill_phase(PhaseControl(p));
                }
            },
            body_);
        return r;
    }

    const ScheduleSegment* segment_at(Step t) const {
        if (auto* s = std::get_if<ScheduleControl>(&body_)) return find_segment(*s, t);
        return nullptr;
    }

private:
    static const ScheduleSegment* find_segment(const ScheduleControl& s, Step t) {
        auto it = std::upper_bound(s.segments.begin(), s.segments.end(), t,
                                   [](Step v, const ScheduleSegment& g) { return v < g.t_start; });
        if (it == s.segments.begin()) return nullptr;
        --it;
        return t < it->t_end ? &*it : nullptr;
    }

    void check_time(Step t) const {
        if (t < 0) throw ParameterError("negative step index");
        if (auto h = horizon(); h && t >= *h)
            throw ParameterError("step " + std::to_string(t) + " outside policy horizon " + std::to_string(*h));
    }

    void validate() const {
        auto check_phase = [&](const PhaseControl& c) {
            if (auto* k = std::get_if<ConstantControl>(&c)) {
                if (!(k->u >= 0.0) || k->u > q_cap_)
                    throw AdmissibilityError("constant control " + std::to_string(k->u) + " outside [0, " +
                                             std::to_string(q_cap_) + "]");
            } else if (auto* z = std::get_if<TwoZoneControl>(&c)) {
                if (z->band < 0) throw ParameterError("two-zone band must be >= 0");
            }
        };
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, ScheduleControl>) {
                    if (p.segments.empty()) throw ParameterError("schedule has no segments");
                    Step expect = 0;
                    for (const auto& g : p.segments) {
                        if (g.t_start != expect)
                            throw ParameterError("schedule segments must partition [0, n) without gaps");
                        if (g.t_end <= g.t_start) throw ParameterError("schedule segment with t_end <= t_start");
                        check_phase(g.control);
                        expect = g.t_end;
                    }
                } else if constexpr (std::is_same_v<T, BangBangControl>) {
                    if (!p.region) throw ParameterError("bang-bang table without region");
                } else {
                    check_phase(PhaseControl(p));
                }
            },
            body_);
    }

    double q_cap_ = 0.0;
    Body body_;
};

inline PolicySpec constant_policy(double q_cap, double u_value) {
    detail::check_cap(q_cap);
    return PolicySpec(q_cap, ConstantControl{u_value});
}

/// The lazy walk u = q_cap.
inline PolicySpec lazy_policy(double q_cap) { return constant_policy(q_cap, q_cap); }

inline PolicySpec two_zone_policy(double q_cap, Site band_halfwidth) {
    return PolicySpec(q_cap, TwoZoneControl{band_halfwidth});
}

inline PolicySpec fast_until_zero_policy(double q_cap) { return PolicySpec(q_cap, FastUntilZeroControl{}); }

inline PolicySpec bang_bang_policy(double q_cap, std::shared_ptr<const RegionBitmap> region) {
    return PolicySpec(q_cap, BangBangControl{std::move(region)});
}

/// A schedule and the scale counts it was built with.
struct Schedule {
    /// Scale count from the closed-form L expression.
    int formula_scales = 0;
    /// Number of focusing phases actually laid out.
    int scales = 0;
    std::vector<ScheduleSegment> segments;

    Step horizon() const { return segments.empty() ? 0 : segments.back().t_end; }
};

inline PolicySpec schedule_policy(double q_cap, const Schedule& s) {
    return PolicySpec(q_cap, ScheduleControl{s.segments});
}

namespace detail {

// floor() with slack so exact integer ratios survive rounding.
inline long long floor_slack(double v) { return static_cast<long long>(std::floor(v + 1e-9)); }

}  // namespace detail

/// Scale count L = floor(-log(T / K0^2) / (2 log beta)).
inline int localization_scale_count(double beta, double K0, Step T) {
    return static_cast<int>(detail::floor_slack(-std::log(static_cast<double>(T) / (K0 * K0)) / (2.0 * std::log(beta))));
}

/// Breakpoints T_l = floor(T - alpha K0^2 sum_{i=1..l} beta^{-2i}), l = 0..L.
inline std::vector<Step> localization_breakpoints(double alpha, double beta, double K0, Step T, int L) {
    std::vector<Step> bp{T};
    double sum = 0.0;
    for (int i = 1; i <= L; ++i) {
        sum += std::pow(beta, -2.0 * i);
        bp.push_back(static_cast<Step>(detail::floor_slack(static_cast<double>(T) - alpha * K0 * K0 * sum)));
    }
    return bp;
}

/// Lazy opening phase [0, T_L), then for l = L..1 a two-zone phase
/// [T_l, T_{l-1}) at scale K = K0 beta^{-l} with slow band floor(beta K).
inline Schedule multiscale_localization_schedule(double q_cap, double alpha, double beta, double K0, Step T) {
    detail::check_cap(q_cap);
    if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("beta must lie in (0, 1)");
    if (!(alpha > 0.0)) throw ParameterError("alpha must be > 0");
    if (!(K0 >= 1.0)) throw ParameterError("K0 must be >= 1");
    if (!(static_cast<double>(T) > alpha * K0 * K0)) throw ParameterError("T must exceed alpha * K0^2");
    const int L = localization_scale_count(beta, K0, T);
    if (L < 1)
        throw DegenerateScheduleError("localization schedule has L = " + std::to_string(L) +
                                      " < 1 scales (T too small for K0, beta)");
    const auto bp = localization_breakpoints(alpha, beta, K0, T, L);
    if (bp[static_cast<std::size_t>(L)] <= 0)
        throw DegenerateScheduleError("focusing phases overrun the horizon (T_L = " +
                                      std::to_string(bp[static_cast<std::size_t>(L)]) + ")");
    Schedule s;
    s.formula_scales = L;
    s.scales = L;
    s.segments.push_back(ScheduleSegment{0, bp[static_cast<std::size_t>(L)], ConstantControl{q_cap}, 0, 0.0, false});
    for (int l = L; l >= 1; --l) {
        const Step a = bp[static_cast<std::size_t>(l)];
        const Step b = bp[static_cast<std::size_t>(l - 1)];
        if (b <= a)
            throw DegenerateScheduleError("phase " + std::to_string(l) + " has zero length after rounding");
        const double K = K0 * std::pow(beta, -l);
        const auto band = static_cast<Site>(detail::floor_slack(beta * K));
        s.segments.push_back(ScheduleSegment{a, b, TwoZoneControl{band}, l, K, false});
    }
    return s;
}

/// Scale count L = floor(log_4(n / A)).
inline int qto1_scale_count(double A, Step n) {
    return static_cast<int>(detail::floor_slack(std::log(static_cast<double>(n) / A) / std::log(4.0)));
}

/// Free simple-walk phase [0, T_L), then for l = L..1 a fast-until-zero phase
/// [T_l, T_{l-1}) of length A 4^l at scale K = 2^l, where
/// T_l = n - A sum_{i=0..l} 4^i. The remaining [T_0, n) is a K = 1 phase.
/// When the phases for the formula L do not fit in n, the largest L' that fits
/// is used (Schedule::scales); Schedule::formula_scales keeps the formula value.
inline Schedule multiscale_qto1_schedule(double q_cap, double A, Step n) {
    detail::check_cap(q_cap);
    if (!(A >= 1.0)) throw ParameterError("A must be >= 1");
    if (!(static_cast<double>(n) > A))
        throw DegenerateScheduleError("q->1 schedule needs n > A (n=" + std::to_string(n) + ")");
    const int L_formula = qto1_scale_count(A, n);
    auto breakpoint = [&](int l) {
        double sum = 0.0;
        for (int i = 0; i <= l; ++i) sum += std::pow(4.0, i);
        return static_cast<Step>(detail::floor_slack(static_cast<double>(n) - A * sum));
    };
    int L = L_formula;
    while (L >= 0 && breakpoint(L) < 0) --L;
    if (L < 0) throw DegenerateScheduleError("q->1 schedule: no phase fits in n");
    Schedule s;
    s.formula_scales = L_formula;
    s.scales = L;
    const Step TL = breakpoint(L);
    if (TL > 0) s.segments.push_back(ScheduleSegment{0, TL, ConstantControl{0.0}, 0, 0.0, false});
    for (int l = L; l >= 0; --l) {
        const Step a = breakpoint(l);
        const Step b = l > 0 ? breakpoint(l - 1) : n;
        if (b <= a) throw DegenerateScheduleError("phase " + std::to_string(l) + " has zero length after rounding");
        s.segments.push_back(ScheduleSegment{a, b, FastUntilZeroControl{}, l, std::pow(2.0, l), true});
    }
    return s;
}

}  // namespace crw
