#pragma once

// Backward induction for ext_{u in U_q} P(S_n in target | S_t = x).
//
// The one-step objective u V(x) + (1 - u)/2 (V(x-1) + V(x+1)) is affine in u,
// so the extremum over [0, q] sits at u = 0 or u = q; the solver records which
// one per cell and breaks exact ties toward u = 0.

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "crw/errors.hpp"
#include "crw/lattice.hpp"
#include "crw/policy.hpp"

namespace crw {

enum class Objective { max, min };

inline std::string to_string(Objective o) { return o == Objective::max ? "max" : "min"; }

inline Objective parse_objective(const std::string& s) {
    if (s == "max") return Objective::max;
    if (s == "min") return Objective::min;
    throw ParameterError("objective must be 'max' or 'min', got '" + s + "'");
}

/// Value function V_t(x) on the window [lo, hi] for t = 0..n. Full rows are
/// kept only when requested; V_0 is always available.
template <class Real = double>
class ValueTable {
public:
    ValueTable(Step n, Site lo, Site hi, Objective obj, SiteInterval target)
        : n_(n), lo_(lo), hi_(hi), objective_(obj), target_(target) {}

    Step horizon() const { return n_; }
    Site lo() const { return lo_; }
    Site hi() const { return hi_; }
    Objective objective() const { return objective_; }
    SiteInterval target() const { return target_; }
    bool has_all_rows() const { return !rows_.empty(); }

    /// V_0(x); zero outside the window.
    Real initial(Site x) const { return lookup(initial_, x); }
    const std::vector<Real>& initial_row() const { return initial_; }

    /// V_t(x). Requires all rows to have been kept.
    Real value(Step t, Site x) const {
        if (rows_.empty()) throw ParameterError("value table was solved without keeping all rows");
        if (t < 0 || t > n_) throw ParameterError("value table time out of range");
        return lookup(rows_[static_cast<std::size_t>(t)], x);
    }

    /// CSV (t, x, value) for |x| <= cutoff.
    void write_csv(std::ostream& os, Site cutoff) const {
        if (rows_.empty()) throw ParameterError("value table CSV export needs all rows");
        os << "t,x,value\n";
        os.precision(17);
        for (Step t = 0; t <= n_; ++t)
            for (Site x = std::max(lo_, -cutoff); x <= std::min(hi_, cutoff); ++x)
                os << t << ',' << x << ',' << to_double(value(t, x)) << '\n';
    }

    void set_initial(std::vector<Real> row) { initial_ = std::move(row); }
    void set_rows(std::vector<std::vector<Real>> rows) { rows_ = std::move(rows); }

private:
    Real lookup(const std::vector<Real>& row, Site x) const {
        if (x < lo_ || x > hi_) return Real(0);
        return row[static_cast<std::size_t>(x - lo_)];
    }

    Step n_;
    Site lo_, hi_;
    Objective objective_;
    SiteInterval target_;
    std::vector<Real> initial_;
    std::vector<std::vector<Real>> rows_;
};

/// Extremal control: u = q_cap on the region, 0 elsewhere.
struct BangBangPolicy {
    double q_cap = 0.0;
    Objective objective = Objective::max;
    std::shared_ptr<const RegionBitmap> region;

    PolicySpec to_policy() const { return bang_bang_policy(q_cap, region); }
};

template <class Real = double>
struct ExtremalSolution {
    ValueTable<Real> values;
    BangBangPolicy policy;
};

struct SolveOptions {
    /// Keep V_t for every t (O(n^2) reals). Otherwise only V_0 and the region.
    bool keep_values = true;
};

template <class Real = double>
ExtremalSolution<Real> solve_extremal(double q_cap, Step n, Objective objective, SiteInterval target = {0, 0},
                                      SolveOptions options = {}) {
    if (!(q_cap >= 0.0 && q_cap < 1.0)) throw ParameterError("q must lie in [0, 1)");
    if (n < 1) throw ParameterError("n must be >= 1");
    if (target.lo > target.hi) throw ParameterError("target interval is empty");
    const Site lo = std::min<Site>(-n, target.lo - n);
    const Site hi = std::max<Site>(n, target.hi + n);
    const auto width = static_cast<std::size_t>(hi - lo + 1);

    ValueTable<Real> table(n, lo, hi, objective, target);
    auto region = std::make_shared<RegionBitmap>(n, lo, hi);

    const Real q = from_double<Real>(q_cap);
    const Real half = Real(1) / Real(2);
    const Real move_scale = (Real(1) - q) * half;
    const Real zero(0);

    std::vector<Real> next(width, zero);
    for (Site x = target.lo; x <= target.hi; ++x) next[static_cast<std::size_t>(x - lo)] = Real(1);
    std::vector<std::vector<Real>> rows;
    if (options.keep_values) rows.assign(static_cast<std::size_t>(n + 1), {});
    if (options.keep_values) rows[static_cast<std::size_t>(n)] = next;

    std::vector<Real> cur(width, zero);
    const bool maximize = objective == Objective::max;
    for (Step t = n - 1; t >= 0; --t) {
        for (std::size_t i = 0; i < width; ++i) {
            const Real& left = i > 0 ? next[i - 1] : zero;
            const Real& right = i + 1 < width ? next[i + 1] : zero;
            const Real sum = left + right;
            const Real move_only = half * sum;
            const Real with_stay = move_scale * sum + q * next[i];
            const bool pick_stay = maximize ? (with_stay > move_only) : (with_stay < move_only);
            cur[i] = pick_stay ? with_stay : move_only;
            if (pick_stay) region->set(t, lo + static_cast<Site>(i), true);
        }
        std::swap(cur, next);
        if (options.keep_values) rows[static_cast<std::size_t>(t)] = next;
    }
    table.set_initial(next);
    if (options.keep_values) table.set_rows(std::move(rows));
    return ExtremalSolution<Real>{std::move(table), BangBangPolicy{q_cap, objective, std::move(region)}};
}

/// Cells of the extremal region at one time, as maximal intervals.
struct RegionSlice {
    Step t = 0;
    std::vector<SiteInterval> intervals;
    /// max |x| over the slice, or -1 when the slice is empty.
    Site max_radius = -1;
};

inline std::vector<RegionSlice> extract_region(const BangBangPolicy& bb) {
    const RegionBitmap& r = *bb.region;
    std::vector<RegionSlice> out;
    out.reserve(static_cast<std::size_t>(r.horizon()));
    for (Step t = 0; t < r.horizon(); ++t) {
        RegionSlice s;
        s.t = t;
        const auto& row = r.row(t);
        std::optional<Site> open;
        for (std::size_t i = 0; i <= row.size(); ++i) {
            const bool on = i < row.size() && row[i];
            const Site x = r.lo() + static_cast<Site>(i);
            if (on && !open) open = x;
            if (!on && open) {
                s.intervals.push_back({*open, x - 1});
                s.max_radius = std::max({s.max_radius, std::abs(*open), std::abs(x - 1)});
                open.reset();
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace crw
