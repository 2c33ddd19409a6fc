#pragma once

// Exact laws of the controlled walk on Z, carried with a one-bit history flag
// ("has the walk visited 0"), and the one-step kernel
//   P(stay) = u,  P(x -> x-1) = P(x -> x+1) = (1 - u) / 2.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crw/errors.hpp"
#include "crw/scalar.hpp"

namespace crw {

using Site = std::int64_t;
using Step = std::int64_t;

enum class Flag : std::uint8_t { not_hit = 0, hit = 1 };

/// Closed site interval [lo, hi].
struct SiteInterval {
    Site lo = 0;
    Site hi = 0;

    bool contains(Site x) const { return lo <= x && x <= hi; }
    bool operator==(const SiteInterval&) const = default;
};

/// Dense law over the window [offset, offset + size), split by history flag.
/// Values are immutable once built; stepping produces a new distribution.
template <class Real = double>
class Distribution {
public:
    Distribution() = default;
    Distribution(Step time, Site offset, std::vector<Real> not_hit, std::vector<Real> hit)
        : time_(time), offset_(offset), not_hit_(std::move(not_hit)), hit_(std::move(hit)) {
        if (not_hit_.size() != hit_.size())
            throw ParameterError("distribution flag layers differ in size");
        if (time_ < 0) throw ParameterError("distribution time must be >= 0");
    }

    Step time() const { return time_; }
    Site offset() const { return offset_; }
    std::size_t size() const { return hit_.size(); }
    /// Leftmost and rightmost represented sites. Empty window gives hi < lo.
    Site lo() const { return offset_; }
    Site hi() const { return offset_ + static_cast<Site>(size()) - 1; }

    std::span<const Real> layer(Flag f) const {
        return f == Flag::hit ? std::span<const Real>(hit_) : std::span<const Real>(not_hit_);
    }

    Real at(Site x, Flag f) const {
        if (x < lo() || x > hi()) return Real(0);
        return layer(f)[static_cast<std::size_t>(x - offset_)];
    }

    /// Mass at x summed over both flags.
    Real at(Site x) const { return at(x, Flag::not_hit) + at(x, Flag::hit); }

    Real total() const {
        Real s(0);
        for (std::size_t i = 0; i < size(); ++i) s += not_hit_[i] + hit_[i];
        return s;
    }

    Real total(Flag f) const {
        Real s(0);
        for (const Real& v : layer(f)) s += v;
        return s;
    }

    /// Per-site mass with the flag summed out (the plain law of S_t).
    std::vector<Real> collapsed() const {
        std::vector<Real> out(size());
        for (std::size_t i = 0; i < size(); ++i) out[i] = not_hit_[i] + hit_[i];
        return out;
    }

    /// Smallest interval holding all nonzero mass, if any.
    std::optional<SiteInterval> support() const {
        std::optional<SiteInterval> s;
        for (std::size_t i = 0; i < size(); ++i) {
            if (not_hit_[i] != Real(0) || hit_[i] != Real(0)) {
                const Site x = offset_ + static_cast<Site>(i);
                if (!s) s = SiteInterval{x, x};
                s->hi = x;
            }
        }
        return s;
    }

    /// Drops exactly-zero columns at both ends of the window.
    Distribution trimmed() const {
        std::size_t a = 0;
        std::size_t b = size();
        auto zero = [&](std::size_t i) { return not_hit_[i] == Real(0) && hit_[i] == Real(0); };
        while (a < b && zero(a)) ++a;
        while (b > a && zero(b - 1)) --b;
        if (a == 0 && b == size()) return *this;
        return Distribution(time_, offset_ + static_cast<Site>(a),
                            std::vector<Real>(not_hit_.begin() + a, not_hit_.begin() + b),
                            std::vector<Real>(hit_.begin() + a, hit_.begin() + b));
    }

private:
    Step time_ = 0;
    Site offset_ = 0;
    std::vector<Real> not_hit_;
    std::vector<Real> hit_;
};

/// Control values for one time step over a site window, per history flag.
template <class Real = double>
struct ControlRow {
    Step time = 0;
    Real q_cap{0};
    Site offset = 0;
    std::vector<Real> u_not_hit;
    std::vector<Real> u_hit;

    Site lo() const { return offset; }
    Site hi() const { return offset + static_cast<Site>(u_hit.size()) - 1; }

    const Real& u(Site x, Flag f) const {
        const auto i = static_cast<std::size_t>(x - offset);
        return f == Flag::hit ? u_hit[i] : u_not_hit[i];
    }
};

/// Sites that freeze all mass arriving on them (first-passage evolution).
struct AbsorbingSet {
    std::optional<Site> at_or_below;
    std::optional<Site> at_or_above;

    bool contains(Site x) const {
        return (at_or_below && x <= *at_or_below) || (at_or_above && x >= *at_or_above);
    }
    bool empty() const { return !at_or_below && !at_or_above; }
};

/// Unit mass at x. Without an explicit flag, a start at 0 counts as having
/// hit 0 (tau_0 = 0).
template <class Real = double>
Distribution<Real> point_mass(Site x, std::optional<Flag> flag = std::nullopt) {
    const Flag f = flag.value_or(x == 0 ? Flag::hit : Flag::not_hit);
    std::vector<Real> nh{Real(0)};
    std::vector<Real> h{Real(0)};
    (f == Flag::hit ? h : nh)[0] = Real(1);
    return Distribution<Real>(0, x, std::move(nh), std::move(h));
}

namespace detail {

template <class Real>
void check_row(const Distribution<Real>& d, const ControlRow<Real>& row) {
    if (row.time != d.time())
        throw ParameterError("control row time " + std::to_string(row.time) +
                             " does not match distribution time " + std::to_string(d.time()));
    if (d.size() == 0) return;
    if (row.lo() > d.lo() || row.hi() < d.hi())
        throw ParameterError("control row does not cover the distribution support");
    const Real zero(0);
    for (Site x = d.lo(); x <= d.hi(); ++x) {
        for (Flag f : {Flag::not_hit, Flag::hit}) {
            const Real& u = row.u(x, f);
            if (u < zero || u > row.q_cap)
                throw AdmissibilityError("control value " + std::to_string(to_double(u)) + " at t=" +
                                         std::to_string(row.time) + ", x=" + std::to_string(x) +
                                         " outside [0, " + std::to_string(to_double(row.q_cap)) + "]");
        }
    }
}

}  // namespace detail

/// One step of the kernel. Mass arriving at (or staying on) site 0 is moved to
/// the has-hit layer. Sites in `absorbing` keep all their mass.
///
/// Per target site y the accumulation order is fixed:
///   (half-move from y-1 + half-move from y+1) + stay mass at y,
/// and at y = 0 the not-hit sources are added before the hit sources.
template <class Real>
Distribution<Real> step_distribution(const Distribution<Real>& d, const ControlRow<Real>& row,
                                     const AbsorbingSet& absorbing = {}) {
    detail::check_row(d, row);
    const std::size_t m = d.size();
    const Real half = Real(1) / Real(2);
    // Per source: stay and half-move mass for each flag.
    std::vector<Real> stay_nh(m), stay_h(m), move_nh(m), move_h(m);
    const auto nh = d.layer(Flag::not_hit);
    const auto h = d.layer(Flag::hit);
    for (std::size_t i = 0; i < m; ++i) {
        const Site x = d.lo() + static_cast<Site>(i);
        if (!absorbing.empty() && absorbing.contains(x)) {
            stay_nh[i] = nh[i];
            stay_h[i] = h[i];
            move_nh[i] = Real(0);
            move_h[i] = Real(0);
            continue;
        }
        const Real& u0 = row.u(x, Flag::not_hit);
        const Real& u1 = row.u(x, Flag::hit);
        stay_nh[i] = u0 * nh[i];
        stay_h[i] = u1 * h[i];
        move_nh[i] = (Real(1) - u0) * half * nh[i];
        move_h[i] = (Real(1) - u1) * half * h[i];
    }

    const std::size_t out_size = m + 2;
    std::vector<Real> out_nh(out_size, Real(0));
    std::vector<Real> out_h(out_size, Real(0));
    const Site out_lo = d.lo() - 1;
    // Source index of site out_lo + j + k is j + k - 1.
    auto src = [m](std::size_t j, int k) -> std::optional<std::size_t> {
        const auto s = static_cast<std::int64_t>(j) + k - 1;
        if (s < 0 || s >= static_cast<std::int64_t>(m)) return std::nullopt;
        return static_cast<std::size_t>(s);
    };
    for (std::size_t j = 0; j < out_size; ++j) {
        const Site y = out_lo + static_cast<Site>(j);
        const auto left = src(j, -1);
        const auto centre = src(j, 0);
        const auto right = src(j, 1);
        Real in_nh(0), in_h(0);
        if (left) { in_nh += move_nh[*left]; in_h += move_h[*left]; }
        if (right) { in_nh += move_nh[*right]; in_h += move_h[*right]; }
        Real st_nh(0), st_h(0);
        if (centre) { st_nh = stay_nh[*centre]; st_h = stay_h[*centre]; }
        if (y == 0) {
            out_h[j] = (in_nh + in_h) + (st_nh + st_h);
        } else {
            out_nh[j] = in_nh + st_nh;
            out_h[j] = in_h + st_h;
        }
    }
    return Distribution<Real>(d.time() + 1, out_lo, std::move(out_nh), std::move(out_h));
}

/// Moves has-hit mass away from 0 back to not-hit; mass on 0 stays has-hit.
/// Used at the start of a phase that measures tau_0 from the phase start.
template <class Real>
Distribution<Real> reset_flags(const Distribution<Real>& d) {
    std::vector<Real> nh(d.size()), h(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Site x = d.lo() + static_cast<Site>(i);
        const Real both = d.layer(Flag::not_hit)[i] + d.layer(Flag::hit)[i];
        if (x == 0) {
            nh[i] = Real(0);
            h[i] = both;
        } else {
            nh[i] = both;
            h[i] = Real(0);
        }
    }
    return Distribution<Real>(d.time(), d.offset(), std::move(nh), std::move(h));
}

/// Total mass on [a, b], both flags.
template <class Real>
Real interval_mass(const Distribution<Real>& d, Site a, Site b) {
    if (a > b) throw ParameterError("interval_mass requires a <= b");
    Real s(0);
    const Site lo = std::max(a, d.lo());
    const Site hi = std::min(b, d.hi());
    for (Site x = lo; x <= hi; ++x) s += d.at(x);
    return s;
}

template <class Real>
Real interval_mass(const Distribution<Real>& d, SiteInterval iv) {
    return interval_mass(d, iv.lo, iv.hi);
}

/// Largest |P(x) - P(-x)| over the window (flags summed).
template <class Real>
double symmetry_defect(const Distribution<Real>& d) {
    double worst = 0.0;
    const Site r = std::max(std::abs(d.lo()), std::abs(d.hi()));
    for (Site x = 1; x <= r; ++x) {
        const double diff = to_double(Real(d.at(x) - d.at(-x)));
        worst = std::max(worst, diff < 0 ? -diff : diff);
    }
    return worst;
}

}  // namespace crw
