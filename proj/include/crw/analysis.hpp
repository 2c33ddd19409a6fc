#pragma once

// Power-law fits, exponent sweeps, structural checks of the two-zone chain and
// the calibration routines that pick witnesses for the existence statements
// behind the multi-scale controls.

#include <boost/math/distributions/binomial.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "crw/dp.hpp"
#include "crw/errors.hpp"
#include "crw/evolve.hpp"
#include "crw/lattice.hpp"
#include "crw/montecarlo.hpp"
#include "crw/policy.hpp"
#include "crw/scalar.hpp"

namespace crw {

// ---------------------------------------------------------------------------
// Exponent fits

struct ExponentPoint {
    Step n = 0;
    double p = 0.0;
};

struct ExponentFit {
    std::vector<ExponentPoint> points;  // points actually fitted
    double sigma_hat = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<double> residuals;
    Step n_min = 0;
    Step n_max = 0;
    Step cutoff = 0;  // points with n < cutoff were excluded
};

inline constexpr Step kDefaultFitCutoff = 128;

/// OLS of log p = -sigma log n + b over points with n >= cutoff.
inline ExponentFit fit_exponent(const std::vector<ExponentPoint>& points, Step cutoff = kDefaultFitCutoff) {
    ExponentFit fit;
    fit.cutoff = cutoff;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (i > 0 && points[i].n <= points[i - 1].n) throw ParameterError("fit_exponent: n must be strictly increasing");
        if (points[i].n < cutoff) continue;
        if (!(points[i].p > 0.0))
            throw ParameterError("fit_exponent: nonpositive probability at n=" + std::to_string(points[i].n) +
                                 " (odd n with a parity-constrained policy?)");
        fit.points.push_back(points[i]);
    }
    if (fit.points.size() < 3) throw ParameterError("fit_exponent needs at least 3 points with n >= cutoff");
    const auto m = static_cast<double>(fit.points.size());
    std::vector<double> xs, ys;
    for (const auto& pt : fit.points) {
        xs.push_back(-std::log(static_cast<double>(pt.n)));
        ys.push_back(std::log(pt.p));
    }
    double xbar = 0.0, ybar = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xbar += xs[i];
        ybar += ys[i];
    }
    xbar /= m;
    ybar /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
        sxy += (xs[i] - xbar) * (ys[i] - ybar);
        syy += (ys[i] - ybar) * (ys[i] - ybar);
    }
    fit.sigma_hat = sxy / sxx;
    fit.intercept = ybar - fit.sigma_hat * xbar;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - (fit.sigma_hat * xs[i] + fit.intercept);
        fit.residuals.push_back(r);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : (ss_res == 0.0 ? 1.0 : 0.0);
    fit.n_min = fit.points.front().n;
    fit.n_max = fit.points.back().n;
    return fit;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepPolicy { constant, simple, two_zone, fast_until_zero, multiscale, qto1, optimal };

inline std::string to_string(SweepPolicy k) {
    switch (k) {
        case SweepPolicy::constant: return "constant";
        case SweepPolicy::simple: return "simple";
        case SweepPolicy::two_zone: return "two-zone";
        case SweepPolicy::fast_until_zero: return "fast-until-zero";
        case SweepPolicy::multiscale: return "multiscale";
        case SweepPolicy::qto1: return "qto1";
        case SweepPolicy::optimal: return "optimal";
    }
    return "unknown";
}

inline SweepPolicy parse_sweep_policy(const std::string& s) {
    for (auto k : {SweepPolicy::constant, SweepPolicy::simple, SweepPolicy::two_zone, SweepPolicy::fast_until_zero,
                   SweepPolicy::multiscale, SweepPolicy::qto1, SweepPolicy::optimal})
        if (to_string(k) == s) return k;
    throw ParameterError("unknown policy kind '" + s + "'");
}

enum class SweepMethod { exact, mc };

inline std::string to_string(SweepMethod m) { return m == SweepMethod::exact ? "exact" : "mc"; }

struct SweepParams {
    Site band = 8;        // two-zone
    double alpha = 0.8;   // multiscale
    double beta = 0.25;
    double K0 = 2.0;
    double A = 4.0;       // qto1
    std::uint64_t trials = 0;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    Step fit_cutoff = kDefaultFitCutoff;
};

struct SweepRecord {
    std::string policy_kind;
    double q = 0.0;
    Step n = 0;
    double p = 0.0;
    SweepMethod method = SweepMethod::exact;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct SweepResult {
    std::vector<SweepRecord> records;
    std::optional<ExponentFit> fit;
    std::string fit_error;
};

/// The control a sweep uses at horizon n.
inline PolicySpec sweep_policy(SweepPolicy kind, double q, Step n, const SweepParams& prm) {
    switch (kind) {
        case SweepPolicy::constant: return lazy_policy(q);
        case SweepPolicy::simple: return constant_policy(q, 0.0);
        case SweepPolicy::two_zone: return two_zone_policy(q, prm.band);
        case SweepPolicy::fast_until_zero: return fast_until_zero_policy(q);
        case SweepPolicy::multiscale:
            return schedule_policy(q, multiscale_localization_schedule(q, prm.alpha, prm.beta, prm.K0, n));
        case SweepPolicy::qto1: return schedule_policy(q, multiscale_qto1_schedule(q, prm.A, n));
        case SweepPolicy::optimal:
            return solve_extremal(q, n, Objective::max, {0, 0}, SolveOptions{false}).policy.to_policy();
    }
    throw ParameterError("unknown sweep policy");
}

namespace detail {

/// Runs fn(i) for i in [0, count) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
}

inline bool time_homogeneous(SweepPolicy k) {
    return k == SweepPolicy::constant || k == SweepPolicy::simple || k == SweepPolicy::two_zone ||
           k == SweepPolicy::fast_until_zero;
}

}  // namespace detail

/// P(S_n = 0) from 0 over n_grid, exactly or by sampling, plus the power-law fit.
inline SweepResult exponent_sweep(SweepPolicy kind, double q, const std::vector<Step>& n_grid, SweepMethod method,
                                  const SweepParams& prm = {}) {
    if (n_grid.empty()) throw ParameterError("empty n grid");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        if (n_grid[i] < 1) throw ParameterError("n grid values must be >= 1");
        if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ParameterError("n grid must be strictly increasing");
    }
    if (method == SweepMethod::mc) {
        if (!prm.seed) throw ParameterError("Monte Carlo sweep requires an explicit seed");
        if (prm.trials < 1) throw ParameterError("Monte Carlo sweep requires trials >= 1");
    }
    SweepResult out;
    out.records.resize(n_grid.size());
    auto base = [&](std::size_t i) {
        SweepRecord r;
        r.policy_kind = to_string(kind);
        r.q = q;
        r.n = n_grid[i];
        r.method = method;
        return r;
    };
    if (method == SweepMethod::exact && detail::time_homogeneous(kind)) {
        const PolicySpec policy = sweep_policy(kind, q, n_grid.back(), prm);
        std::size_t k = 0;
        evolve<double>(policy, n_grid.back(), 0, [&](const Distribution<double>& d) {
            while (k < n_grid.size() && n_grid[k] == d.time()) {
                auto r = base(k);
                r.p = r.ci_low = r.ci_high = d.at(0);
                out.records[k++] = r;
            }
        });
    } else {
        detail::parallel_for(n_grid.size(), method == SweepMethod::exact ? prm.threads : 1, [&](std::size_t i) {
            auto r = base(i);
            const Step n = n_grid[i];
            if (method == SweepMethod::exact) {
                if (kind == SweepPolicy::optimal)
                    r.p = to_double(solve_extremal(q, n, Objective::max, {0, 0}, SolveOptions{false}).values.initial(0));
                else
                    r.p = hit_probability<double>(sweep_policy(kind, q, n, prm), n, 0);
                r.ci_low = r.ci_high = r.p;
            } else {
                // Grid points draw from disjoint sub-streams keyed by n.
                const auto est = estimate_hit(sweep_policy(kind, q, n, prm), n, 0, {0, 0}, prm.trials,
                                              mix64(*prm.seed ^ mix64(static_cast<std::uint64_t>(n))), prm.threads)
                                     .estimate;
                r.p = est.p_hat;
                r.ci_low = est.ci_low;
                r.ci_high = est.ci_high;
            }
            out.records[i] = r;
        });
    }
    std::vector<ExponentPoint> pts;
    for (const auto& r : out.records) pts.push_back({r.n, r.p});
    try {
        out.fit = fit_exponent(pts, prm.fit_cutoff);
    } catch (const ParameterError& e) {
        out.fit_error = e.what();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Two-zone chain as a reversible chain with conductances

/// Conductances w(x, x+1) = 1, w(x, x) = 2q/(1-q) on |x| <= band and 0
/// outside; reversing measure pi(x) = sum_y w(x, y).
template <class Real = double>
struct ChainSpec {
    Real q{0};
    Site band = 0;

    bool inside(Site x) const { return x <= band && x >= -band; }

    Real conductance(Site x, Site y) const {
        if (x == y) return inside(x) ? Real(2) * q / (Real(1) - q) : Real(0);
        if (x - y == 1 || y - x == 1) return Real(1);
        return Real(0);
    }

    Real pi(Site x) const { return conductance(x, x - 1) + conductance(x, x + 1) + conductance(x, x); }

    Real transition(Site x, Site y) const { return conductance(x, y) / pi(x); }
};

/// max over adjacent pairs in [-window, window] of |pi_x p(x,y) - pi_y p(y,x)|.
template <class Real>
Real reversibility_check(const ChainSpec<Real>& chain, Site window) {
    Real worst(0);
    for (Site x = -window; x < window; ++x) {
        for (Site y : {x + 1}) {
            Real r = chain.pi(x) * chain.transition(x, y) - chain.pi(y) * chain.transition(y, x);
            if (r < Real(0)) r = -r;
            if (r > worst) worst = r;
        }
    }
    return worst;
}

/// max over x in [-window, window] of the gap between the chain's kernel and
/// the two-zone control kernel (stay u, move (1-u)/2).
template <class Real>
Real kernel_mismatch(const ChainSpec<Real>& chain, Site window) {
    Real worst(0);
    auto upd = [&](Real r) {
        if (r < Real(0)) r = -r;
        if (r > worst) worst = r;
    };
    for (Site x = -window; x <= window; ++x) {
        const Real u = chain.inside(x) ? chain.q : Real(0);
        upd(chain.transition(x, x) - u);
        upd(chain.transition(x, x + 1) - (Real(1) - u) / Real(2));
        upd(chain.transition(x, x - 1) - (Real(1) - u) / Real(2));
    }
    return worst;
}

struct HeatKernelRow {
    Step t = 0;
    double sup_scaled = 0.0;  // max over probed (x, y) of p^t(x, y) sqrt(t)
    Site arg_x = 0, arg_y = 0;
    double running_max = 0.0;
};

struct HeatKernelProfile {
    double q = 0.0;
    Site band = 0;
    std::vector<Site> probes;
    std::vector<HeatKernelRow> rows;
    double max_total_mass = 0.0;
    /// running_max(t_max) / running_max(largest t <= t_max / 2) - 1.
    double top_octave_increase = 0.0;
    bool bounded = true;
};

inline HeatKernelProfile heat_kernel_profile(double q, Site band, std::vector<Step> t_grid, std::vector<Site> probes) {
    if (t_grid.empty() || probes.empty()) throw ParameterError("heat kernel profile needs t grid and probes");
    std::sort(t_grid.begin(), t_grid.end());
    if (t_grid.front() < 1) throw ParameterError("t grid must be positive");
    const PolicySpec policy = two_zone_policy(q, band);
    std::map<Step, HeatKernelRow> rows;
    for (Step t : t_grid) rows[t].t = t;
    double max_mass = 0.0;
    for (Site x : probes) {
        evolve<double>(policy, t_grid.back(), x, [&](const Distribution<double>& d) {
            auto it = rows.find(d.time());
            if (it == rows.end()) return;
            max_mass = std::max(max_mass, d.total());
            const double rt = std::sqrt(static_cast<double>(d.time()));
            for (Site y : probes) {
                const double v = d.at(y) * rt;
                if (v > it->second.sup_scaled) {
                    it->second.sup_scaled = v;
                    it->second.arg_x = x;
                    it->second.arg_y = y;
                }
            }
        });
    }
    HeatKernelProfile prof;
    prof.q = q;
    prof.band = band;
    prof.probes = probes;
    prof.max_total_mass = max_mass;
    double run = 0.0;
    for (auto& [t, r] : rows) {
        run = std::max(run, r.sup_scaled);
        r.running_max = run;
        if (!std::isfinite(run)) prof.bounded = false;
        prof.rows.push_back(r);
    }
    const Step tmax = prof.rows.back().t;
    const HeatKernelRow* half = nullptr;
    for (const auto& r : prof.rows)
        if (2 * r.t <= tmax) half = &r;
    if (half && half->running_max > 0.0) prof.top_octave_increase = prof.rows.back().running_max / half->running_max - 1.0;
    return prof;
}

// ---------------------------------------------------------------------------
// Two-zone calibration: sum_{x=-K..K} P_x(S_{alpha K^2} = y) > 1 + eps on |y| <= beta K

struct Lemma5Config {
    std::vector<double> betas{0.5, 0.25, 0.125};
    std::vector<double> K0s{2, 4, 8, 16};
    std::vector<double> alphas{0.05, 0.1, 0.2, 0.4, 0.8};
    double eps_min = 0.05;
    Step reference_horizon = 4096;
    int min_scales = 2;
};

struct Lemma5Scale {
    Site K = 0;
    Step steps = 0;  // floor(alpha K^2)
    Site band = 0;   // floor(beta K)
    std::vector<Site> ys;
    /// (1/(1-q)) [P_y(S in [-K,K]) - q P_y(S in [-band,band])]
    std::vector<double> identity_sums;
    /// sum_x P_x(S = y) by evolving the counting measure on [-K, K]
    std::vector<double> direct_sums;
    double min_sum = 0.0;
    double max_crosscheck_diff = 0.0;
};

struct Lemma5Certificate {
    double q = 0.0;
    double alpha = 0.0, beta = 0.0, K0 = 0.0;
    double eps = 0.0;
    double gain = 0.0;  // log(1 + eps) / (2 |log beta|)
    Step reference_horizon = 0;
    int scales = 0;
    std::vector<Lemma5Scale> per_scale;
    double max_crosscheck_diff = 0.0;
};

namespace detail {

inline Step lemma5_steps(double alpha, double K) { return static_cast<Step>(floor_slack(alpha * K * K)); }
inline Site lemma5_band(double beta, double K) { return static_cast<Site>(floor_slack(beta * K)); }

/// sum_{x=-K..K} P_x(S_t = y) for all y, by evolving the counting measure.
inline Distribution<double> lemma5_direct(double q, Site K, Step t, Site band) {
    const auto w = static_cast<std::size_t>(2 * K + 1);
    std::vector<double> nh(w, 1.0), h(w, 0.0);
    nh[static_cast<std::size_t>(K)] = 0.0;
    h[static_cast<std::size_t>(K)] = 1.0;
    return evolve_from(two_zone_policy(q, band), Distribution<double>(0, -K, std::move(nh), std::move(h)), t);
}

inline double lemma5_identity(double q, Site K, Step t, Site band, Site y) {
    const auto d = evolve<double>(two_zone_policy(q, band), t, y);
    return (interval_mass(d, -K, K) - q * interval_mass(d, -band, band)) / (1.0 - q);
}

inline Lemma5Scale lemma5_scale(double q, double alpha, double beta, double K) {
    Lemma5Scale s;
    s.K = static_cast<Site>(K);
    s.steps = lemma5_steps(alpha, K);
    s.band = lemma5_band(beta, K);
    const auto direct = lemma5_direct(q, s.K, s.steps, s.band);
    s.min_sum = 1e300;
    for (Site y = -s.band; y <= s.band; ++y) {
        const double id = lemma5_identity(q, s.K, s.steps, s.band, y);
        const double dir = direct.at(y);
        s.ys.push_back(y);
        s.identity_sums.push_back(id);
        s.direct_sums.push_back(dir);
        s.min_sum = std::min(s.min_sum, id);
        s.max_crosscheck_diff = std::max(s.max_crosscheck_diff, std::abs(id - dir));
    }
    return s;
}

/// Cheap margin for the search: min over K, y of the direct sums, minus 1.
inline double lemma5_search_margin(double q, double alpha, double beta, double K0) {
    double worst = 1e300;
    for (double K : {K0, 2 * K0, 4 * K0}) {
        const Site band = lemma5_band(beta, K);
        const auto d = lemma5_direct(q, static_cast<Site>(K), lemma5_steps(alpha, K), band);
        for (Site y = -band; y <= band; ++y) worst = std::min(worst, d.at(y));
    }
    return worst - 1.0;
}

inline Lemma5Certificate lemma5_certify(double q, double alpha, double beta, double K0, Step horizon) {
    Lemma5Certificate c;
    c.q = q;
    c.alpha = alpha;
    c.beta = beta;
    c.K0 = K0;
    c.reference_horizon = horizon;
    c.scales = multiscale_localization_schedule(q, alpha, beta, K0, horizon).scales;
    double worst = 1e300;
    for (double K : {K0, 2 * K0, 4 * K0}) {
        c.per_scale.push_back(lemma5_scale(q, alpha, beta, K));
        worst = std::min(worst, c.per_scale.back().min_sum);
        c.max_crosscheck_diff = std::max(c.max_crosscheck_diff, c.per_scale.back().max_crosscheck_diff);
    }
    c.eps = worst - 1.0;
    c.gain = std::log1p(c.eps) / (2.0 * std::abs(std::log(beta)));
    return c;
}

}  // namespace detail

inline constexpr double kCrosscheckTolerance = 1e-12;
inline constexpr double kClosedFormTolerance = 1e-10;

/// Grid search for (alpha, beta, K0, eps). Feasible tuples give a
/// localization schedule with at least `min_scales` phases at the reference
/// horizon and a margin eps >= eps_min; the one with the largest exponent
/// gain log(1+eps)/(2|log beta|) wins, ties going to smaller K0 then alpha.
inline Lemma5Certificate calibrate_lemma5(double q, const Lemma5Config& cfg = {}) {
    if (!(q > 0.0 && q < 1.0)) throw ParameterError("calibrate lemma5 needs q in (0, 1)");
    struct Best {
        double gain, alpha, beta, K0, eps;
    };
    std::optional<Best> best;
    double best_margin_seen = -1e300;
    for (double K0 : cfg.K0s) {
        for (double alpha : cfg.alphas) {
            for (double beta : cfg.betas) {
                try {
                    const auto s = multiscale_localization_schedule(q, alpha, beta, K0, cfg.reference_horizon);
                    if (s.scales < cfg.min_scales) continue;
                } catch (const ParameterError&) {
                    continue;
                }
                const double margin = detail::lemma5_search_margin(q, alpha, beta, K0);
                best_margin_seen = std::max(best_margin_seen, margin);
                if (margin < cfg.eps_min) continue;
                const double gain = std::log1p(margin) / (2.0 * std::abs(std::log(beta)));
                if (!best || gain > best->gain + 1e-12) best = Best{gain, alpha, beta, K0, margin};
            }
        }
    }
    if (!best)
        throw CalibrationError("lemma5 calibration found no feasible (alpha, beta, K0) for q=" + std::to_string(q) +
                               "; best margin " + std::to_string(best_margin_seen));
    auto cert = detail::lemma5_certify(q, best->alpha, best->beta, best->K0, cfg.reference_horizon);
    if (cert.max_crosscheck_diff > kCrosscheckTolerance)
        throw InvariantViolation("reversibility identity disagrees with direct sums by " +
                                 std::to_string(cert.max_crosscheck_diff));
    if (!(cert.eps > 0.0)) throw CalibrationError("lemma5 certificate margin is not positive");
    return cert;
}

struct ReplayResult {
    bool identical = true;
    double max_abs_diff = 0.0;
    std::size_t values_checked = 0;
};

namespace detail {

inline void replay_compare(ReplayResult& r, double stored, double fresh) {
    ++r.values_checked;
    if (stored != fresh) r.identical = false;
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(stored - fresh));
}

}  // namespace detail

/// Recomputes every number in a stored certificate.
inline ReplayResult replay_lemma5(const Lemma5Certificate& c) {
    const auto fresh = detail::lemma5_certify(c.q, c.alpha, c.beta, c.K0, c.reference_horizon);
    ReplayResult r;
    detail::replay_compare(r, c.eps, fresh.eps);
    if (fresh.per_scale.size() != c.per_scale.size() || fresh.scales != c.scales) r.identical = false;
    for (std::size_t k = 0; k < std::min(fresh.per_scale.size(), c.per_scale.size()); ++k) {
        const auto& a = c.per_scale[k];
        const auto& b = fresh.per_scale[k];
        if (a.identity_sums.size() != b.identity_sums.size() || a.direct_sums.size() != b.direct_sums.size()) {
            r.identical = false;
            continue;
        }
        for (std::size_t i = 0; i < a.identity_sums.size(); ++i) {
            detail::replay_compare(r, a.identity_sums[i], b.identity_sums[i]);
            detail::replay_compare(r, a.direct_sums[i], b.direct_sums[i]);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Fast-until-zero calibration

/// P_0(tau_a > t) for the simple walk, tau_a the first hitting time of a > 0.
/// Reflection gives P(tau_a > t) = P(S_t in [-a, a-1]).
inline double srw_no_hit_probability(Site a, Step t) {
    if (a < 1) throw ParameterError("srw_no_hit_probability needs a >= 1");
    if (t == 0) return 1.0;
    const boost::math::binomial_distribution<double> bin(static_cast<double>(t), 0.5);
    // S_t = 2B - t, so S_t in [-a, a-1] iff B in [ceil((t-a)/2), floor((t+a-1)/2)].
    const Step lo = t - a <= 0 ? 0 : (t - a + 1) / 2;
    const Step hi = std::min<Step>(t, (t + a - 1) / 2);
    if (hi < lo) return 0.0;
    const double upper = boost::math::cdf(bin, static_cast<double>(hi));
    const double lower = lo > 0 ? boost::math::cdf(bin, static_cast<double>(lo - 1)) : 0.0;
    return upper - lower;
}

/// P_0(no exit from (-K, K) within s steps) for the lazy walk u = q, by the
/// spectral expansion of the walk killed at +-K:
///   (1/K) sum_{j odd < 2K} (-1)^{(j-1)/2} cot(pi j / 4K) (q + (1-q) cos(pi j / 2K))^s.
inline double lazy_survival_probability(double q, Site K, Step s) {
    if (K < 1) throw ParameterError("lazy_survival_probability needs K >= 1");
    const double pi = std::numbers::pi;
    double sum = 0.0;
    for (Site j = 1; j < 2 * K; j += 2) {
        const double sign = ((j - 1) / 2) % 2 == 0 ? 1.0 : -1.0;
        const double lambda = q + (1.0 - q) * std::cos(pi * static_cast<double>(j) / (2.0 * static_cast<double>(K)));
        const double weight = 1.0 / std::tan(pi * static_cast<double>(j) / (4.0 * static_cast<double>(K)));
        sum += sign * weight * std::pow(lambda, static_cast<double>(s));
    }
    return sum / static_cast<double>(K);
}

/// P_0(tau_{2K} > A K^2) for the simple walk.
inline double lemma6_fast_phase_failure(double A, Site K) {
    const auto t = static_cast<Step>(std::ceil(A * static_cast<double>(K) * static_cast<double>(K) - 1e-9));
    return srw_no_hit_probability(2 * K, t);
}

/// P_0(tau_{-K,K} < A K^2) for the lazy walk u = q.
inline double lemma6_slow_phase_failure(double A, double q, Site K) {
    const auto t = static_cast<Step>(std::ceil(A * static_cast<double>(K) * static_cast<double>(K) - 1e-9));
    return 1.0 - lazy_survival_probability(q, K, t - 1);
}

struct Lemma6Config {
    std::vector<Site> Ks{16, 64, 256};
    int A_max_log2 = 20;
    int q_max_exponent = 40;  // q grid 1 - 2^-k, k = 1..q_max_exponent
    Site fast_check_K = 4;    // absorbing-evolution cross-check scales
    Site slow_check_K = 16;
};

struct Lemma6Scale {
    Site K = 0;
    Step steps = 0;
    double fast_failure = 0.0;  // P_0(tau_{2K} > A K^2), simple walk
    double slow_failure = 0.0;  // P_0(tau_{-K,K} < A K^2), lazy walk
};

struct Lemma6Certificate {
    double eps = 0.0;
    double A = 0.0;
    double q = 0.0;
    int q_exponent = 0;
    std::vector<Lemma6Scale> per_scale;
    Site fast_check_K = 0;
    double fast_check_closed = 0.0, fast_check_evolved = 0.0;
    Site slow_check_K = 0;
    double slow_check_closed = 0.0, slow_check_evolved = 0.0;
    double max_crosscheck_diff = 0.0;
};

namespace detail {

inline Lemma6Certificate lemma6_certify(double eps, double A, int k, const Lemma6Config& cfg) {
    Lemma6Certificate c;
    c.eps = eps;
    c.A = A;
    c.q_exponent = k;
    c.q = 1.0 - std::ldexp(1.0, -k);
    for (Site K : cfg.Ks) {
        Lemma6Scale s;
        s.K = K;
        s.steps = static_cast<Step>(std::ceil(A * static_cast<double>(K) * static_cast<double>(K) - 1e-9));
        s.fast_failure = lemma6_fast_phase_failure(A, K);
        s.slow_failure = lemma6_slow_phase_failure(A, c.q, K);
        c.per_scale.push_back(s);
    }
    // Absorbing-boundary lattice evolution at small scales.
    {
        const Site K = cfg.fast_check_K;
        const auto t = static_cast<Step>(std::ceil(A * static_cast<double>(K * K) - 1e-9));
        c.fast_check_K = K;
        c.fast_check_closed = lemma6_fast_phase_failure(A, K);
        const auto d = evolve_absorbing<double>(constant_policy(0.0, 0.0), t, 0, AbsorbingSet{std::nullopt, 2 * K});
        c.fast_check_evolved = 1.0 - d.at(2 * K);
    }
    {
        const Site K = cfg.slow_check_K;
        const auto t = static_cast<Step>(std::ceil(A * static_cast<double>(K * K) - 1e-9));
        c.slow_check_K = K;
        c.slow_check_closed = lemma6_slow_phase_failure(A, c.q, K);
        const auto d = evolve_absorbing<double>(lazy_policy(c.q), t - 1, 0, AbsorbingSet{-K, K});
        c.slow_check_evolved = d.at(-K) + d.at(K);
    }
    c.max_crosscheck_diff = std::max(std::abs(c.fast_check_closed - c.fast_check_evolved),
                                     std::abs(c.slow_check_closed - c.slow_check_evolved));
    return c;
}

}  // namespace detail

/// Smallest A = 2^j with P_0(tau_{2K} > A K^2) < eps/2 at every K, then the
/// smallest q = 1 - 2^-k with P_0(tau_{-K,K} < A K^2) < eps/2 at every K.
inline Lemma6Certificate calibrate_lemma6(double eps, const Lemma6Config& cfg = {}) {
    if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("calibrate lemma6 needs eps in (0, 1)");
    std::optional<double> A;
    double best_fast = 1.0;
    for (int j = 0; j <= cfg.A_max_log2 && !A; ++j) {
        const double cand = std::ldexp(1.0, j);
        double worst = 0.0;
        for (Site K : cfg.Ks) worst = std::max(worst, lemma6_fast_phase_failure(cand, K));
        best_fast = std::min(best_fast, worst);
        if (worst < eps / 2.0) A = cand;
    }
    if (!A)
        throw CalibrationError("lemma6: no A on the doubling grid meets the fast-phase bound; best " +
                               std::to_string(best_fast));
    std::optional<int> k_found;
    double best_slow = 1.0;
    for (int k = 1; k <= cfg.q_max_exponent && !k_found; ++k) {
        const double q = 1.0 - std::ldexp(1.0, -k);
        double worst = 0.0;
        for (Site K : cfg.Ks) worst = std::max(worst, lemma6_slow_phase_failure(*A, q, K));
        best_slow = std::min(best_slow, worst);
        if (worst < eps / 2.0) k_found = k;
    }
    if (!k_found)
        throw CalibrationError("lemma6: no q on the grid meets the slow-phase bound; best " + std::to_string(best_slow));
    auto cert = detail::lemma6_certify(eps, *A, *k_found, cfg);
    if (cert.max_crosscheck_diff > kClosedFormTolerance)
        throw InvariantViolation("lemma6 closed forms disagree with absorbing evolution by " +
                                 std::to_string(cert.max_crosscheck_diff));
    return cert;
}

inline ReplayResult replay_lemma6(const Lemma6Certificate& c, const Lemma6Config& cfg_in = {}) {
    Lemma6Config cfg = cfg_in;
    cfg.Ks.clear();
    for (const auto& s : c.per_scale) cfg.Ks.push_back(s.K);
    cfg.fast_check_K = c.fast_check_K;
    cfg.slow_check_K = c.slow_check_K;
    const auto fresh = detail::lemma6_certify(c.eps, c.A, c.q_exponent, cfg);
    ReplayResult r;
    detail::replay_compare(r, c.q, fresh.q);
    for (std::size_t i = 0; i < c.per_scale.size(); ++i) {
        detail::replay_compare(r, c.per_scale[i].fast_failure, fresh.per_scale[i].fast_failure);
        detail::replay_compare(r, c.per_scale[i].slow_failure, fresh.per_scale[i].slow_failure);
    }
    detail::replay_compare(r, c.fast_check_evolved, fresh.fast_check_evolved);
    detail::replay_compare(r, c.slow_check_evolved, fresh.slow_check_evolved);
    return r;
}

}  // namespace crw
