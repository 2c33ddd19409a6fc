#pragma once

// Trajectory sampling, hit-frequency estimation and the barrier-entrance
// diagnostics for the delocalization argument.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "crw/errors.hpp"
#include "crw/lattice.hpp"
#include "crw/policy.hpp"
#include "crw/rng.hpp"

namespace crw {

inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
    double low = 0.0;
    double high = 0.0;
};

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = kZ95) {
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    const double low = successes == 0 ? 0.0 : std::max(0.0, centre - half);
    const double high = successes == trials ? 1.0 : std::min(1.0, centre + half);
    return {low, high};
}

struct HitEstimate {
    std::uint64_t trials = 0;
    std::uint64_t hits = 0;
    double p_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;

    /// Standard error sqrt(p (1 - p) / trials) at a reference probability p.
    double standard_error(double p) const { return std::sqrt(p * (1.0 - p) / static_cast<double>(trials)); }
};

inline HitEstimate make_estimate(std::uint64_t hits, std::uint64_t trials) {
    const auto ci = wilson_interval(hits, trials);
    return HitEstimate{trials, hits, trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0, ci.low,
                       ci.high};
}

/// Runs trials [0, trials) split into contiguous chunks over `threads`
/// workers. `fn(trial, acc)` accumulates into a per-worker Acc; chunks are
/// merged in order, so the result does not depend on the thread count.
template <class Acc, class Fn>
Acc run_batch(std::uint64_t trials, unsigned threads, Fn fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::uint64_t>(trials, 1))));
    std::vector<Acc> parts(threads);
    auto work = [&](unsigned w) {
        const std::uint64_t a = trials * w / threads;
        const std::uint64_t b = trials * (w + 1) / threads;
        for (std::uint64_t j = a; j < b; ++j) fn(j, parts[w]);
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    }
    Acc total = std::move(parts[0]);
    for (unsigned w = 1; w < threads; ++w) total.merge(parts[w]);
    return total;
}

/// One step of the kernel driven by a uniform draw.
inline Site sample_increment(double u, double uniform) {
    if (uniform < u) return 0;
    return uniform < u + (1.0 - u) * 0.5 ? -1 : 1;
}

/// Simulates one trajectory. `on_visit(t, x)` is called for t = 0..n.
template <class OnVisit>
Site run_trial(const PolicySpec& policy, Step n, Site start, TrialStream& rng, OnVisit&& on_visit) {
    Site x = start;
    Flag flag = start == 0 ? Flag::hit : Flag::not_hit;
    on_visit(Step{0}, x);
    for (Step t = 0; t < n; ++t) {
        if (policy.resets_flag_at(t)) flag = x == 0 ? Flag::hit : Flag::not_hit;
        x += sample_increment(policy.evaluate(t, x, flag), rng.uniform());
        if (x == 0) flag = Flag::hit;
        on_visit(t + 1, x);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Barrier family D_i = R_{r_i} x B_{i,n}

struct BarrierStage {
    int index = 0;
    Site radius = 0;   // floor(2^{-i/2} sqrt(n))
    Step t_lo = 0;     // ceil((1 - 2^{-i}) n)
    Step t_hi = 0;     // n

    bool contains(Site x, Step t) const { return t >= t_lo && t <= t_hi && x <= radius && x >= -radius; }
};

struct BarrierFamily {
    Step n = 0;
    double beta_exp = 0.0;
    int N0 = 0;
    std::vector<BarrierStage> stages;  // stages[i-1] is D_i

    const BarrierStage& stage(int i) const { return stages.at(static_cast<std::size_t>(i - 1)); }
};

inline BarrierFamily make_barrier_family(Step n, double beta_exp) {
    if (n < 1) throw ParameterError("barrier family needs n >= 1");
    if (!(beta_exp >= 0.0 && beta_exp < 0.5)) throw ParameterError("beta_exp must lie in [0, 1/2)");
    BarrierFamily f;
    f.n = n;
    f.beta_exp = beta_exp;
    const double root = std::sqrt(static_cast<double>(n));
    const double floor_level = std::pow(static_cast<double>(n), beta_exp);
    for (int i = 1;; ++i) {
        const double r = std::pow(2.0, -0.5 * i) * root;
        if (r < floor_level * (1.0 - 1e-12)) break;
        f.N0 = i;
        const Step t_lo = static_cast<Step>(std::ceil((1.0 - std::pow(2.0, -i)) * static_cast<double>(n) - 1e-9));
        f.stages.push_back(BarrierStage{i, static_cast<Site>(std::floor(r + 1e-9)), t_lo, n});
    }
    if (f.N0 < 1) throw ParameterError("degenerate barrier family: N0 < 1 for n=" + std::to_string(n));
    return f;
}

/// Whether tau_i may coincide with tau_{i-1}.
enum class EntranceRule { non_strict, strict };

inline std::string to_string(EntranceRule r) { return r == EntranceRule::strict ? "strict" : "non-strict"; }

/// Successive entrance times tau_i = min{t >(=) tau_{i-1} : (S_t, t) in D_i}.
class EntranceTracker {
public:
    EntranceTracker(const BarrierFamily& family, EntranceRule rule)
        : family_(&family), rule_(rule), tau_(static_cast<std::size_t>(family.N0) + 1, -1) {
        tau_[0] = 0;
    }

    void observe(Step t, Site x) {
        while (next_ <= family_->N0) {
            const bool time_ok = rule_ == EntranceRule::strict ? t > last_ : t >= last_;
            if (!time_ok || !family_->stage(next_).contains(x, t)) break;
            tau_[static_cast<std::size_t>(next_)] = t;
            last_ = t;
            ++next_;
        }
    }

    /// tau_i, or nullopt when D_i was not entered by the horizon.
    std::optional<Step> tau(int i) const {
        const Step v = tau_.at(static_cast<std::size_t>(i));
        return v < 0 ? std::nullopt : std::optional<Step>(v);
    }
    int stages_entered() const { return next_ - 1; }

private:
    const BarrierFamily* family_;
    EntranceRule rule_;
    std::vector<Step> tau_;
    int next_ = 1;
    Step last_ = 0;
};

struct SamplePath {
    std::vector<Site> sites;
    /// entrance[i-1] = tau_i when a family was supplied.
    std::vector<std::optional<Step>> entrance;
};

/// One reproducible trajectory (trial index `trial` of stream `seed`).
inline SamplePath sample_path(const PolicySpec& policy, Step n, Site start, std::uint64_t seed, std::uint64_t trial = 0,
                              const BarrierFamily* family = nullptr, EntranceRule rule = EntranceRule::non_strict) {
    if (auto h = policy.horizon(); h && *h < n) throw ParameterError("sample_path: policy horizon shorter than n");
    SamplePath p;
    p.sites.reserve(static_cast<std::size_t>(n + 1));
    TrialStream rng(seed, trial);
    std::optional<EntranceTracker> tracker;
    if (family) tracker.emplace(*family, rule);
    run_trial(policy, n, start, rng, [&](Step t, Site x) {
        p.sites.push_back(x);
        if (tracker) tracker->observe(t, x);
    });
    if (tracker)
        for (int i = 1; i <= family->N0; ++i) p.entrance.push_back(tracker->tau(i));
    return p;
}

// ---------------------------------------------------------------------------
// Hit estimation

struct HitBatch {
    HitEstimate estimate;
    std::vector<Site> terminal_sites;  // filled when requested
};

inline HitBatch estimate_hit(const PolicySpec& policy, Step n, Site start, SiteInterval target, std::uint64_t trials,
                             std::uint64_t seed, unsigned threads = 1, bool keep_terminal_sites = false) {
    if (trials < 1) throw ParameterError("trials must be >= 1");
    if (auto h = policy.horizon(); h && *h < n) throw ParameterError("estimate_hit: policy horizon shorter than n");
    std::vector<Site> terminals(keep_terminal_sites ? trials : 0);
    struct Acc {
        std::uint64_t hits = 0;
        void merge(const Acc& o) { hits += o.hits; }
    };
    const auto acc = run_batch<Acc>(trials, threads, [&](std::uint64_t j, Acc& a) {
        TrialStream rng(seed, j);
        const Site end = run_trial(policy, n, start, rng, [](Step, Site) {});
        if (target.contains(end)) ++a.hits;
        if (keep_terminal_sites) terminals[j] = end;
    });
    return HitBatch{make_estimate(acc.hits, trials), std::move(terminals)};
}

// ---------------------------------------------------------------------------
// Barrier diagnostics

struct StageStats {
    int index = 0;
    Site radius = 0;
    Step t_lo = 0;
    std::uint64_t entered = 0;                 // tau_i <= n
    std::uint64_t entered_before_horizon = 0;  // tau_i < n
    std::uint64_t next_entered = 0;            // tau_{i+1} < n among tau_i < n
    double next_frequency = 0.0;
    double next_ci_low = 0.0;
    double next_ci_high = 0.0;
    /// Frequency of tau_{i+1} >= n given tau_i < n.
    double escape_frequency = 0.0;
    bool has_next = false;
};

struct BarrierReport {
    BarrierFamily family;
    EntranceRule rule = EntranceRule::non_strict;
    std::uint64_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<StageStats> stages;
    std::uint64_t terminal_in_window = 0;  // |S_n| <= n^beta
    std::uint64_t terminal_at_zero = 0;
    std::uint64_t window_violations = 0;   // |S_n| <= n^beta but tau_{N0} undefined
    std::uint64_t zero_violations = 0;     // S_n = 0 but tau_{N0} undefined
    bool monotone = true;
    /// min over stages i <= N0 - 1 (with tau_i < n observed) of the escape frequency.
    std::optional<double> min_escape;
};

inline BarrierReport barrier_diagnostics(const PolicySpec& policy, Step n, double beta_exp, std::uint64_t trials,
                                         std::uint64_t seed, EntranceRule rule = EntranceRule::non_strict,
                                         unsigned threads = 1) {
    if (trials < 1) throw ParameterError("trials must be >= 1");
    if (auto h = policy.horizon(); h && *h < n) throw ParameterError("barrier_diagnostics: policy horizon shorter than n");
    const BarrierFamily family = make_barrier_family(n, beta_exp);
    const auto N0 = static_cast<std::size_t>(family.N0);
    const double window = std::pow(static_cast<double>(n), beta_exp);

    struct Acc {
        std::vector<std::uint64_t> entered, before, next;
        std::uint64_t in_window = 0, at_zero = 0, window_viol = 0, zero_viol = 0;
        void merge(const Acc& o) {
            if (entered.empty()) { *this = o; return; }
            if (o.entered.empty()) return;
            for (std::size_t i = 0; i < entered.size(); ++i) {
                entered[i] += o.entered[i];
                before[i] += o.before[i];
                next[i] += o.next[i];
            }
            in_window += o.in_window;
            at_zero += o.at_zero;
            window_viol += o.window_viol;
            zero_viol += o.zero_viol;
        }
    };
    const auto acc = run_batch<Acc>(trials, threads, [&](std::uint64_t j, Acc& a) {
        if (a.entered.empty()) a.entered.assign(N0 + 2, 0), a.before.assign(N0 + 2, 0), a.next.assign(N0 + 2, 0);
        TrialStream rng(seed, j);
        EntranceTracker tr(family, rule);
        const Site end = run_trial(policy, n, 0, rng, [&](Step t, Site x) { tr.observe(t, x); });
        for (int i = 1; i <= family.N0; ++i) {
            const auto ti = tr.tau(i);
            if (!ti) break;
            ++a.entered[static_cast<std::size_t>(i)];
            if (*ti < n) {
                ++a.before[static_cast<std::size_t>(i)];
                if (i < family.N0) {
                    const auto tn = tr.tau(i + 1);
                    if (tn && *tn < n) ++a.next[static_cast<std::size_t>(i)];
                }
            }
        }
        const bool reached_last = tr.tau(family.N0).has_value();
        if (static_cast<double>(std::abs(end)) <= window) {
            ++a.in_window;
            if (!reached_last) ++a.window_viol;
        }
        if (end == 0) {
            ++a.at_zero;
            if (!reached_last) ++a.zero_viol;
        }
    });

    BarrierReport r;
    r.family = family;
    r.rule = rule;
    r.trials = trials;
    r.seed = seed;
    r.terminal_in_window = acc.in_window;
    r.terminal_at_zero = acc.at_zero;
    r.window_violations = acc.window_viol;
    r.zero_violations = acc.zero_viol;
    for (int i = 1; i <= family.N0; ++i) {
        const auto k = static_cast<std::size_t>(i);
        StageStats s;
        s.index = i;
        s.radius = family.stage(i).radius;
        s.t_lo = family.stage(i).t_lo;
        s.entered = acc.entered[k];
        s.entered_before_horizon = acc.before[k];
        s.has_next = i < family.N0;
        if (s.has_next && s.entered_before_horizon > 0) {
            s.next_entered = acc.next[k];
            const auto ci = wilson_interval(s.next_entered, s.entered_before_horizon);
            s.next_frequency = static_cast<double>(s.next_entered) / static_cast<double>(s.entered_before_horizon);
            s.next_ci_low = ci.low;
            s.next_ci_high = ci.high;
            s.escape_frequency = 1.0 - s.next_frequency;
            r.min_escape = r.min_escape ? std::min(*r.min_escape, s.escape_frequency) : s.escape_frequency;
        }
        if (!r.stages.empty() && s.entered > r.stages.back().entered) r.monotone = false;
        r.stages.push_back(s);
    }
    return r;
}

// ---------------------------------------------------------------------------
// First-exit checks

struct Lemma0Result {
    double q_cap = 0.0, h = 0.0, delta = 0.0;
    Step ell = 0;
    HitEstimate estimate;
    static constexpr double bound = 1.0 / 6.0;
    /// Upper confidence bound below 1/6.
    bool violation = false;
};

/// Estimates P(M_tau >= h, tau <= ell), tau = min{i : |M_i| >= h}, for the
/// lazy walk u = q_cap from 0.
inline Lemma0Result lemma0_check(double q_cap, double h, double delta, Step ell, std::uint64_t trials,
                                 std::uint64_t seed, unsigned threads = 1) {
    if (!(q_cap >= 0.0 && q_cap < 1.0)) throw ParameterError("q must lie in [0, 1)");
    if (!(h >= 1.0)) throw ParameterError("h must be >= 1");
    if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("delta must lie in (0, 1]");
    if (static_cast<double>(ell) < 24.0 * h * h / delta)
        throw ParameterError("ell must satisfy ell >= 24 h^2 / delta (got ell=" + std::to_string(ell) +
                             ", 24 h^2 / delta=" + std::to_string(24.0 * h * h / delta) + ")");
    if (1.0 - q_cap < delta * (1.0 - 1e-12))
        throw ParameterError("lazy walk variance 1 - q < delta; conditional variance bound fails");
    if (trials < 1) throw ParameterError("trials must be >= 1");
    struct Acc {
        std::uint64_t hits = 0;
        void merge(const Acc& o) { hits += o.hits; }
    };
    const auto acc = run_batch<Acc>(trials, threads, [&](std::uint64_t j, Acc& a) {
        TrialStream rng(seed, j);
        Site m = 0;
        for (Step i = 1; i <= ell; ++i) {
            m += sample_increment(q_cap, rng.uniform());
            if (static_cast<double>(std::abs(m)) >= h) {
                if (static_cast<double>(m) >= h) ++a.hits;
                break;
            }
        }
    });
    Lemma0Result r{q_cap, h, delta, ell, make_estimate(acc.hits, trials), false};
    r.violation = r.estimate.ci_high < Lemma0Result::bound;
    return r;
}

struct OriStartStats {
    Site x = 0;
    HitEstimate contained;            // |S_{AK^2}| <= K
    std::uint64_t never_hit = 0;      // 0 not visited by AK^2
    std::uint64_t exit_after_hit = 0; // left [-K, K] after visiting 0
};

struct LemmaOriResult {
    double q_cap = 0.0, A = 0.0;
    Site K = 0;
    Step steps = 0;
    std::vector<OriStartStats> starts;
    double min_contained = 1.0;
    Site worst_start = 0;
    double never_hit_frequency = 0.0;
    double exit_after_hit_frequency = 0.0;
};

/// For each start x, estimates P_x(S_{AK^2} in [-K, K]) under the
/// fast-until-zero control. `starts` defaults to every x in [-2K, 2K].
inline LemmaOriResult lemma_ori_check(double q_cap, double A, Site K, std::uint64_t trials, std::uint64_t seed,
                                      std::vector<Site> starts = {}, unsigned threads = 1) {
    if (K < 1) throw ParameterError("K must be >= 1");
    if (!(A >= 1.0)) throw ParameterError("A must be >= 1");
    if (trials < 1) throw ParameterError("trials must be >= 1");
    const PolicySpec policy = fast_until_zero_policy(q_cap);
    if (starts.empty())
        for (Site x = -2 * K; x <= 2 * K; ++x) starts.push_back(x);
    LemmaOriResult r;
    r.q_cap = q_cap;
    r.A = A;
    r.K = K;
    r.steps = static_cast<Step>(std::ceil(A * static_cast<double>(K) * static_cast<double>(K) - 1e-9));
    std::uint64_t total_never = 0, total_exit = 0;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        const Site x0 = starts[s];
        struct Acc {
            std::uint64_t in = 0, never = 0, exit = 0;
            void merge(const Acc& o) { in += o.in; never += o.never; exit += o.exit; }
        };
        // Each start gets its own sub-seed so probe sets can be changed freely.
        const std::uint64_t start_seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(x0)));
        const auto acc = run_batch<Acc>(trials, threads, [&](std::uint64_t j, Acc& a) {
            TrialStream rng(start_seed, j);
            bool visited = x0 == 0;
            bool exited = false;
            const Site end = run_trial(policy, r.steps, x0, rng, [&](Step, Site x) {
                if (x == 0) visited = true;
                if (visited && (x > K || x < -K)) exited = true;
            });
            if (end >= -K && end <= K) ++a.in;
            if (!visited) ++a.never;
            if (exited) ++a.exit;
        });
        OriStartStats st{x0, make_estimate(acc.in, trials), acc.never, acc.exit};
        if (st.contained.p_hat < r.min_contained || s == 0) {
            r.min_contained = st.contained.p_hat;
            r.worst_start = x0;
        }
        total_never += acc.never;
        total_exit += acc.exit;
        r.starts.push_back(st);
    }
    const double denom = static_cast<double>(trials) * static_cast<double>(starts.size());
    r.never_hit_frequency = static_cast<double>(total_never) / denom;
    r.exit_after_hit_frequency = static_cast<double>(total_exit) / denom;
    return r;
}

}  // namespace crw
