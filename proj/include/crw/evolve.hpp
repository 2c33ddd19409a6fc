#pragma once

#include <functional>
#include <string>

#include "crw/lattice.hpp"
#include "crw/policy.hpp"

namespace crw {

/// Exact law of S_n under `policy` started at `start`. `on_step`, when set,
/// sees the distribution after every step (time 1..n).
template <class Real = double>
Distribution<Real> evolve(const PolicySpec& policy, Step n, Site start,
                          const std::function<void(const Distribution<Real>&)>& on_step = {}) {
    if (n < 0) throw ParameterError("evolve: n must be >= 0");
    if (auto h = policy.horizon(); h && *h < n)
        throw ParameterError("evolve: policy horizon " + std::to_string(*h) + " shorter than n=" + std::to_string(n));
    auto d = point_mass<Real>(start);
    for (Step t = 0; t < n; ++t) {
        if (policy.resets_flag_at(t)) d = reset_flags(d);
        d = step_distribution(d, policy.row<Real>(t, d.lo(), d.hi()));
        if (on_step) on_step(d);
    }
    return d;
}

/// Evolves an arbitrary (not necessarily normalized) initial measure for n
/// steps starting at the policy's time `initial.time()`.
template <class Real = double>
Distribution<Real> evolve_from(const PolicySpec& policy, Distribution<Real> initial, Step n) {
    const Step end = initial.time() + n;
    if (auto h = policy.horizon(); h && *h < end) throw ParameterError("evolve_from: policy horizon too short");
    for (Step t = initial.time(); t < end; ++t) {
        if (policy.resets_flag_at(t)) initial = reset_flags(initial);
        initial = step_distribution(initial, policy.row<Real>(t, initial.lo(), initial.hi()));
    }
    return initial;
}

/// Exact law after n steps with absorbing sites; the window is trimmed of
/// zero tails after each step so a two-sided boundary keeps it bounded.
template <class Real = double>
Distribution<Real> evolve_absorbing(const PolicySpec& policy, Step n, Site start, const AbsorbingSet& absorbing) {
    if (auto h = policy.horizon(); h && *h < n) throw ParameterError("evolve_absorbing: policy horizon too short");
    auto d = point_mass<Real>(start);
    for (Step t = 0; t < n; ++t) {
        if (policy.resets_flag_at(t)) d = reset_flags(d);
        d = step_distribution(d, policy.row<Real>(t, d.lo(), d.hi()), absorbing).trimmed();
    }
    return d;
}

/// P(S_n in target) under `policy` from `start`.
template <class Real = double>
Real hit_probability(const PolicySpec& policy, Step n, Site start, SiteInterval target = {0, 0}) {
    return interval_mass(evolve<Real>(policy, n, start), target);
}

}  // namespace crw
