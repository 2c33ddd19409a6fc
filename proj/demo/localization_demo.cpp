// Compares how strongly different controls keep the walk near the origin.

#include <cstdio>

#include "crw/crw.hpp"

int main() {
    using namespace crw;
    const double q = 0.9;

    std::printf("P(S_n = 0) at q = %.2f\n", q);
    std::printf("%6s %12s %12s %12s %12s\n", "n", "simple", "lazy", "multiscale", "optimal");
    for (Step n = 256; n <= 4096; n *= 2) {
        const double simple = hit_probability<double>(constant_policy(q, 0.0), n, 0);
        const double lazy = hit_probability<double>(lazy_policy(q), n, 0);
        const auto schedule = multiscale_localization_schedule(q, 0.8, 0.25, 2.0, n);
        const double multi = hit_probability<double>(schedule_policy(q, schedule), n, 0);
        const double best = solve_extremal(q, n, Objective::max, {0, 0}, SolveOptions{false}).values.initial(0);
        std::printf("%6lld %12.6g %12.6g %12.6g %12.6g\n", static_cast<long long>(n), simple, lazy, multi, best);
    }

    std::printf("\nfitted decay exponents over n = 256..4096\n");
    std::vector<Step> grid{256, 512, 1024, 2048, 4096};
    for (auto kind : {SweepPolicy::constant, SweepPolicy::multiscale, SweepPolicy::optimal}) {
        const auto r = exponent_sweep(kind, q, grid, SweepMethod::exact);
        if (r.fit) std::printf("  %-12s sigma_hat = %.4f  (R2 %.5f)\n", to_string(kind).c_str(), r.fit->sigma_hat,
                               r.fit->r_squared);
    }

    const auto sol = solve_extremal(q, 512, Objective::max, {0, 0}, SolveOptions{false});
    std::printf("\nslow region of the optimal policy at n = 512 (max |x| with u = q)\n");
    for (const auto& slice : extract_region(sol.policy))
        if (slice.t % 64 == 0) std::printf("  t = %4lld  radius %lld\n", static_cast<long long>(slice.t),
                                           static_cast<long long>(slice.max_radius));
    return 0;
}
