#pragma once

// Reference computations shared by the unit tests and the acceptance runner.
// They avoid the library's windowed arrays so they can serve as oracles.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "crw/scalar.hpp"

namespace crw::oracle {

/// C(n, k) / 2^n as an exact rational.
inline Rational binomial_half(unsigned n, unsigned k) {
    boost::multiprecision::cpp_int c = 1;
    for (unsigned i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    boost::multiprecision::cpp_int p = 1;
    p <<= n;
    return Rational(c, p);
}

/// The five control levels {0, q/4, q/2, 3q/4, q}.
inline std::array<double, 5> control_grid(double q) { return {0.0, q / 4, q / 2, 3 * q / 4, q}; }

/// Expectimax over the path tree: best probability of ending on 0 after
/// `remaining` steps from x when u may be picked from the grid at every node.
inline double tree_extremum(double q, int remaining, long x, bool maximize) {
    if (remaining == 0) return x == 0 ? 1.0 : 0.0;
    const double stay = tree_extremum(q, remaining - 1, x, maximize);
    const double left = tree_extremum(q, remaining - 1, x - 1, maximize);
    const double right = tree_extremum(q, remaining - 1, x + 1, maximize);
    double best = maximize ? -1.0 : 2.0;
    for (double u : control_grid(q)) {
        const double v = u * stay + (1.0 - u) / 2.0 * (left + right);
        best = maximize ? std::max(best, v) : std::min(best, v);
    }
    return best;
}

/// Literal enumeration of every Markov control on the reachable cells
/// {(t, x) : |x| <= t < n}, each cell taking a grid value; returns the max
/// and min of P_0(S_n = 0) over all of them.
inline std::pair<double, double> enumerate_markov_policies(double q, int n) {
    // Cell (t, x) has index t^2 + (x + t).
    const std::size_t cells = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    const auto grid = control_grid(q);
    const auto width = static_cast<std::size_t>(2 * n + 1);
    std::vector<int> choice(cells, 0);
    std::vector<double> mass(width), next(width);
    double best = -1.0, worst = 2.0;
    for (;;) {
        std::fill(mass.begin(), mass.end(), 0.0);
        mass[static_cast<std::size_t>(n)] = 1.0;
        for (int t = 0; t < n; ++t) {
            std::fill(next.begin(), next.end(), 0.0);
            for (long x = -t; x <= t; ++x) {
                const auto i = static_cast<std::size_t>(x + n);
                const double u = grid[static_cast<std::size_t>(choice[static_cast<std::size_t>(t * t + x + t)])];
                next[i] += u * mass[i];
                next[i - 1] += (1.0 - u) / 2.0 * mass[i];
                next[i + 1] += (1.0 - u) / 2.0 * mass[i];
            }
            std::swap(mass, next);
        }
        const double p = mass[static_cast<std::size_t>(n)];
        best = std::max(best, p);
        worst = std::min(worst, p);
        std::size_t k = 0;
        while (k < choice.size() && ++choice[k] == static_cast<int>(grid.size())) choice[k++] = 0;
        if (k == choice.size()) break;
    }
    return {best, worst};
}

/// Seeded case generator for property tests.
class Cases {
public:
    explicit Cases(std::uint64_t seed) : rng_(seed) {}
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
    long integer(long a, long b) { return std::uniform_int_distribution<long>(a, b)(rng_); }
    bool coin() { return integer(0, 1) == 1; }

private:
    std::mt19937_64 rng_;
};

}  // namespace crw::oracle
