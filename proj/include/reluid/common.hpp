#pragma once

// Shared scalar types, error hierarchy, RNG helpers and small numeric
// utilities used across the library.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace reluid {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

struct NormalizationImpossible : Error {
    explicit NormalizationImpossible(const std::string& msg) : Error(msg) {}
};

struct IdentifiabilityEvidenceMissing : Error {
    IdentifiabilityEvidenceMissing(const std::string& msg, int found, int expected)
        : Error(msg), found_count(found), expected_count(expected) {}
    int found_count;
    int expected_count;
};

struct OrientationUnresolved : Error {
    explicit OrientationUnresolved(const std::string& msg) : Error(msg) {}
};

struct NotAffine : Error {
    NotAffine(const std::string& msg, double resid) : Error(msg), residual(resid) {}
    double residual;
};

struct BudgetExhausted : Error {
    explicit BudgetExhausted(const std::string& msg) : Error(msg) {}
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }
inline bool all_finite(const Vec& v) { return v.allFinite(); }

using Rng = std::mt19937_64;

inline Vec uniform_in_box(const Vec& lo, const Vec& hi, Rng& rng) {
    Vec x(lo.size());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * u(rng);
    return x;
}

inline Vec random_unit_vector(int dim, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vec v(dim);
    double n = 0.0;
    do {
        for (int i = 0; i < dim; ++i) v[i] = g(rng);
        n = v.norm();
    } while (n < 1e-12);
    return v / n;
}

// Scrambled Halton sequence: deterministic per seed, low-discrepancy.
class HaltonSampler {
public:
    HaltonSampler(int dim, std::uint64_t seed) : dim_(dim), index_(0) {
        static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                     31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
        if (dim > 20) throw Error("HaltonSampler: dimension > 20 unsupported");
        Rng rng(seed);
        perms_.resize(dim);
        bases_.resize(dim);
        for (int d = 0; d < dim; ++d) {
            int b = primes[d];
            bases_[d] = b;
            std::vector<int> p(b);
            for (int i = 0; i < b; ++i) p[i] = i;
            // keep 0 fixed so 0 maps to 0; shuffle the rest
            std::shuffle(p.begin() + 1, p.end(), rng);
            perms_[d] = std::move(p);
        }
    }

    Vec next() {
        ++index_;
        Vec x(dim_);
        for (int d = 0; d < dim_; ++d) x[d] = radical_inverse(index_, d);
        return x;
    }

    Vec next_in_box(const Vec& lo, const Vec& hi) {
        Vec u = next();
        return lo.array() + (hi - lo).array() * u.array();
    }

private:
    double radical_inverse(std::uint64_t i, int d) const {
        const int b = bases_[d];
        const auto& perm = perms_[d];
        double inv = 1.0 / b, f = inv, r = 0.0;
        while (i > 0) {
            r += f * perm[i % b];
            i /= b;
            f *= inv;
        }
        return r;
    }

    int dim_;
    std::uint64_t index_;
    std::vector<int> bases_;
    std::vector<std::vector<int>> perms_;
};

// Hungarian algorithm, O(n^3). cost is square; returns col assigned to each row.
inline std::vector<int> min_cost_assignment(const Mat& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ShapeError("min_cost_assignment: square matrix required");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

// Permutation helpers. A permutation is stored as a vector of 0-based images:
// phi[j] = i means element j is sent to slot i (matching P_phi with
// (P_phi)_{i,j} = 1 iff phi(j) = i, so (P_phi x)_i = x_{phi^{-1}(i)}).
inline std::vector<int> identity_perm(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    return p;
}

inline std::vector<int> invert_perm(const std::vector<int>& phi) {
    std::vector<int> inv(phi.size());
    for (std::size_t j = 0; j < phi.size(); ++j) inv[phi[j]] = static_cast<int>(j);
    return inv;
}

inline bool is_permutation(const std::vector<int>& phi) {
    std::vector<char> seen(phi.size(), 0);
    for (int v : phi) {
        if (v < 0 || v >= static_cast<int>(phi.size()) || seen[v]) return false;
        seen[v] = 1;
    }
    return true;
}

// compose: (psi after phi)(j) = psi[phi[j]]
inline std::vector<int> compose_perm(const std::vector<int>& psi, const std::vector<int>& phi) {
    if (psi.size() != phi.size()) throw ShapeError("compose_perm: size mismatch");
    std::vector<int> r(phi.size());
    for (std::size_t j = 0; j < phi.size(); ++j) r[j] = psi[phi[j]];
    return r;
}

}  // namespace reluid
