#pragma once

// Small dense linear programming kit. Problem sizes here are tiny (tens of
// constraints, ~10 variables), so a plain two-phase tableau simplex with
// Bland's rule is enough and keeps the dependency surface at zero.

#include "reluid/common.hpp"

#include <optional>

namespace reluid {

// Halfspace a^T x + c >= 0.
struct Halfspace {
    Vec a;
    double c = 0.0;
};

inline Halfspace normalized(const Halfspace& h) {
    double n = h.a.norm();
    if (n < 1e-300) return h;
    return Halfspace{h.a / n, h.c / n};
}

// Box plus optional extra halfspaces. lo/hi may be empty (unbounded) only in
// intermediate computations; public entry points always carry a box.
struct Polytope {
    Vec lo, hi;
    std::vector<Halfspace> halfspaces;

    int dim() const { return static_cast<int>(lo.size()); }

    bool contains(const Vec& x, double tol = 1e-9) const {
        for (Eigen::Index i = 0; i < lo.size(); ++i)
            if (x[i] < lo[i] - tol || x[i] > hi[i] + tol) return false;
        for (const auto& h : halfspaces) {
            double n = std::max(1.0, h.a.norm());
            if (h.a.dot(x) + h.c < -tol * n) return false;
        }
        return true;
    }

    Vec center() const { return 0.5 * (lo + hi); }
};

inline Polytope box_polytope(const Vec& lo, const Vec& hi) { return Polytope{lo, hi, {}}; }

namespace lp {

enum class Status { Optimal, Infeasible, Unbounded };

struct Result {
    Status status = Status::Infeasible;
    Vec x;
    double objective = 0.0;
};

namespace detail {

// min c^T z  s.t.  A z = b, z >= 0, b >= 0 assumed. Returns false on
// unbounded. basis holds the current basic column per row.
inline bool simplex_core(Mat& T, std::vector<int>& basis, Eigen::Index ncols) {
    const Eigen::Index m = T.rows() - 1;
    const double eps = 1e-9;
    for (int iter = 0; iter < 20000; ++iter) {
        // Bland: entering = lowest-index column with negative reduced cost.
        Eigen::Index enter = -1;
        for (Eigen::Index j = 0; j < ncols; ++j) {
            if (T(m, j) < -eps) {
                enter = j;
                break;
            }
        }
        if (enter < 0) return true;  // optimal
        Eigen::Index leave = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i) {
            double aij = T(i, enter);
            if (aij > eps) {
                double ratio = T(i, ncols) / aij;
                if (ratio < best - 1e-12 ||
                    (ratio < best + 1e-12 && (leave < 0 || basis[static_cast<std::size_t>(i)] <
                                                               basis[static_cast<std::size_t>(leave)]))) {
                    best = ratio;
                    leave = i;
                }
            }
        }
        if (leave < 0) return false;  // unbounded
        // pivot
        double piv = T(leave, enter);
        T.row(leave) /= piv;
        for (Eigen::Index i = 0; i <= m; ++i) {
            if (i == leave) continue;
            double f = T(i, enter);
            if (f != 0.0) T.row(i) -= f * T.row(leave);
        }
        basis[static_cast<std::size_t>(leave)] = static_cast<int>(enter);
    }
    return true;  // iteration cap; treat current point as optimal
}

}  // namespace detail

// maximize obj^T v subject to G v <= g and E v = e, v free.
inline Result solve(const Vec& obj, const Mat& G, const Vec& g, const Mat& E, const Vec& e) {
    const int n = static_cast<int>(obj.size());
    const int mi = static_cast<int>(G.rows());
    const int me = static_cast<int>(E.rows());
    const int m = mi + me;

    // Columns: v+ (n), v- (n), slack (mi), artificial (<= m).
    // Rows scaled to unit inf-norm for conditioning.
    Mat A(m, 2 * n + mi);
    Vec b(m);
    for (int i = 0; i < mi; ++i) {
        double s = std::max(1.0, std::max(G.row(i).cwiseAbs().maxCoeff(), std::abs(g[i])));
        A.row(i).head(n) = G.row(i) / s;
        A.row(i).segment(n, n) = -G.row(i) / s;
        A.row(i).tail(mi).setZero();
        A(i, 2 * n + i) = 1.0;
        b[i] = g[i] / s;
    }
    for (int i = 0; i < me; ++i) {
        double s = std::max(1.0, std::max(E.row(i).cwiseAbs().maxCoeff(), std::abs(e[i])));
        A.row(mi + i).head(n) = E.row(i) / s;
        A.row(mi + i).segment(n, n) = -E.row(i) / s;
        A.row(mi + i).tail(mi).setZero();
        b[mi + i] = e[i] / s;
    }
    for (int i = 0; i < m; ++i) {
        if (b[i] < 0) {
            A.row(i) = -A.row(i);
            b[i] = -b[i];
        }
    }

    const int base_cols = 2 * n + mi;
    // Phase 1 with one artificial per row.
    Mat T = Mat::Zero(m + 1, base_cols + m + 1);
    T.block(0, 0, m, base_cols) = A;
    std::vector<int> basis(m);
    for (int i = 0; i < m; ++i) {
        T(i, base_cols + i) = 1.0;
        T(i, base_cols + m) = b[i];
        basis[i] = base_cols + i;
    }
    for (int j = 0; j < base_cols + m; ++j)
        T(m, j) = (j >= base_cols) ? 1.0 : 0.0;
    // price out the artificial basis
    for (int i = 0; i < m; ++i) T.row(m) -= T.row(i);

    if (!detail::simplex_core(T, basis, base_cols + m)) return {Status::Unbounded, Vec(), 0.0};
    double phase1 = -T(m, base_cols + m);
    if (phase1 > 1e-7) return {Status::Infeasible, Vec(), 0.0};

    // Drive leftover artificials out of the basis when possible.
    for (int i = 0; i < m; ++i) {
        if (basis[i] >= base_cols) {
            int enter = -1;
            for (int j = 0; j < base_cols; ++j) {
                if (std::abs(T(i, j)) > 1e-8) {
                    enter = j;
                    break;
                }
            }
            if (enter >= 0) {
                double piv = T(i, enter);
                T.row(i) /= piv;
                for (int r = 0; r <= m; ++r) {
                    if (r == i) continue;
                    double f = T(r, enter);
                    if (f != 0.0) T.row(r) -= f * T.row(i);
                }
                basis[i] = enter;
            }
        }
    }

    // Phase 2: rebuild cost row (min -obj), artificial columns frozen at zero.
    Mat T2 = Mat::Zero(m + 1, base_cols + 1);
    T2.block(0, 0, m, base_cols) = T.block(0, 0, m, base_cols);
    T2.col(base_cols).head(m) = T.col(base_cols + m).head(m);
    for (int j = 0; j < n; ++j) {
        T2(m, j) = -obj[j];
        T2(m, n + j) = obj[j];
    }
    for (int i = 0; i < m; ++i) {
        if (basis[i] < base_cols && std::abs(T2(m, basis[i])) > 0.0)
            T2.row(m) -= T2(m, basis[i]) * T2.row(i);
        if (basis[i] >= base_cols) {
            // degenerate row stuck on an artificial: the row is all-zero on
            // real columns, so it is redundant; leave it (rhs must be ~0).
        }
    }
    if (!detail::simplex_core(T2, basis, base_cols)) return {Status::Unbounded, Vec(), 0.0};

    Vec z = Vec::Zero(base_cols);
    for (int i = 0; i < m; ++i)
        if (basis[i] < base_cols) z[basis[i]] = T2(i, base_cols);
    Vec v(n);
    for (int j = 0; j < n; ++j) v[j] = z[j] - z[n + j];
    return {Status::Optimal, v, obj.dot(v)};
}

}  // namespace lp

struct SlackResult {
    bool feasible = false;
    double slack = -std::numeric_limits<double>::infinity();
    Vec x;
};

// maximize t subject to
//   a_i^T x + c_i >= t            (soft: rows normalized first)
//   g_j^T x + d_j >= 0            (hard)
//   e_j^T x + f_j  = 0            (equalities)
//   lo <= x <= hi, t <= t_cap
// Constant rows (|a| ~ 0) are resolved upfront: soft/hard rows need c >= 0
// within tolerance, equalities need |f| ~ 0.
inline SlackResult max_slack_point(const std::vector<Halfspace>& soft,
                                   const std::vector<Halfspace>& hard,
                                   const std::vector<Halfspace>& equalities, const Vec& lo,
                                   const Vec& hi, double t_cap = 1.0) {
    const int n = static_cast<int>(lo.size());
    const double zero_row = 1e-12;
    std::vector<Halfspace> S, H, E;
    for (const auto& h : soft) {
        double nn = h.a.norm();
        if (nn < zero_row) {
            if (h.c < -1e-12) return {};
            continue;
        }
        S.push_back(Halfspace{h.a / nn, h.c / nn});
    }
    for (const auto& h : hard) {
        double nn = h.a.norm();
        if (nn < zero_row) {
            if (h.c < -1e-12) return {};
            continue;
        }
        H.push_back(Halfspace{h.a / nn, h.c / nn});
    }
    for (const auto& h : equalities) {
        double nn = h.a.norm();
        if (nn < zero_row) {
            if (std::abs(h.c) > 1e-12) return {};
            continue;
        }
        E.push_back(Halfspace{h.a / nn, h.c / nn});
    }

    // variables v = [x; t]
    const int mi = static_cast<int>(S.size() + H.size()) + 2 * n + 1;
    Mat G(mi, n + 1);
    Vec g(mi);
    int r = 0;
    for (const auto& h : S) {  // -a^T x + t <= c
        G.row(r).head(n) = -h.a.transpose();
        G(r, n) = 1.0;
        g[r] = h.c;
        ++r;
    }
    for (const auto& h : H) {  // -a^T x <= c
        G.row(r).head(n) = -h.a.transpose();
        G(r, n) = 0.0;
        g[r] = h.c;
        ++r;
    }
    for (int i = 0; i < n; ++i) {  // x_i <= hi, -x_i <= -lo
        G.row(r).setZero();
        G(r, i) = 1.0;
        g[r] = hi[i];
        ++r;
        G.row(r).setZero();
        G(r, i) = -1.0;
        g[r] = -lo[i];
        ++r;
    }
    G.row(r).setZero();
    G(r, n) = 1.0;
    g[r] = t_cap;
    ++r;

    Mat Eq(static_cast<int>(E.size()), n + 1);
    Vec eq(static_cast<int>(E.size()));
    for (std::size_t i = 0; i < E.size(); ++i) {
        Eq.row(static_cast<int>(i)).head(n) = E[i].a.transpose();
        Eq(static_cast<int>(i), n) = 0.0;
        eq[static_cast<int>(i)] = -E[i].c;
    }

    Vec obj = Vec::Zero(n + 1);
    obj[n] = 1.0;
    auto res = lp::solve(obj, G, g, Eq, eq);
    if (res.status != lp::Status::Optimal) return {};
    SlackResult out;
    out.feasible = true;
    out.slack = res.x[n];
    out.x = res.x.head(n);
    return out;
}

// Plain feasibility (no slack maximization): returns a feasible point if any.
inline std::optional<Vec> feasible_point(const std::vector<Halfspace>& ineqs,
                                         const std::vector<Halfspace>& equalities, const Vec& lo,
                                         const Vec& hi) {
    auto r = max_slack_point({}, ineqs, equalities, lo, hi, 1.0);
    if (!r.feasible) return std::nullopt;
    return r.x;
}

// Certified interior point of a polytope: slack over all rows including box.
inline SlackResult polytope_interior(const Polytope& P, double t_cap = 1.0) {
    std::vector<Halfspace> soft;
    const int n = P.dim();
    for (const auto& h : P.halfspaces) soft.push_back(h);
    for (int i = 0; i < n; ++i) {
        Vec a = Vec::Zero(n);
        a[i] = 1.0;
        soft.push_back(Halfspace{a, -P.lo[i]});
        a[i] = -1.0;
        soft.push_back(Halfspace{a, P.hi[i]});
    }
    return max_slack_point(soft, {}, {}, P.lo, P.hi, t_cap);
}

// Hit-and-run sampling inside a polytope, starting from an interior point.
// Directions may be restricted to a linear subspace via `basis` (columns).
inline std::vector<Vec> hit_and_run(const Polytope& P, Vec x0, int count, Rng& rng,
                                    const Mat* basis = nullptr, int thin = 4) {
    std::vector<Vec> out;
    out.reserve(count);
    const int n = P.dim();
    const double shrink = 1e-9;
    Vec x = std::move(x0);
    int produced = 0, steps = 0;
    while (produced < count && steps < count * thin * 64) {
        ++steps;
        Vec d;
        if (basis) {
            Vec w = random_unit_vector(static_cast<int>(basis->cols()), rng);
            d = (*basis) * w;
            double nn = d.norm();
            if (nn < 1e-14) continue;
            d /= nn;
        } else {
            d = random_unit_vector(n, rng);
        }
        double tmin = -std::numeric_limits<double>::infinity();
        double tmax = std::numeric_limits<double>::infinity();
        auto clip = [&](double num, double den) {
            // constraint: num + t * den >= 0
            if (std::abs(den) < 1e-14) {
                if (num < -1e-12) tmin = 1.0, tmax = -1.0;  // infeasible direction
                return;
            }
            double t = -num / den;
            if (den > 0)
                tmin = std::max(tmin, t);
            else
                tmax = std::min(tmax, t);
        };
        for (int i = 0; i < n; ++i) {
            clip(x[i] - P.lo[i], d[i]);
            clip(P.hi[i] - x[i], -d[i]);
        }
        for (const auto& h : P.halfspaces) clip(h.a.dot(x) + h.c, h.a.dot(d));
        if (!(tmax > tmin)) continue;
        double span = tmax - tmin;
        tmin += shrink * span;
        tmax -= shrink * span;
        std::uniform_real_distribution<double> u(tmin, tmax);
        x = x + u(rng) * d;
        if (steps % thin == 0) {
            out.push_back(x);
            ++produced;
        }
    }
    while (static_cast<int>(out.size()) < count && !out.empty()) out.push_back(out.back());
    if (out.empty()) out.assign(count, x);
    return out;
}

}  // namespace reluid
