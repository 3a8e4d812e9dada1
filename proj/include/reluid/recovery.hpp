#pragma once

// Black-box parameter recovery by layer peeling: locate the folds of the
// queried function, keep the ones extending to full hyperplanes (first-layer
// folds), orient each row towards its active side, then lift queries through
// the recovered layer and recurse on the residual map until only the output
// affine map is left.

#include "reluid/equivalence.hpp"
#include "reluid/oracle.hpp"
#include "reluid/regions.hpp"

#include <memory>
#include <optional>
#include <sstream>

namespace reluid {

struct FoldObservation {
    Vec x;        // located fold point
    Vec u;        // unit probe direction
    Vec d_left;   // one-sided directional derivatives of f along u at x
    Vec d_right;
    Vec jump;     // d_right - d_left
};

struct FittedFold {
    Vec normal;            // unit
    double offset = 0.0;   // normal . x + offset = 0 on the fold
    bool full = false;     // extends flat across the whole domain interior
    double fit_residual = 0.0;
    std::vector<std::size_t> members;  // indices into the observation list
};

struct RecoveredLayer {
    Mat M;            // unit-norm oriented rows
    Vec b;
    Vec confidence;   // per-row hyperplane fit residual
    bool oriented = false;
};

struct RecoveryOptions {
    std::uint64_t seed = 20260811;
    std::uint64_t query_budget = 1000000;
    double jump_tol = 1e-6;           // relative derivative-jump threshold
    double fd_step = 1e-5;            // finite-difference step scale
    double kink_pos_tol = 1e-10;      // kink bisection tolerance (relative)
    int segments_per_round = 96;
    int max_rounds = 5;
    int grid_samples = 64;            // full-hyperplane test points
    double query_margin_scale = 1e-3; // lifted-query margin (relative)
    int anchors = 6;
    double affine_fit_tol = 1e-6;
    int verify_samples = 1000;
};

struct StageDiagnostics {
    int layer_k = 0;
    std::uint64_t queries_before = 0;
    int observations = 0;
    int clusters = 0;
    int full_hyperplanes = 0;
    double max_fit_residual = 0.0;
    std::string note;
};

struct RecoveryDiagnostics {
    bool success = false;
    std::uint64_t queries_used = 0;
    std::uint64_t seed = 0;
    std::vector<StageDiagnostics> stages;
    std::string failure;
    int failed_layer = -1;
    std::string suspected_condition;
};

struct RecoveryResult {
    std::optional<NetworkParams> network;
    RecoveryDiagnostics diag;
};

namespace detail {

inline double interior_margin(const Polytope& P, const Vec& x) {
    double m = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < P.lo.size(); ++i) {
        m = std::min(m, x[i] - P.lo[i]);
        m = std::min(m, P.hi[i] - x[i]);
    }
    for (const auto& h : P.halfspaces) {
        double n = h.a.norm();
        if (n > 1e-300) m = std::min(m, (h.a.dot(x) + h.c) / n);
    }
    return m;
}

struct BudgetGuard {
    const QueryOracle& oracle;
    std::uint64_t start;
    std::uint64_t budget;
    BudgetGuard(const QueryOracle& o, std::uint64_t b)
        : oracle(o), start(o.query_count()), budget(b) {}
    std::uint64_t used() const { return oracle.query_count() - start; }
    void check() const {
        if (used() > budget) throw BudgetExhausted("query budget exhausted");
    }
};

}  // namespace detail

// One-sided directional derivatives with a Richardson refinement; returns an
// observation when the derivative jump is significant relative to the local
// gradient scale.
inline std::optional<FoldObservation> probe_jump(const QueryOracle& oracle, const Vec& x,
                                                 const Vec& u, double h,
                                                 double jump_tol = 1e-6) {
    if (!(h > 0)) throw DomainError("probe_jump: step must be positive");
    Vec f0 = oracle.query(x);
    auto one_sided = [&](double sign) {
        Vec s1 = sign * (oracle.query(x + (sign * h) * u) - f0) / h;
        Vec s2 = sign * (oracle.query(x + (sign * 0.5 * h) * u) - f0) / (0.5 * h);
        return (2.0 * s2 - s1).eval();
    };
    FoldObservation obs;
    obs.x = x;
    obs.u = u;
    obs.d_right = one_sided(+1.0);
    obs.d_left = one_sided(-1.0);
    obs.jump = obs.d_right - obs.d_left;
    double scale = std::max(1.0, std::max(obs.d_right.norm(), obs.d_left.norm()));
    if (obs.jump.norm() < jump_tol * scale) return std::nullopt;
    return obs;
}

namespace detail {

// Scan f along the segment p -> q for kinks; returns parameter brackets.
inline void scan_segment(const std::function<Vec(double)>& phi, double t0, const Vec& f0,
                         double t1, const Vec& f1, int depth, double chord_tol,
                         double bracket_min, std::vector<std::pair<double, double>>& out) {
    double tm = 0.5 * (t0 + t1);
    Vec fm = phi(tm);
    double resid = (fm - 0.5 * (f0 + f1)).norm();
    bool affine = resid <= chord_tol;
    if (affine && depth >= 3) return;
    if (!affine && (t1 - t0) <= bracket_min) {
        out.emplace_back(t0, t1);
        return;
    }
    scan_segment(phi, t0, f0, tm, fm, depth + 1, chord_tol, bracket_min, out);
    scan_segment(phi, tm, fm, t1, f1, depth + 1, chord_tol, bracket_min, out);
}

// Refine a bracket assumed to contain one kink: chord bisection down to a
// coarse width, then the exact intersection of the two affine branches
// sampled just outside the bracket. For a piecewise-linear restriction the
// intersection solve is exact up to rounding. Brackets that fail the
// single-kink consistency check are dropped (nullopt): fold evidence is
// plentiful and ambiguous points would poison the normal estimates.
inline std::optional<double> refine_kink(const std::function<Vec(double)>& phi, double a, Vec fa,
                                         double b, Vec fb, double chord_tol, double pos_tol) {
    const double coarse = std::max(1e-6, 64.0 * pos_tol);
    while (b - a > coarse) {
        double m = 0.5 * (a + b);
        Vec fm = phi(m);
        Vec fq = phi(0.5 * (a + m));
        double left_resid = (fq - 0.5 * (fa + fm)).norm();
        if (left_resid > chord_tol) {
            b = m;
            fb = std::move(fm);
        } else {
            a = m;
            fa = std::move(fm);
        }
    }
    // slopes from a window much wider than the bracket: the slope rounding
    // error eps/W dominates the final kink position accuracy
    double w = std::max(b - a, 50.0 * coarse);
    double al = std::max(a - w, 0.0), bl = std::min(b + w, 1.0);
    double wl = a - al, wr = bl - b;
    if (wl < 0.25 * (b - a) || wr < 0.25 * (b - a)) return std::nullopt;
    Vec fal = phi(al), fbl = phi(bl);
    Vec sa = (fa - fal) / wl;      // slope left of the kink
    Vec sb = (fbl - fb) / wr;      // slope right of the kink
    Vec d = sa - sb;
    double dn2 = d.squaredNorm();
    if (dn2 < 1e-24) return std::nullopt;
    // left branch: fa + sa (t - a); right branch: fb + sb (t - b); intersect
    Vec rhs = (fb - sb * b) - (fa - sa * a);
    double t = d.dot(rhs) / dn2;
    if (!(t >= a - 0.5 * w && t <= b + 0.5 * w)) return std::nullopt;
    // consistency: the two branches must meet at t
    Vec left_val = fa + sa * (t - a);
    Vec right_val = fb + sb * (t - b);
    double scale = 1.0 + std::max(fa.norm(), fb.norm());
    if ((left_val - right_val).norm() > 1e-7 * scale) return std::nullopt;
    return std::min(std::max(t, a), b);
}

}  // namespace detail

// Fold search over one or several convex pieces of the query domain. Random
// segments are scanned for kinks, each kink is bisected to the positional
// tolerance and annotated with its derivative jump.
inline std::vector<FoldObservation> locate_folds(const QueryOracle& oracle,
                                                 const std::vector<Polytope>& pieces,
                                                 std::uint64_t budget, Rng& rng,
                                                 const RecoveryOptions& opts = {},
                                                 bool* complete = nullptr,
                                                 int segments_override = -1) {
    std::vector<FoldObservation> out;
    if (complete) *complete = true;
    detail::BudgetGuard guard(oracle, budget);

    struct PieceState {
        Polytope poly;
        Vec interior;
        std::vector<Vec> samples;
        std::vector<Vec> stars;                 // near-vertex anchors
        std::vector<std::vector<Vec>> slabs;    // points on face-parallel slabs
    };
    std::vector<PieceState> states;
    for (const auto& P : pieces) {
        auto c = polytope_interior(P);
        if (!c.feasible || c.slack <= 0) continue;
        PieceState st{P, c.x, {}, {}, {}};
        st.samples = hit_and_run(P, c.x, 128, rng);
        // star anchors: folds of a post-sigma tail often cross the domain only
        // in thin slabs hugging extreme points; segments fanned out from near
        // the vertices reach them, uniform chords essentially never do. A
        // hyperplane crossing the polytope separates its vertex set, so
        // vertex-to-vertex segments cross it once the right vertex is found;
        // random LP objectives sample vertices with probability proportional
        // to their normal-cone angle, which favors exactly the pointy corners
        // the thin slabs hug.
        {
            const int n = P.dim();
            std::vector<Vec> objectives;
            for (int d = 0; d < n; ++d) {
                Vec e = Vec::Zero(n);
                e[d] = -1.0;
                objectives.push_back(e);   // minimize y_d
                objectives.push_back(-e);  // maximize y_d
            }
            objectives.push_back(-Vec::Ones(n));  // minimize 1.y
            objectives.push_back(Vec::Ones(n));
            for (int r = 0; r < 24; ++r) objectives.push_back(random_unit_vector(n, rng));
            for (const auto& obj : objectives) {
                std::vector<Halfspace> hard = P.halfspaces;
                Mat G(static_cast<int>(hard.size()) + 2 * n, n);
                Vec g(G.rows());
                int r = 0;
                for (const auto& h : hard) {
                    G.row(r) = -h.a.transpose();
                    g[r] = h.c;
                    ++r;
                }
                for (int d = 0; d < n; ++d) {
                    G.row(r).setZero();
                    G(r, d) = 1.0;
                    g[r] = P.hi[d];
                    ++r;
                    G.row(r).setZero();
                    G(r, d) = -1.0;
                    g[r] = -P.lo[d];
                    ++r;
                }
                auto res = lp::solve(obj, G, g, Mat(0, n), Vec(0));
                if (res.status != lp::Status::Optimal) continue;
                // multi-scale nudges: wedges hugging a vertex can be far
                // smaller than any single blend toward the interior
                for (double blend : {0.02, 1e-3, 1e-4}) {
                    Vec v = res.x + blend * (c.x - res.x);
                    bool dup = false;
                    for (const auto& w : st.stars)
                        if ((w - v).norm() < 1e-9 * (1.0 + v.norm())) {
                            dup = true;
                            break;
                        }
                    if (!dup) st.stars.push_back(std::move(v));
                }
            }
        }
        // slab pools: folds of a post-sigma tail can cross the domain only in
        // wedges hugging a coordinate floor; segments inside thin slabs
        // parallel to each lower face sweep those wedges at face scale
        {
            const int n = P.dim();
            double extent = (P.hi - P.lo).maxCoeff();
            for (int d = 0; d < n; ++d) {
                for (double frac : {1e-4, 1e-3, 1e-2}) {
                    double level = P.lo[d] + frac * extent;
                    Vec e = Vec::Zero(n);
                    e[d] = 1.0;
                    std::vector<Halfspace> soft = P.halfspaces;
                    for (int q2 = 0; q2 < n; ++q2) {
                        Vec a = Vec::Zero(n);
                        a[q2] = 1.0;
                        soft.push_back({a, -P.lo[q2]});
                        a = Vec::Zero(n);
                        a[q2] = -1.0;
                        soft.push_back({a, P.hi[q2]});
                    }
                    auto seed = max_slack_point(soft, {}, {Halfspace{e, -level}}, P.lo, P.hi);
                    if (!seed.feasible || seed.slack <= 1e-9) continue;
                    Eigen::FullPivLU<Mat> lu(e.transpose());
                    Mat in_plane = lu.kernel();
                    if (in_plane.cols() == 0 || in_plane.cwiseAbs().maxCoeff() == 0) continue;
                    auto pool = hit_and_run(P, seed.x, 24, rng, &in_plane);
                    if (pool.size() >= 2) st.slabs.push_back(std::move(pool));
                }
            }
        }
        states.push_back(std::move(st));
    }
    if (states.empty()) return out;

    const int segments = segments_override > 0 ? segments_override : opts.segments_per_round;
    try {
        for (int s = 0; s < segments; ++s) {
            guard.check();
            auto& st = states[static_cast<std::size_t>(s) % states.size()];
            auto pick_sample = [&]() -> const Vec& {
                return st.samples[static_cast<std::size_t>(rng() % st.samples.size())];
            };
            auto pick_star = [&]() -> const Vec& {
                if (st.stars.empty()) return pick_sample();
                return st.stars[static_cast<std::size_t>(rng() % st.stars.size())];
            };
            Vec p, q;
            bool star_segment = false;
            switch (s % 4) {
                case 0: p = pick_sample(); q = pick_sample(); break;
                case 1:
                    p = pick_star();
                    q = pick_sample();
                    star_segment = true;
                    break;
                case 2:
                    p = pick_star();
                    q = pick_star();
                    star_segment = true;
                    break;
                default: {
                    if (st.slabs.empty()) {
                        p = pick_sample();
                        q = pick_sample();
                    } else {
                        const auto& pool =
                            st.slabs[static_cast<std::size_t>(rng() % st.slabs.size())];
                        p = pool[static_cast<std::size_t>(rng() % pool.size())];
                        q = pool[static_cast<std::size_t>(rng() % pool.size())];
                    }
                    break;
                }
            }
            if (star_segment && (rng() & 1)) {
                // truncate near the star end so folds at vertex scale land
                // away from the segment endpoints
                std::uniform_real_distribution<double> lb(std::log(3e-3), std::log(0.3));
                q = p + std::exp(lb(rng)) * (q - p);
            }
            double len = (q - p).norm();
            double diam = (st.poly.hi - st.poly.lo).norm();
            double min_len = star_segment ? 1e-5 * diam : 0.02 * diam;
            if (len < min_len) continue;
            Vec dir = (q - p) / len;
            auto phi = [&](double t) { return oracle.query(p + t * (q - p)); };
            Vec f0 = phi(0.0), f1 = phi(1.0);
            double chord_tol = 1e-9 * (1.0 + std::max(f0.norm(), f1.norm()));
            std::vector<std::pair<double, double>> brackets;
            detail::scan_segment(phi, 0.0, f0, 1.0, f1, 0, chord_tol, 1.0 / 512.0, brackets);
            for (auto [a, b] : brackets) {
                guard.check();
                auto tk = detail::refine_kink(phi, a, phi(a), b, phi(b), chord_tol,
                                              opts.kink_pos_tol);
                if (!tk) continue;
                double t = *tk;
                if (t < 5e-5 || t > 1.0 - 5e-5) continue;
                // polish with a second pass over a micro-bracket around t
                {
                    double e = 2e-7;
                    double a2 = std::max(t - e, 0.0), b2 = std::min(t + e, 1.0);
                    auto t2 = detail::refine_kink(phi, a2, phi(a2), b2, phi(b2), chord_tol,
                                                  opts.kink_pos_tol);
                    if (t2) t = *t2;
                }
                Vec xstar = p + t * (q - p);
                double h = opts.fd_step * (1.0 + xstar.norm());
                h = std::min(h, 0.4 * std::min(t, 1.0 - t) * len);
                if (h <= 0) continue;
                try {
                    auto obs = probe_jump(oracle, xstar, dir, h, opts.jump_tol);
                    if (obs) out.push_back(std::move(*obs));
                } catch (const DomainError&) {
                    // probe stepped outside a non-box domain facet; drop it
                }
            }
        }
    } catch (const BudgetExhausted&) {
        if (complete) *complete = false;
    }
    return out;
}

inline std::vector<FoldObservation> locate_folds(const QueryOracle& oracle, const Polytope& domain,
                                                 std::uint64_t budget, Rng& rng,
                                                 const RecoveryOptions& opts = {},
                                                 bool* complete = nullptr,
                                                 int segments_override = -1) {
    return locate_folds(oracle, std::vector<Polytope>{domain}, budget, rng, opts, complete,
                        segments_override);
}

namespace detail {

// Local unit normal of the fold passing through x. The gradient jump across
// the fold is the rank-one matrix w a^T, but a probe along u measures
// w |a.u|: the crossing orientation flips with the sign of a.u, so the
// component signs cannot be read off a basis probe directly. Instead, tilt
// the discovering direction u0 (for which |a.u0| > 0) by +-eta e_j and use
// |a.u0 + eta a_j|^2 - |a.u0 - eta a_j|^2 = 4 eta (a.u0) a_j,
// which recovers a_j exactly (up to one global sign) whatever the signs are.
inline std::optional<std::pair<Vec, double>> fold_normal_at(const QueryOracle& oracle,
                                                            const Vec& x, const Vec& u0, double h,
                                                            double jump_tol) {
    const int l = oracle.input_dim();
    const double eta = 0.5;
    auto jump_along = [&](const Vec& u) -> Vec {
        Vec f0 = oracle.query(x);
        Vec s1r = (oracle.query(x + h * u) - f0) / h;
        Vec s2r = (oracle.query(x + 0.5 * h * u) - f0) / (0.5 * h);
        Vec dr = 2.0 * s2r - s1r;
        Vec s1l = (f0 - oracle.query(x - h * u)) / h;
        Vec s2l = (f0 - oracle.query(x - 0.5 * h * u)) / (0.5 * h);
        Vec dl = 2.0 * s2l - s1l;
        return dr - dl;
    };
    Vec d0 = jump_along(u0);
    double m0 = d0.norm();
    if (m0 < 0.25 * jump_tol) return std::nullopt;
    Vec what = d0 / m0;  // jump carrier direction w/|w|
    Vec raw(l);
    for (int j = 0; j < l; ++j) {
        Vec e = Vec::Zero(l);
        e[j] = 1.0;
        double mp = jump_along(u0 + eta * e).dot(what);
        double mm = jump_along(u0 - eta * e).dot(what);
        raw[j] = (mp * mp - mm * mm) / (4.0 * eta * m0);
    }
    double n = raw.norm();
    if (n < 1e-12) return std::nullopt;
    Vec a = raw / n;
    // canonical sign: largest component positive
    Eigen::Index pivot;
    a.cwiseAbs().maxCoeff(&pivot);
    if (a[pivot] < 0) a = -a;
    double c = -a.dot(x);
    return std::make_pair(std::move(a), c);
}

}  // namespace detail

// Cluster fold observations into hyperplanes and test each fitted hyperplane
// for flatness across the whole domain interior. The probing oracle is needed
// for the freshly probed grid points of the flatness test.
inline std::vector<FittedFold> fit_fold_hyperplanes(const std::vector<FoldObservation>& obs,
                                                    const QueryOracle& oracle,
                                                    const std::vector<Polytope>& pieces, Rng& rng,
                                                    const RecoveryOptions& opts = {}) {
    const int l = oracle.input_dim();
    struct Cluster {
        Vec normal;
        double offset = 0.0;
        std::vector<std::size_t> members;
        std::vector<Vec> points;
    };
    std::vector<Cluster> clusters;

    for (std::size_t oi = 0; oi < obs.size(); ++oi) {
        const Vec& x = obs[oi].x;
        double h = 0.1 * opts.fd_step * (1.0 + x.norm());
        // require probing room inside the domain (tilted probes reach 1.5 h)
        bool room = false;
        for (const auto& P : pieces)
            if (P.contains(x, 1e-9) && detail::interior_margin(P, x) > 3.0 * h) {
                room = true;
                break;
            }
        if (!room) continue;
        auto est = detail::fold_normal_at(oracle, x, obs[oi].u, h, opts.jump_tol);
        if (!est) continue;
        const Vec& a = est->first;
        double c = est->second;
        bool placed = false;
        for (auto& cl : clusters) {
            if ((cl.normal - a).norm() <= 1e-4 && std::abs(cl.offset - c) <= 1e-4 * (1.0 + std::abs(c))) {
                cl.members.push_back(oi);
                cl.points.push_back(x);
                placed = true;
                break;
            }
        }
        if (!placed) clusters.push_back(Cluster{a, c, {oi}, {x}});
    }

    std::vector<FittedFold> folds;
    for (auto& cl : clusters) {
        // desired: at least l+1 supporting observations
        if (static_cast<int>(cl.points.size()) < std::min(l + 1, 2)) continue;
        FittedFold f;
        f.members = cl.members;
        Vec normal = cl.normal;
        double offset = cl.offset;
        if (static_cast<int>(cl.points.size()) >= l + 1) {
            // total-least-squares plane through the located points
            Vec centroid = Vec::Zero(l);
            for (const auto& x : cl.points) centroid += x;
            centroid /= static_cast<double>(cl.points.size());
            Mat C(static_cast<Eigen::Index>(cl.points.size()), l);
            for (std::size_t i = 0; i < cl.points.size(); ++i)
                C.row(static_cast<Eigen::Index>(i)) = (cl.points[i] - centroid).transpose();
            Eigen::JacobiSVD<Mat> svd(C, Eigen::ComputeFullV);
            Vec tls = svd.matrixV().col(l - 1);
            if (tls.dot(normal) < 0) tls = -tls;
            double tls_off = -tls.dot(centroid);
            auto max_resid = [&](const Vec& n, double o) {
                double r = 0.0;
                for (const auto& x : cl.points) r = std::max(r, std::abs(n.dot(x) + o));
                return r;
            };
            if (max_resid(tls, tls_off) < max_resid(normal, offset)) {
                normal = tls;
                offset = tls_off;
            }
        }
        {
            Eigen::Index pivot;
            normal.cwiseAbs().maxCoeff(&pivot);
            if (normal[pivot] < 0) {
                normal = -normal;
                offset = -offset;
            }
        }
        f.normal = normal / normal.norm();
        f.offset = offset / normal.norm();
        for (const auto& x : cl.points)
            f.fit_residual = std::max(f.fit_residual, std::abs(f.normal.dot(x) + f.offset));
        folds.push_back(std::move(f));
    }

    // merge duplicate hyperplanes
    for (std::size_t i = 0; i < folds.size(); ++i) {
        for (std::size_t j = i + 1; j < folds.size();) {
            double dot = folds[i].normal.dot(folds[j].normal);
            if (std::abs(dot) >= 1.0 - 1e-8 &&
                std::abs(folds[i].offset - (dot >= 0 ? 1.0 : -1.0) * folds[j].offset) <= 1e-7) {
                folds[i].members.insert(folds[i].members.end(), folds[j].members.begin(),
                                        folds[j].members.end());
                folds[i].fit_residual = std::max(folds[i].fit_residual, folds[j].fit_residual);
                folds.erase(folds.begin() + static_cast<std::ptrdiff_t>(j));
            } else {
                ++j;
            }
        }
    }

    // flatness test: freshly probed points on the hyperplane across the
    // domain interior must all exhibit folds
    for (auto& f : folds) {
        int tested = 0, with_fold = 0;
        for (const auto& P : pieces) {
            std::vector<Halfspace> soft = P.halfspaces;
            const int n = P.dim();
            for (int d = 0; d < n; ++d) {
                Vec a = Vec::Zero(n);
                a[d] = 1.0;
                soft.push_back({a, -P.lo[d]});
                a = Vec::Zero(n);
                a[d] = -1.0;
                soft.push_back({a, P.hi[d]});
            }
            auto seed = max_slack_point(soft, {}, {Halfspace{f.normal, f.offset}}, P.lo, P.hi);
            if (!seed.feasible || seed.slack <= 1e-7) continue;
            Eigen::FullPivLU<Mat> lu(f.normal.transpose());
            Mat in_plane = lu.kernel();
            std::vector<Vec> grid;
            if (in_plane.cols() > 0 && in_plane.cwiseAbs().maxCoeff() > 0) {
                Polytope Q = P;
                grid = hit_and_run(Q, seed.x, opts.grid_samples, rng, &in_plane);
            } else {
                grid.assign(static_cast<std::size_t>(std::max(1, opts.grid_samples / 8)), seed.x);
            }
            // a genuinely partial fold leaves an open fold-free region on its
            // hyperplane extension; a probe can also fail by landing within a
            // step of some other fold, so retry failures at jittered on-plane
            // points before counting the location as fold-free
            double extent = (P.hi - P.lo).maxCoeff();
            for (const auto& z : grid) {
                double h = 0.1 * opts.fd_step * (1.0 + z.norm());
                if (detail::interior_margin(P, z) < 2.0 * h) continue;
                bool saw_fold = false, usable = false;
                Vec zt = z;
                for (int attempt = 0; attempt < 3 && !saw_fold; ++attempt) {
                    double ht = 0.1 * opts.fd_step * (1.0 + zt.norm());
                    if (!P.contains(zt, 1e-9) || detail::interior_margin(P, zt) < 2.0 * ht) break;
                    try {
                        usable = true;
                        if (probe_jump(oracle, zt, f.normal, ht, opts.jump_tol)) saw_fold = true;
                    } catch (const DomainError&) {
                        usable = usable || false;
                    }
                    if (!saw_fold && in_plane.cols() > 0) {
                        Vec w = random_unit_vector(static_cast<int>(in_plane.cols()), rng);
                        zt = zt + (1e-3 * extent) * (in_plane * w);
                    }
                }
                if (!usable) continue;
                ++tested;
                if (saw_fold) ++with_fold;
            }
        }
        f.full = tested > 0 && with_fold == tested;
    }
    return folds;
}

// Resolve the active side of a fitted full hyperplane. Along the dual
// direction u_i (orthogonal to every other recovered row, positive against
// this row) all other pre-activations are frozen, so f is exactly constant on
// the inactive side and carries the jump term on the active side.
inline std::pair<Vec, double> resolve_orientation(const QueryOracle& oracle, const FittedFold& fold,
                                                  const Mat& all_rows,
                                                  const std::vector<Vec>& fold_points,
                                                  const std::vector<Polytope>& pieces,
                                                  const RecoveryOptions& opts = {}) {
    const int m = static_cast<int>(all_rows.rows());
    Eigen::JacobiSVD<Mat> svd(all_rows * all_rows.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()[m - 1] < 1e-10 * svd.singularValues()[0])
        throw Error("resolve_orientation: recovered rows nearly dependent (suspected P.a violation)");
    // which row is this fold?
    int row_idx = -1;
    for (int i = 0; i < m; ++i) {
        double dot = all_rows.row(i).dot(fold.normal);
        if (std::abs(std::abs(dot) - 1.0) < 1e-6) {
            row_idx = i;
            break;
        }
    }
    if (row_idx < 0) throw Error("resolve_orientation: fold is not among the recovered rows");
    Mat G = (all_rows * all_rows.transpose()).inverse();
    Vec u = all_rows.transpose() * G.col(row_idx);  // dual direction, a_i . u = 1
    double sgn = all_rows.row(row_idx).dot(fold.normal) >= 0 ? 1.0 : -1.0;
    // unit dual direction aligned with the fold normal's positive side; along
    // it every other pre-activation is exactly frozen
    Vec udir = (sgn / u.norm()) * u;
    const double ustep = fold.normal.dot(udir);  // > 0: pre-activation gain per unit step

    for (const auto& x : fold_points) {
        double h = opts.fd_step * (1.0 + x.norm());
        double delta = 20.0 * h;
        bool room = false;
        for (const auto& P : pieces)
            if (P.contains(x, 1e-9) && detail::interior_margin(P, x) > 1.5 * delta) {
                room = true;
                break;
            }
        if (!room) continue;
        try {
            Vec f0 = oracle.query(x);
            Vec dplus = (oracle.query(x + delta * udir) - f0) / delta;
            Vec dminus = (f0 - oracle.query(x - delta * udir)) / delta;
            double np = dplus.norm(), nm = dminus.norm();
            double mx = std::max(np, nm);
            if (mx < 0.25 * opts.jump_tol * ustep) continue;  // jump not visible here
            if (std::min(np, nm) > 0.05 * mx) continue;       // interference; try another point
            double eps = (np > nm) ? 1.0 : -1.0;           // active side of +normal?
            return {eps * fold.normal, eps * fold.offset};
        } catch (const DomainError&) {
            continue;
        }
    }
    throw OrientationUnresolved("resolve_orientation: no usable fold point with a one-sided jump");
}

// Locate folds, fit hyperplanes, keep the full ones, orient every row.
// Errors with IdentifiabilityEvidenceMissing when the full-hyperplane count
// does not match the expected layer width.
inline RecoveredLayer recover_first_layer(const QueryOracle& oracle,
                                          const std::vector<Polytope>& pieces, int expected_width,
                                          Rng& rng, const RecoveryOptions& opts = {},
                                          StageDiagnostics* diag = nullptr,
                                          std::uint64_t budget = 0) {
    if (budget == 0) budget = opts.query_budget;
    detail::BudgetGuard guard(oracle, budget);
    std::vector<FoldObservation> all_obs;
    std::vector<FittedFold> folds;
    int full_count = 0;
    for (int round = 0; round < opts.max_rounds; ++round) {
        guard.check();
        int segs = opts.segments_per_round << round;
        std::uint64_t slice = budget - guard.used();
        auto obs = locate_folds(oracle, pieces, slice, rng, opts, nullptr, segs);
        all_obs.insert(all_obs.end(), obs.begin(), obs.end());
        folds = fit_fold_hyperplanes(all_obs, oracle, pieces, rng, opts);
        full_count = 0;
        for (const auto& f : folds) full_count += f.full;
        if (diag) {
            diag->observations = static_cast<int>(all_obs.size());
            diag->clusters = static_cast<int>(folds.size());
            diag->full_hyperplanes = full_count;
        }
        if (full_count >= expected_width) break;
    }
    if (full_count != expected_width) {
        std::ostringstream os;
        os << "expected " << expected_width << " full fold hyperplanes, found " << full_count
           << " (from " << all_obs.size() << " fold observations)";
        throw IdentifiabilityEvidenceMissing(os.str(), full_count, expected_width);
    }

    Mat rows(expected_width, oracle.input_dim());
    Vec offsets(expected_width);
    Vec confidence(expected_width);
    std::vector<const FittedFold*> fulls;
    for (const auto& f : folds)
        if (f.full) fulls.push_back(&f);
    for (int i = 0; i < expected_width; ++i) {
        rows.row(i) = fulls[static_cast<std::size_t>(i)]->normal.transpose();
        offsets[i] = fulls[static_cast<std::size_t>(i)]->offset;
        confidence[i] = fulls[static_cast<std::size_t>(i)]->fit_residual;
    }

    RecoveredLayer layer;
    layer.M = Mat(expected_width, oracle.input_dim());
    layer.b = Vec(expected_width);
    layer.confidence = confidence;
    for (int i = 0; i < expected_width; ++i) {
        const FittedFold* f = fulls[static_cast<std::size_t>(i)];
        std::vector<Vec> pts;
        for (auto mi : f->members) pts.push_back(all_obs[mi].x);
        auto [row, bias] = resolve_orientation(oracle, *f, rows, pts, pieces, opts);
        layer.M.row(i) = row.transpose();
        layer.b[i] = bias;
    }
    layer.oriented = true;
    if (diag) diag->max_fit_residual = confidence.size() ? confidence.maxCoeff() : 0.0;
    return layer;
}

// ----------------------------- layer peeling --------------------------------

// Residual oracle: answers g(y) for y in the all-active cone by lifting y
// through the recovered layer, x = anchor + M^+ (y - y_anchor), and querying
// the base oracle there. sigma is exactly invertible on the cone, so the
// value is exact.
class ResidualOracle : public QueryOracle {
public:
    ResidualOracle(std::shared_ptr<const QueryOracle> base, Mat M, Vec b, double margin,
                   std::vector<Vec> anchors, Polytope primary_domain,
                   std::vector<Polytope> pieces)
        : QueryOracle(std::move(primary_domain), static_cast<int>(M.rows()), base->output_dim()),
          base_(std::move(base)),
          M_(std::move(M)),
          b_(std::move(b)),
          margin_(margin),
          pieces_(std::move(pieces)) {
        Mat G = (M_ * M_.transpose()).inverse();
        lift_ = M_.transpose() * G;
        for (auto& x0 : anchors) {
            Vec y0 = M_ * x0 + b_;
            anchor_x_.push_back(std::move(x0));
            anchor_y_.push_back(std::move(y0));
        }
    }

    bool contains_point(const Vec& y) const override { return lift_point(y).has_value(); }

    double margin() const { return margin_; }
    const std::vector<Polytope>& pieces() const { return pieces_; }

    std::optional<Vec> lift_point(const Vec& y) const {
        if (y.minCoeff() < margin_ * (1.0 - 1e-9)) return std::nullopt;
        for (std::size_t a = 0; a < anchor_x_.size(); ++a) {
            Vec x = anchor_x_[a] + lift_ * (y - anchor_y_[a]);
            if (base_->contains_point(x)) return x;
        }
        return std::nullopt;
    }

protected:
    Vec eval_impl(const Vec& y) const override {
        auto x = lift_point(y);
        if (!x) throw DomainError("residual oracle: infeasible lifted query");
        return base_->query(*x);
    }

private:
    std::shared_ptr<const QueryOracle> base_;
    Mat M_;
    Vec b_;
    Mat lift_;
    double margin_;
    std::vector<Vec> anchor_x_;
    std::vector<Vec> anchor_y_;
    std::vector<Polytope> pieces_;
};

struct PeelResult {
    std::shared_ptr<ResidualOracle> oracle;
    std::vector<Polytope> pieces;  // convex pieces of the residual domain
};

// Build the residual oracle over {y : y_i >= margin, lift(y) in domain}.
// Several anchors are used: each one contributes a convex slice of the
// all-active cone, widening the fold-search coverage of the next stage.
// margin_shrink < 1 tightens the margin; the recovery pipeline retries with
// a shrunken margin when a tail fold hides between the margin floor and the
// coordinate boundary.
inline PeelResult peel_layer(std::shared_ptr<const QueryOracle> base, const RecoveredLayer& layer,
                             const std::vector<Polytope>& base_pieces, Rng& rng,
                             const RecoveryOptions& opts = {}, double margin_shrink = 1.0) {
    const Mat& M = layer.M;
    const Vec& b = layer.b;
    const int m = static_cast<int>(M.rows());
    {
        Eigen::JacobiSVD<Mat> svd(M);
        if (svd.singularValues()[svd.singularValues().size() - 1] <
            1e-10 * svd.singularValues()[0] * std::max(M.rows(), M.cols()))
            throw Error("peel_layer: recovered layer is not full row rank");
    }

    // best all-active slack over the base pieces
    std::vector<std::pair<Vec, double>> anchors;  // (x0, slack)
    for (const auto& P : base_pieces) {
        std::vector<Halfspace> soft = P.halfspaces;
        for (int i = 0; i < m; ++i) soft.push_back({M.row(i).transpose(), b[i]});
        const int n = P.dim();
        std::vector<Halfspace> box_soft = soft;
        for (int d = 0; d < n; ++d) {
            Vec a = Vec::Zero(n);
            a[d] = 1.0;
            box_soft.push_back({a, -P.lo[d]});
            a = Vec::Zero(n);
            a[d] = -1.0;
            box_soft.push_back({a, P.hi[d]});
        }
        auto r = max_slack_point(box_soft, {}, {}, P.lo, P.hi, 1e9);
        if (!r.feasible || r.slack <= 1e-7) continue;
        anchors.emplace_back(r.x, r.slack);
        // extra anchors spread across the all-active cell
        Polytope cone = P;
        for (int i = 0; i < m; ++i)
            cone.halfspaces.push_back({M.row(i).transpose(), b[i] - 0.25 * r.slack});
        auto extra = hit_and_run(cone, r.x, std::max(0, opts.anchors - 1), rng);
        for (auto& x : extra) anchors.emplace_back(x, r.slack);
        if (static_cast<int>(anchors.size()) >= opts.anchors) break;
    }
    if (anchors.empty())
        throw IdentifiabilityEvidenceMissing(
            "peel_layer: the all-active cone of the recovered layer does not meet the domain "
            "(domain restriction; the conditions on the tail cannot be probed)",
            0, m);

    double slack = anchors.front().second;
    double margin = margin_shrink * std::min(opts.query_margin_scale, 0.125 * slack);

    Mat G = (M * M.transpose()).inverse();
    Mat lift = M.transpose() * G;

    // y-space bounds: conservative box from per-coordinate extremes
    Vec ylo = Vec::Constant(m, margin);
    Vec yhi(m);
    {
        for (int i = 0; i < m; ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& P : base_pieces) {
                Vec obj = Vec::Zero(P.dim());
                obj = M.row(i).transpose();
                // maximize M_i x + b_i over the piece via LP
                std::vector<Halfspace> hard = P.halfspaces;
                Mat Gg(static_cast<int>(hard.size()) + 2 * P.dim(), P.dim());
                Vec gg(Gg.rows());
                int r = 0;
                for (const auto& h : hard) {
                    Gg.row(r) = -h.a.transpose();
                    gg[r] = h.c;
                    ++r;
                }
                for (int d = 0; d < P.dim(); ++d) {
                    Gg.row(r).setZero();
                    Gg(r, d) = 1.0;
                    gg[r] = P.hi[d];
                    ++r;
                    Gg.row(r).setZero();
                    Gg(r, d) = -1.0;
                    gg[r] = -P.lo[d];
                    ++r;
                }
                auto res = lp::solve(obj, Gg, gg, Mat(0, P.dim()), Vec(0));
                if (res.status == lp::Status::Optimal)
                    best = std::max(best, res.objective + b[i]);
            }
            yhi[i] = best > ylo[i] ? best : ylo[i] + 1.0;
        }
    }

    std::vector<Vec> anchor_points;
    std::vector<Polytope> pieces;
    for (const auto& [x0, sl] : anchors) {
        (void)sl;
        Vec y0 = M * x0 + b;
        Polytope piece;
        piece.lo = ylo;
        piece.hi = yhi;
        // lift(y) = x0 + lift (y - y0) must satisfy the base piece constraints
        for (const auto& P : base_pieces) {
            if (!P.contains(x0, 1e-9)) continue;
            Vec shift = x0 - lift * y0;
            for (const auto& h : P.halfspaces)
                piece.halfspaces.push_back(
                    {lift.transpose() * h.a, h.a.dot(shift) + h.c});
            for (int d = 0; d < P.dim(); ++d) {
                Vec e = Vec::Zero(P.dim());
                e[d] = 1.0;
                piece.halfspaces.push_back({lift.transpose() * e, shift[d] - P.lo[d]});
                piece.halfspaces.push_back({-(lift.transpose() * e), P.hi[d] - shift[d]});
            }
            break;
        }
        anchor_points.push_back(x0);
        pieces.push_back(std::move(piece));
    }

    Polytope primary = pieces.front();
    auto oracle = std::make_shared<ResidualOracle>(std::move(base), M, b, margin,
                                                   std::move(anchor_points), std::move(primary),
                                                   pieces);
    return PeelResult{std::move(oracle), std::move(pieces)};
}

// Least-squares fit of the terminal affine map from interior samples of the
// residual domain. Throws NotAffine when the residual is inconsistent with an
// affine map (layer count mismatch).
inline std::pair<Mat, Vec> recover_last_affine(const QueryOracle& oracle,
                                               const std::vector<Polytope>& pieces, Rng& rng,
                                               const RecoveryOptions& opts = {},
                                               double* residual_out = nullptr) {
    const int m = oracle.input_dim();
    const int n_out = oracle.output_dim();
    std::vector<Vec> ys;
    for (const auto& P : pieces) {
        auto c = polytope_interior(P);
        if (!c.feasible || c.slack <= 0) continue;
        auto pts = hit_and_run(P, c.x, std::max(3 * (m + 1), 16), rng);
        ys.insert(ys.end(), pts.begin(), pts.end());
    }
    if (static_cast<int>(ys.size()) < m + 1)
        throw Error("recover_last_affine: not enough interior samples");
    Mat X(static_cast<Eigen::Index>(ys.size()), m + 1);
    Mat F(static_cast<Eigen::Index>(ys.size()), n_out);
    for (std::size_t i = 0; i < ys.size(); ++i) {
        X.row(static_cast<Eigen::Index>(i)).head(m) = ys[i].transpose();
        X(static_cast<Eigen::Index>(i), m) = 1.0;
        F.row(static_cast<Eigen::Index>(i)) = oracle.query(ys[i]).transpose();
    }
    Mat theta = X.colPivHouseholderQr().solve(F);
    double resid = 0.0, fscale = 1.0 + F.cwiseAbs().maxCoeff();
    Mat R = X * theta - F;
    resid = R.cwiseAbs().maxCoeff() / fscale;
    if (residual_out) *residual_out = resid;
    if (resid > opts.affine_fit_tol)
        throw NotAffine("recover_last_affine: residual map is not affine (fit residual " +
                            std::to_string(resid) + ")",
                        resid);
    Mat M = theta.topRows(m).transpose();
    Vec b = theta.row(m).transpose();
    return {std::move(M), std::move(b)};
}

// Fit the output affine map through the last recovered sigma-layer: sample x
// across the current domain, compute y = relu(M x + b) directly (exact once
// the layer is right, on every activation pattern), and solve the
// least-squares system [Y 1] theta = f(x).
inline std::pair<Mat, Vec> fit_output_affine(const QueryOracle& oracle,
                                             const RecoveredLayer& layer,
                                             const std::vector<Polytope>& pieces, Rng& rng,
                                             const RecoveryOptions& opts = {},
                                             double* residual_out = nullptr) {
    const int m = static_cast<int>(layer.M.rows());
    const int n_out = oracle.output_dim();
    std::vector<Vec> xs;
    for (const auto& P : pieces) {
        auto c = polytope_interior(P);
        if (!c.feasible || c.slack <= 0) continue;
        auto pts = hit_and_run(P, c.x, std::max(4 * (m + 1), 48), rng);
        xs.insert(xs.end(), pts.begin(), pts.end());
    }
    // every channel must be activated by some samples, else its output
    // column is invisible to the fit; a channel's active wedge can be tiny,
    // so target it directly with an LP and sample inside
    for (int i = 0; i < m; ++i) {
        const Polytope* best_piece = nullptr;
        SlackResult best;
        for (const auto& P : pieces) {
            std::vector<Halfspace> soft{Halfspace{layer.M.row(i).transpose(), layer.b[i]}};
            std::vector<Halfspace> hard = P.halfspaces;
            auto r = max_slack_point(soft, hard, {}, P.lo, P.hi, 1e9);
            if (r.feasible && (!best_piece || r.slack > best.slack)) {
                best_piece = &P;
                best = r;
            }
        }
        if (!best_piece || best.slack <= 0) continue;  // channel dead on the domain
        Polytope active = *best_piece;
        active.halfspaces.push_back(
            Halfspace{layer.M.row(i).transpose(), layer.b[i] - 0.5 * best.slack});
        auto pts = hit_and_run(active, best.x, 16, rng);
        xs.push_back(best.x);
        xs.insert(xs.end(), pts.begin(), pts.end());
    }
    if (static_cast<int>(xs.size()) < m + 1)
        throw Error("fit_output_affine: not enough interior samples");
    Mat X(static_cast<Eigen::Index>(xs.size()), m + 1);
    Mat F(static_cast<Eigen::Index>(xs.size()), n_out);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Vec y = relu(layer.M * xs[i] + layer.b);
        X.row(static_cast<Eigen::Index>(i)).head(m) = y.transpose();
        X(static_cast<Eigen::Index>(i), m) = 1.0;
        F.row(static_cast<Eigen::Index>(i)) = oracle.query(xs[i]).transpose();
    }
    Mat theta = X.colPivHouseholderQr().solve(F);
    double fscale = 1.0 + F.cwiseAbs().maxCoeff();
    double resid = (X * theta - F).cwiseAbs().maxCoeff() / fscale;
    if (residual_out) *residual_out = resid;
    if (resid > opts.affine_fit_tol)
        throw NotAffine("fit_output_affine: residual map is not affine (fit residual " +
                            std::to_string(resid) + ")",
                        resid);
    Mat M = theta.topRows(m).transpose();
    Vec b = theta.row(m).transpose();
    return {std::move(M), std::move(b)};
}

// ------------------------------ full pipeline -------------------------------

inline RecoveryResult recover_network(std::shared_ptr<const QueryOracle> oracle,
                                      const Architecture& arch, const RecoveryOptions& opts = {}) {
    arch.validate();
    RecoveryResult result;
    result.diag.seed = opts.seed;
    Rng rng(opts.seed);
    const int K = arch.depth;
    detail::BudgetGuard guard(*oracle, opts.query_budget);

    std::vector<Polytope> pieces{oracle->domain()};
    std::shared_ptr<const QueryOracle> current = std::move(oracle);
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    int k = K - 1;
    try {
        RecoveredLayer innermost;
        std::shared_ptr<const QueryOracle> prev_oracle;
        std::vector<Polytope> prev_pieces;
        RecoveredLayer prev_layer;
        for (; k >= 1; --k) {
            StageDiagnostics stage;
            stage.layer_k = k;
            stage.queries_before = guard.used();
            const int width = arch.width(k);
            RecoveredLayer layer;
            double margin_shrink = 1.0;
            for (int attempt = 0;; ++attempt) {
                std::uint64_t stage_budget = opts.query_budget - guard.used();
                try {
                    layer = recover_first_layer(*current, pieces, width, rng, opts, &stage,
                                                stage_budget);
                    break;
                } catch (const IdentifiabilityEvidenceMissing& e) {
                    // a tail fold may hide between the lifted-query margin and
                    // the coordinate boundary: re-peel with a tighter margin
                    if (k == K - 1 || e.found_count >= e.expected_count || attempt >= 2) throw;
                    margin_shrink /= 32.0;
                    stage.note = "re-peeled with margin shrink " + std::to_string(margin_shrink);
                    auto peel =
                        peel_layer(prev_oracle, prev_layer, prev_pieces, rng, opts, margin_shrink);
                    current = peel.oracle;
                    pieces = peel.pieces;
                }
            }
            weights.push_back(layer.M);
            biases.push_back(layer.b);
            result.diag.stages.push_back(stage);
            guard.check();
            if (k >= 2) {
                prev_oracle = current;
                prev_pieces = pieces;
                prev_layer = layer;
                auto peel = peel_layer(current, layer, pieces, rng, opts);
                current = peel.oracle;
                pieces = peel.pieces;
            } else {
                innermost = std::move(layer);
            }
        }
        // terminal affine map, fitted through the innermost recovered layer
        double resid = 0.0;
        auto [M0, b0] = fit_output_affine(*current, innermost, pieces, rng, opts, &resid);
        weights.push_back(std::move(M0));
        biases.push_back(std::move(b0));
        StageDiagnostics final_stage;
        final_stage.layer_k = 0;
        final_stage.max_fit_residual = resid;
        result.diag.stages.push_back(final_stage);
    } catch (const BudgetExhausted& e) {
        result.diag.failure = e.what();
        result.diag.failed_layer = k;
        result.diag.suspected_condition = "budget";
        result.diag.queries_used = guard.used();
        return result;
    } catch (const Error& e) {
        result.diag.failure = e.what();
        result.diag.failed_layer = k;
        if (k == K - 1)
            result.diag.suspected_condition = "P.b or P.c at k=" + std::to_string(k);
        else
            result.diag.suspected_condition =
                "P.c at k=" + std::to_string(k + 1) + " (or the peeling domain restriction)";
        result.diag.queries_used = guard.used();
        return result;
    }

    NetworkParams net;
    net.arch = arch;
    net.weights = std::move(weights);
    net.biases = std::move(biases);
    try {
        net.validate();
    } catch (const Error& e) {
        result.diag.failure = std::string("assembled network invalid: ") + e.what();
        result.diag.queries_used = guard.used();
        return result;
    }

    result.network = std::move(net);
    result.diag.success = true;
    result.diag.queries_used = guard.used();
    return result;
}

// Soundness check: fresh samples of the original domain, relative sup gap.
inline double verify_recovery(const QueryOracle& oracle, const NetworkParams& recovered,
                              int samples, std::uint64_t seed) {
    HaltonSampler sampler(oracle.input_dim(), seed);
    const Polytope& D = oracle.domain();
    double sup = 0.0;
    for (int i = 0; i < samples; ++i) {
        Vec x = sampler.next_in_box(D.lo, D.hi);
        if (!D.contains(x)) continue;
        Vec truth = oracle.query(x);
        double gap = (forward(recovered, x) - truth).cwiseAbs().maxCoeff() /
                     (1.0 + truth.cwiseAbs().maxCoeff());
        sup = std::max(sup, gap);
    }
    return sup;
}

}  // namespace reluid
