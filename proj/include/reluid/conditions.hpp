#pragma once

// Numeric verification of the sufficient conditions P (per layer: full row
// rank, boundary crossing of the domain interior, downstream sensitivity,
// and no full hyperplane hidden inside the region-preimage boundaries).
// Verdicts are three-valued; every fail carries a re-checkable witness and
// every sampled decision is flagged as such.

#include "reluid/regions.hpp"

#include <json.hpp>

#include <sstream>

namespace reluid {

enum class Verdict { Pass, Fail, Undetermined };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Pass: return "pass";
        case Verdict::Fail: return "fail";
        default: return "undetermined";
    }
}

struct ConditionTolerances {
    double rank_tol = 1e-10;
    double col_tol = 1e-10;
    double membership = 1e-8;
    double interior_slack = 1e-9;
};

struct ConditionOptions {
    ConditionTolerances tol;
    std::uint64_t seed = 20260810;
    int pd_samples = 512;
    int pd_min_samples = 16;
    int pb_sample_pairs = 512;
    int region_max_units = 24;
    int pushforward_dim_cap = 6;
    int cloud_samples = 512;
};

struct PaResult {
    Verdict verdict = Verdict::Undetermined;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    std::string note;
};

struct PbResult {
    Verdict verdict = Verdict::Undetermined;
    bool sampled = false;
    std::vector<Vec> witnesses;  // one point per neuron on pass
    int failing_neuron = -1;
    std::string note;
};

struct PcOffender {
    std::vector<std::uint8_t> pattern;
    int column = -1;
    Vec point;          // y in E_i ∩ D ∩ Omega_k
    double col_norm = 0.0;
};

struct PcResult {
    Verdict verdict = Verdict::Undetermined;
    bool sampled = false;
    std::vector<PcOffender> offenders;
    std::string note;
};

struct PdCandidate {
    Vec normal;
    double offset = 0.0;
    int samples_total = 0;
    int samples_on_boundary = 0;
    bool covered = false;   // true -> violates P.d
    bool meets_interior = true;
};

struct PdResult {
    Verdict verdict = Verdict::Undetermined;
    bool sampled = true;
    std::vector<PdCandidate> candidates;
    int failing_candidate = -1;
    std::string note;
};

struct LayerConditionReport {
    int k = 0;
    PaResult a;
    PbResult b;
    PcResult c;
    PdResult d;
};

struct ConditionReport {
    std::vector<LayerConditionReport> layers;  // k = 1 .. K-1
    Verdict overall = Verdict::Undetermined;
    std::uint64_t seed = 0;
    ConditionTolerances tol;
};

// ------------------------------- P.a ---------------------------------------

inline PaResult check_P_a(const NetworkParams& p, int k, const ConditionTolerances& tol = {}) {
    PaResult out;
    const Mat& M = p.weight(k);
    if (M.rows() > M.cols()) {
        out.verdict = Verdict::Fail;
        std::ostringstream os;
        os << "M^" << k << " is " << M.rows() << "x" << M.cols()
           << "; more rows than columns cannot have full row rank";
        out.note = os.str();
        Eigen::JacobiSVD<Mat> svd(M);
        out.sigma_max = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
        out.sigma_min = 0.0;
        return out;
    }
    Eigen::JacobiSVD<Mat> svd(M);
    const auto& s = svd.singularValues();
    out.sigma_max = s.size() ? s[0] : 0.0;
    out.sigma_min = s.size() ? s[s.size() - 1] : 0.0;
    double thresh = tol.rank_tol * out.sigma_max * std::max(M.rows(), M.cols());
    out.verdict = (out.sigma_min >= thresh && out.sigma_max > 0.0) ? Verdict::Pass : Verdict::Fail;
    if (out.verdict == Verdict::Fail && out.note.empty()) out.note = "rank-deficient";
    return out;
}

// ------------------------------- P.b ---------------------------------------

inline PbResult check_P_b(const NetworkParams& p, const Vec& lo, const Vec& hi, int k,
                          const Pushforward& pf_next, const ConditionOptions& opt = {}) {
    PbResult out;
    const Mat& M = p.weight(k);
    const Vec& b = p.bias(k);
    const int l = static_cast<int>(lo.size());
    out.witnesses.assign(static_cast<std::size_t>(M.rows()), Vec());
    Rng rng(opt.seed ^ (0xb0ull + static_cast<std::uint64_t>(k)));

    // With an exact pushforward and no full-dimensional cell, Omega_{k+1}
    // has empty interior (a finite union of lower-dimensional images), so
    // no hyperplane can cross it: P.b fails outright.
    if (pf_next.exact) {
        bool any_full = false;
        for (const auto& cell : pf_next.cells) any_full |= cell.image_full_dim;
        if (!any_full) {
            out.verdict = Verdict::Fail;
            out.failing_neuron = 0;
            out.note = "Omega_{k+1} has empty interior (no full-dimensional pushforward cell)";
            return out;
        }
    }

    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        Verdict vi = Verdict::Undetermined;
        if (pf_next.exact) {
            // exact mode: the hyperplane must cross the open image of some
            // full-dimensional pushforward cell (open source + surjective
            // map). Crossings confined to degenerate strata do not count:
            // those lie outside the interior of Omega_{k+1}.
            vi = Verdict::Fail;
            for (const auto& cell : pf_next.cells) {
                if (!cell.image_full_dim) continue;
                std::vector<Halfspace> soft = cell.constraints;
                for (int d = 0; d < l; ++d) {
                    Vec a = Vec::Zero(l);
                    a[d] = 1.0;
                    soft.push_back({a, -lo[d]});
                    a = Vec::Zero(l);
                    a[d] = -1.0;
                    soft.push_back({a, hi[d]});
                }
                Vec arow = cell.map.A.transpose() * M.row(i).transpose();
                double crow = M.row(i).dot(cell.map.b) + b[i];
                auto r = max_slack_point(soft, {}, {Halfspace{arow, crow}}, lo, hi);
                if (r.feasible && r.slack >= opt.tol.interior_slack) {
                    vi = Verdict::Pass;
                    out.witnesses[static_cast<std::size_t>(i)] = cell.map(r.x);
                    break;
                }
            }
            if (vi == Verdict::Fail) {
                bool touches = false;
                for (const auto& cell : pf_next.cells) {
                    Vec arow = cell.map.A.transpose() * M.row(i).transpose();
                    double crow = M.row(i).dot(cell.map.b) + b[i];
                    if (feasible_point(cell.constraints, {Halfspace{arow, crow}}, lo, hi)) {
                        touches = true;
                        break;
                    }
                }
                out.failing_neuron = static_cast<int>(i);
                out.note = touches ? "hyperplane " + std::to_string(i) +
                                         " meets Omega_{k+1} only outside its interior"
                                   : "hyperplane " + std::to_string(i) +
                                         " does not meet Omega_{k+1} at all";
            }
        } else {
            // sampled fallback: look for a sign change of the pre-activation
            // along segments of Omega pushed through f_{k+1}
            out.sampled = true;
            auto pre = [&](const Vec& x) {
                return M.row(i).dot(eval_f_k(p, k + 1, x)) + b[i];
            };
            bool found = false;
            bool saw_pos = false, saw_neg = false;
            Vec xpos, xneg;
            for (int s = 0; s < opt.pb_sample_pairs && !found; ++s) {
                Vec x = uniform_in_box(lo, hi, rng);
                double q = pre(x);
                if (q > 0) {
                    saw_pos = true;
                    xpos = x;
                } else if (q < 0) {
                    saw_neg = true;
                    xneg = x;
                }
                if (saw_pos && saw_neg) {
                    // bisect along the segment (stays in the box, hence the
                    // image path stays inside Omega_{k+1})
                    Vec a = xneg, c = xpos;
                    for (int it = 0; it < 200; ++it) {
                        Vec mid = 0.5 * (a + c);
                        (pre(mid) < 0 ? a : c) = mid;
                    }
                    Vec z = 0.5 * (a + c);
                    out.witnesses[static_cast<std::size_t>(i)] = eval_f_k(p, k + 1, z);
                    vi = Verdict::Pass;
                    found = true;
                }
            }
            if (!found) {
                vi = Verdict::Fail;
                out.failing_neuron = static_cast<int>(i);
                out.note = "pre-activation of neuron " + std::to_string(i) +
                           " has constant sign over all sampled points";
            }
        }
        if (vi != Verdict::Pass) {
            out.verdict = vi;
            return out;
        }
    }
    out.verdict = Verdict::Pass;
    return out;
}

// ------------------------------- P.c ---------------------------------------

inline PcResult check_P_c(const NetworkParams& p, const Vec& lo, const Vec& hi, int k,
                          const std::vector<Region>& regions, const Pushforward& pf_k,
                          const ConditionOptions& opt = {}) {
    PcResult out;
    const int nk = p.arch.width(k);
    out.sampled = !pf_k.exact;
    for (const auto& region : regions) {
        for (int i = 0; i < nk; ++i) {
            // decide nonemptiness of E_i ∩ D ∩ Omega_k
            bool nonempty = false;
            Vec witness;
            if (pf_k.exact) {
                for (const auto& cell : pf_k.cells) {
                    std::vector<Halfspace> ineqs = cell.constraints;
                    for (const auto& h : region.halfspaces) {
                        Vec a = cell.map.A.transpose() * h.a;
                        double c = h.a.dot(cell.map.b) + h.c;
                        ineqs.push_back({std::move(a), c});
                    }
                    Halfspace eq{cell.map.A.row(i).transpose(), cell.map.b[i]};
                    if (auto x = feasible_point(ineqs, {eq}, lo, hi)) {
                        nonempty = true;
                        witness = cell.map(*x);
                        break;
                    }
                }
            } else {
                for (Eigen::Index r = 0; r < pf_k.cloud.rows(); ++r) {
                    Vec y = pf_k.cloud.row(r).transpose();
                    if (std::abs(y[i]) > opt.tol.membership) continue;
                    bool in = true;
                    for (const auto& h : region.halfspaces)
                        if (h.a.dot(y) + h.c < -opt.tol.membership * std::max(1.0, h.a.norm())) {
                            in = false;
                            break;
                        }
                    if (in) {
                        nonempty = true;
                        witness = y;
                        break;
                    }
                }
            }
            if (!nonempty) continue;
            double col_norm = region.V.col(i).norm();
            if (col_norm < opt.tol.col_tol) {
                PcOffender off;
                off.pattern = flatten_pattern(region.pattern);
                off.column = i;
                off.point = witness;
                off.col_norm = col_norm;
                out.offenders.push_back(std::move(off));
            }
        }
    }
    out.verdict = out.offenders.empty() ? Verdict::Pass : Verdict::Fail;
    return out;
}

// ------------------------------- P.d ---------------------------------------

// Only hyperplanes carrying a facet of the preimage boundary can be covered
// by it: candidates are the facet hyperplanes of the regions of g_k pulled
// back through every activation cell of h_k.
inline PdResult check_P_d(const NetworkParams& p, const Vec& lo, const Vec& hi, int k,
                          const std::vector<Region>& regions, const Pushforward& pf_next,
                          const ConditionOptions& opt = {}) {
    PdResult out;
    const int K = p.depth();
    const int l = p.arch.width(k + 1);
    if (k == 1) {
        out.verdict = Verdict::Pass;
        out.sampled = false;
        out.note = "g_1 is affine; the preimage boundary union is empty";
        return out;
    }
    (void)K;
    Rng rng(opt.seed ^ (0xd0ull + static_cast<std::uint64_t>(k)));

    // facet hyperplanes of the regions, deduplicated
    std::vector<Halfspace> facets;
    auto push_unique = [](std::vector<Halfspace>& list, Vec a, double c) {
        double n = a.norm();
        if (n < 1e-12) return;
        a /= n;
        c /= n;
        Eigen::Index pivot;
        a.cwiseAbs().maxCoeff(&pivot);
        if (a[pivot] < 0) {
            a = -a;
            c = -c;
        }
        for (const auto& h : list)
            if ((h.a - a).norm() < 1e-9 && std::abs(h.c - c) < 1e-9) return;
        list.push_back({std::move(a), c});
    };
    for (const auto& region : regions)
        for (const auto& h : region.halfspaces) push_unique(facets, h.a, h.c);

    // activation cells of h_k over a window around Omega_{k+1}
    Vec wlo(l), whi(l);
    {
        Vec blo = Vec::Constant(l, std::numeric_limits<double>::infinity());
        Vec bhi = Vec::Constant(l, -std::numeric_limits<double>::infinity());
        blo = blo.cwiseMin(lo.size() == l ? lo : Vec::Constant(l, 0.0));
        bhi = bhi.cwiseMax(hi.size() == l ? hi : Vec::Constant(l, 0.0));
        // include the pushforward bbox of Omega_{k+1}
        if (pf_next.bbox_lo.size() == l) {
            blo = blo.cwiseMin(pf_next.bbox_lo);
            bhi = bhi.cwiseMax(pf_next.bbox_hi);
        }
        Vec pad = 0.5 * (bhi - blo).cwiseMax(Vec::Constant(l, 1.0));
        wlo = blo - pad;
        whi = bhi + pad;
    }
    std::vector<SigmaLayer> hk{{p.weight(k), p.bias(k)}};
    CellEnumOptions copt;
    copt.lo = wlo;
    copt.hi = whi;
    copt.interior_slack = opt.tol.interior_slack;
    copt.max_units = opt.region_max_units;
    copt.rng_seed = opt.seed ^ 0xce11ull;
    auto hcells = enumerate_cells(hk, copt);

    std::vector<Halfspace> candidates;
    for (const auto& cell : hcells)
        for (const auto& f : facets)
            push_unique(candidates, cell.map.A.transpose() * f.a, f.a.dot(cell.map.b) + f.c);

    if (!pf_next.exact && !candidates.empty()) {
        out.verdict = Verdict::Undetermined;
        out.note = "no exact pushforward of Omega_{k+1}; interior sampling unavailable";
        for (const auto& cand : candidates)
            out.candidates.push_back(PdCandidate{cand.a, cand.c, 0, 0, false, false});
        return out;
    }

    bool any_undetermined = false;
    for (const auto& cand : candidates) {
        PdCandidate pc;
        pc.normal = cand.a;
        pc.offset = cand.c;
        // sample the candidate within the interior of Omega_{k+1}
        std::vector<Vec> samples;
        if (pf_next.exact) {
            std::vector<const PushforwardCell*> cells;
            for (const auto& cell : pf_next.cells)
                if (cell.image_full_dim) cells.push_back(&cell);
            int per_cell = cells.empty() ? 0 : std::max(1, opt.pd_samples / static_cast<int>(cells.size()));
            for (const auto* cell : cells) {
                const int n_in = static_cast<int>(lo.size());
                std::vector<Halfspace> soft = cell->constraints;
                for (int d = 0; d < n_in; ++d) {
                    Vec a = Vec::Zero(n_in);
                    a[d] = 1.0;
                    soft.push_back({a, -lo[d]});
                    a = Vec::Zero(n_in);
                    a[d] = -1.0;
                    soft.push_back({a, hi[d]});
                }
                Vec arow = cell->map.A.transpose() * cand.a;
                double crow = cand.a.dot(cell->map.b) + cand.c;
                auto seed = max_slack_point(soft, {}, {Halfspace{arow, crow}}, lo, hi);
                if (!seed.feasible || seed.slack < opt.tol.interior_slack) continue;
                samples.push_back(cell->map(seed.x));
                if (arow.norm() < 1e-12) continue;
                // hit-and-run within the cell restricted to the candidate
                Eigen::FullPivLU<Mat> lu(arow.transpose());
                Mat null_basis = lu.kernel();
                if (null_basis.cols() > 0 && null_basis.cwiseAbs().maxCoeff() > 0) {
                    Polytope P{lo, hi, cell->constraints};
                    auto pts = hit_and_run(P, seed.x, per_cell, rng, &null_basis);
                    for (const auto& x : pts) samples.push_back(cell->map(x));
                }
            }
        }
        if (samples.empty()) {
            pc.meets_interior = false;
            pc.covered = false;
            out.candidates.push_back(std::move(pc));
            continue;  // cleared: no demonstrable interior intersection
        }
        int on = 0;
        for (const auto& y : samples)
            if (boundary_union_distance(p, k, y) <= opt.tol.membership) ++on;
        pc.samples_total = static_cast<int>(samples.size());
        pc.samples_on_boundary = on;
        if (on == pc.samples_total) {
            // a point-hyperplane (l == 1) is fully determined by one sample
            if (pc.samples_total >= opt.pd_min_samples || l == 1)
                pc.covered = true;
            else
                any_undetermined = true;
        }
        out.candidates.push_back(std::move(pc));
    }

    out.verdict = Verdict::Pass;
    for (std::size_t ci = 0; ci < out.candidates.size(); ++ci) {
        if (out.candidates[ci].covered) {
            out.verdict = Verdict::Fail;
            out.failing_candidate = static_cast<int>(ci);
            out.note = "a full hyperplane inside Omega interior is covered by the preimage boundary";
            break;
        }
    }
    if (out.verdict == Verdict::Pass && any_undetermined) {
        out.verdict = Verdict::Undetermined;
        out.note = "sampling budget exhausted with mixed evidence";
    }
    return out;
}

// ------------------------------ aggregate -----------------------------------

inline ConditionReport check_P(const NetworkParams& p, const Vec& lo, const Vec& hi,
                               const ConditionOptions& opt = {}) {
    p.validate();
    if (lo.size() != p.arch.input_dim() || hi.size() != p.arch.input_dim())
        throw ShapeError("check_P: box dimension mismatch");
    ConditionReport report;
    report.seed = opt.seed;
    report.tol = opt.tol;
    const int K = p.depth();

    PushforwardOptions pfo;
    pfo.exact_dim_cap = opt.pushforward_dim_cap;
    pfo.max_units = opt.region_max_units;
    pfo.interior_slack = opt.tol.interior_slack;
    pfo.cloud_samples = opt.cloud_samples;
    pfo.rng_seed = opt.seed ^ 0x9f0ull;

    std::vector<Pushforward> pf(static_cast<std::size_t>(K + 1));
    for (int k = 1; k <= K; ++k) pf[static_cast<std::size_t>(k)] = pushforward_domain(p, lo, hi, k, pfo);

    Verdict overall = Verdict::Pass;
    for (int k = 1; k <= K - 1; ++k) {
        LayerConditionReport layer;
        layer.k = k;
        layer.a = check_P_a(p, k, opt.tol);

        layer.b = check_P_b(p, lo, hi, k, pf[static_cast<std::size_t>(k + 1)], opt);

        std::vector<Region> regions;
        bool have_regions = true;
        try {
            RegionEnumOptions ro;
            const int m = p.arch.width(k);
            const auto& pk = pf[static_cast<std::size_t>(k)];
            Vec blo = pk.bbox_lo, bhi = pk.bbox_hi;
            Vec pad = ((bhi - blo).cwiseMax(Vec::Constant(m, 1.0))) * 1.5 +
                      Vec::Constant(m, 10.0);
            ro.lo = blo - pad;
            ro.hi = bhi + pad;
            ro.interior_slack = opt.tol.interior_slack;
            ro.max_units = opt.region_max_units;
            ro.rng_seed = opt.seed ^ (0x1e60ull + static_cast<std::uint64_t>(k));
            regions = enumerate_regions(p, k, ro);
        } catch (const DomainError&) {
            have_regions = false;
        }
        if (have_regions) {
            layer.c = check_P_c(p, lo, hi, k, regions, pf[static_cast<std::size_t>(k)], opt);
            layer.d = check_P_d(p, lo, hi, k, regions, pf[static_cast<std::size_t>(k + 1)], opt);
        } else {
            layer.c.verdict = Verdict::Undetermined;
            layer.c.note = "region enumeration above cap";
            layer.d.verdict = Verdict::Undetermined;
            layer.d.note = "region enumeration above cap";
        }

        for (Verdict v : {layer.a.verdict, layer.b.verdict, layer.c.verdict, layer.d.verdict}) {
            if (v == Verdict::Fail) overall = Verdict::Fail;
            else if (v == Verdict::Undetermined && overall == Verdict::Pass)
                overall = Verdict::Undetermined;
        }
        report.layers.push_back(std::move(layer));
    }
    report.overall = overall;
    return report;
}

// ------------------------------ rendering -----------------------------------

inline nlohmann::json to_json(const ConditionReport& r) {
    nlohmann::json j;
    j["overall"] = verdict_name(r.overall);
    j["seed"] = r.seed;
    j["tolerances"] = {{"rank_tol", r.tol.rank_tol},
                       {"col_tol", r.tol.col_tol},
                       {"membership", r.tol.membership},
                       {"interior_slack", r.tol.interior_slack}};
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& L : r.layers) {
        nlohmann::json lj;
        lj["k"] = L.k;
        lj["P.a"] = {{"verdict", verdict_name(L.a.verdict)},
                     {"sigma_min", L.a.sigma_min},
                     {"sigma_max", L.a.sigma_max},
                     {"note", L.a.note}};
        nlohmann::json witnesses = nlohmann::json::array();
        for (const auto& w : L.b.witnesses) {
            nlohmann::json wv = nlohmann::json::array();
            for (Eigen::Index i = 0; i < w.size(); ++i) wv.push_back(w[i]);
            witnesses.push_back(std::move(wv));
        }
        lj["P.b"] = {{"verdict", verdict_name(L.b.verdict)},
                     {"sampled", L.b.sampled},
                     {"witnesses", std::move(witnesses)},
                     {"note", L.b.note}};
        nlohmann::json offs = nlohmann::json::array();
        for (const auto& o : L.c.offenders) {
            nlohmann::json ov;
            ov["pattern"] = std::vector<int>(o.pattern.begin(), o.pattern.end());
            ov["column"] = o.column;
            nlohmann::json pt = nlohmann::json::array();
            for (Eigen::Index i = 0; i < o.point.size(); ++i) pt.push_back(o.point[i]);
            ov["point"] = std::move(pt);
            ov["col_norm"] = o.col_norm;
            offs.push_back(std::move(ov));
        }
        lj["P.c"] = {{"verdict", verdict_name(L.c.verdict)},
                     {"sampled", L.c.sampled},
                     {"offenders", std::move(offs)},
                     {"note", L.c.note}};
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& cd : L.d.candidates) {
            nlohmann::json cv;
            nlohmann::json nv = nlohmann::json::array();
            for (Eigen::Index i = 0; i < cd.normal.size(); ++i) nv.push_back(cd.normal[i]);
            cv["normal"] = std::move(nv);
            cv["offset"] = cd.offset;
            cv["samples_total"] = cd.samples_total;
            cv["samples_on_boundary"] = cd.samples_on_boundary;
            cv["covered"] = cd.covered;
            cv["meets_interior"] = cd.meets_interior;
            cands.push_back(std::move(cv));
        }
        lj["P.d"] = {{"verdict", verdict_name(L.d.verdict)},
                     {"sampled", L.d.sampled},
                     {"candidates", std::move(cands)},
                     {"note", L.d.note}};
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    return j;
}

inline std::string render_text(const ConditionReport& r) {
    std::ostringstream os;
    for (const auto& L : r.layers) {
        os << "k=" << L.k << "  P.a " << verdict_name(L.a.verdict) << "  P.b "
           << verdict_name(L.b.verdict) << (L.b.sampled ? " (sampled)" : "") << "  P.c "
           << verdict_name(L.c.verdict) << (L.c.sampled ? " (sampled)" : "") << "  P.d "
           << verdict_name(L.d.verdict) << (L.d.sampled ? " (sampled)" : "") << "\n";
        if (!L.a.note.empty()) os << "      P.a: " << L.a.note << "\n";
        if (!L.b.note.empty()) os << "      P.b: " << L.b.note << "\n";
        if (L.b.verdict == Verdict::Pass) {
            for (std::size_t i = 0; i < L.b.witnesses.size(); ++i) {
                const Vec& w = L.b.witnesses[i];
                if (w.size() == 0) continue;
                os << "      P.b witness i=" << i << ": [";
                for (Eigen::Index j = 0; j < w.size(); ++j) os << (j ? ", " : "") << w[j];
                os << "]\n";
            }
        }
        if (!L.c.offenders.empty()) {
            os << "      P.c: " << L.c.offenders.size() << " offending (D, i) pair(s); first column "
               << L.c.offenders[0].column << " with |V_col| = " << L.c.offenders[0].col_norm << "\n";
        }
        if (L.d.failing_candidate >= 0) {
            const auto& cd = L.d.candidates[static_cast<std::size_t>(L.d.failing_candidate)];
            os << "      P.d: covered hyperplane with normal [";
            for (Eigen::Index i = 0; i < cd.normal.size(); ++i)
                os << (i ? ", " : "") << cd.normal[i];
            os << "], offset " << cd.offset << "\n";
        }
    }
    os << "overall: " << verdict_name(r.overall) << " (seed " << r.seed << ", tolerances: rank "
       << r.tol.rank_tol << ", col " << r.tol.col_tol << ", membership " << r.tol.membership
       << ", slack " << r.tol.interior_slack << ")\n";
    return os.str();
}

}  // namespace reluid
