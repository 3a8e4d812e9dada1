#pragma once

// Linear-region machinery: enumeration of the activation cells of the tail
// maps g_k with their affine pieces (V^k(D), c^k(D)), first-layer boundary
// hyperplanes, pushforward domains Omega_k, and the membership test for the
// union of region-preimage boundaries.

#include "reluid/lp.hpp"
#include "reluid/net.hpp"

#include <json.hpp>

#include <deque>
#include <map>
#include <optional>

namespace reluid {

// Unit normal + offset; the active side is {a^T x + c > 0}.
struct BoundaryHyperplane {
    Vec normal;
    double offset = 0.0;
};

inline double signed_distance(const BoundaryHyperplane& h, const Vec& x) {
    return h.normal.dot(x) + h.offset;
}

// --------------------------- generic cell engine ---------------------------
// A stack of sigma-layers y = relu(M x + b) applied in order. A cell is the
// polyhedron of inputs sharing one joint sign pattern, with the affine map
// the composition takes on it.

struct SigmaLayer {
    Mat M;
    Vec b;
};

struct AffineMap {
    Mat A;
    Vec b;
    Vec operator()(const Vec& x) const { return A * x + b; }
};

struct Cell {
    std::vector<std::vector<std::uint8_t>> pattern;  // one entry per sigma-layer
    std::vector<Halfspace> constraints;              // sign constraints, input space
    AffineMap map;                                   // image map on the cell
    Vec interior;                                    // certified interior point
    double slack = 0.0;
};

inline std::vector<std::uint8_t> flatten_pattern(const std::vector<std::vector<std::uint8_t>>& pat) {
    std::vector<std::uint8_t> flat;
    for (const auto& layer : pat) flat.insert(flat.end(), layer.begin(), layer.end());
    return flat;
}

inline std::vector<std::vector<std::uint8_t>> pattern_at(const std::vector<SigmaLayer>& layers,
                                                         const Vec& x) {
    std::vector<std::vector<std::uint8_t>> pat;
    pat.reserve(layers.size());
    Vec v = x;
    for (const auto& L : layers) {
        Vec pre = L.M * v + L.b;
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(pre.size()));
        for (Eigen::Index i = 0; i < pre.size(); ++i) bits[static_cast<std::size_t>(i)] = pre[i] >= 0.0 ? 1 : 0;
        pat.push_back(std::move(bits));
        v = relu(pre);
    }
    return pat;
}

// Build the constraints and affine map induced by a fixed pattern. Constant
// constraints (zero normal) are resolved immediately; `consistent` is false
// when a constant constraint contradicts its bit.
struct CellShape {
    std::vector<Halfspace> constraints;
    AffineMap map;
    bool consistent = true;
};

inline CellShape cell_shape(const std::vector<SigmaLayer>& layers,
                            const std::vector<std::vector<std::uint8_t>>& pattern, int input_dim) {
    CellShape out;
    Mat A = Mat::Identity(input_dim, input_dim);
    Vec b = Vec::Zero(input_dim);
    const double zero_row = 1e-12;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& L = layers[li];
        Mat P = L.M * A;
        Vec q = L.M * b + L.b;
        const auto& bits = pattern[li];
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            double sgn = bits[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
            Vec a = sgn * P.row(i).transpose();
            double c = sgn * q[i];
            if (a.norm() < zero_row) {
                // constant pre-activation: active needs c >= 0, inactive c < 0
                if (bits[static_cast<std::size_t>(i)]) {
                    if (c < -1e-12) out.consistent = false;
                } else {
                    if (c > -1e-12) out.consistent = false;
                }
                continue;
            }
            out.constraints.push_back(Halfspace{std::move(a), c});
        }
        Mat D = Mat::Zero(P.rows(), P.rows());
        for (Eigen::Index i = 0; i < P.rows(); ++i) D(i, i) = bits[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        A = D * P;
        b = D * q;
    }
    out.map = AffineMap{std::move(A), std::move(b)};
    return out;
}

struct CellEnumOptions {
    Vec lo, hi;                    // enumeration box
    bool box_slack = false;        // include box rows in the slack objective
    double interior_slack = 1e-9;  // certification threshold
    int max_units = 24;            // hard cap on total sigma units
    enum class Strategy { Frontier, Exhaustive } strategy = Strategy::Frontier;
    int seed_samples = 128;
    std::uint64_t rng_seed = 1234567;
};

inline std::optional<Cell> certify_pattern(const std::vector<SigmaLayer>& layers,
                                           const std::vector<std::vector<std::uint8_t>>& pattern,
                                           const CellEnumOptions& opt) {
    const int n = static_cast<int>(opt.lo.size());
    CellShape shape = cell_shape(layers, pattern, n);
    if (!shape.consistent) return std::nullopt;
    SlackResult sr;
    if (opt.box_slack) {
        std::vector<Halfspace> soft = shape.constraints;
        for (int i = 0; i < n; ++i) {
            Vec a = Vec::Zero(n);
            a[i] = 1.0;
            soft.push_back(Halfspace{a, -opt.lo[i]});
            a = Vec::Zero(n);
            a[i] = -1.0;
            soft.push_back(Halfspace{a, opt.hi[i]});
        }
        sr = max_slack_point(soft, {}, {}, opt.lo, opt.hi);
    } else {
        sr = max_slack_point(shape.constraints, {}, {}, opt.lo, opt.hi);
    }
    if (!sr.feasible || sr.slack < opt.interior_slack) return std::nullopt;
    Cell cell;
    cell.pattern = pattern;
    cell.constraints = std::move(shape.constraints);
    cell.map = std::move(shape.map);
    cell.interior = sr.x;
    cell.slack = sr.slack;
    return cell;
}

inline std::vector<Cell> enumerate_cells(const std::vector<SigmaLayer>& layers,
                                         const CellEnumOptions& opt) {
    int total_units = 0;
    for (const auto& L : layers) total_units += static_cast<int>(L.M.rows());
    if (total_units > opt.max_units)
        throw DomainError("enumerate_cells: " + std::to_string(total_units) +
                          " sigma units exceed the enumeration cap of " +
                          std::to_string(opt.max_units));
    const int n = static_cast<int>(opt.lo.size());
    std::vector<Cell> out;
    std::map<std::vector<std::uint8_t>, bool> seen;  // pattern -> accepted

    auto try_pattern = [&](const std::vector<std::vector<std::uint8_t>>& pat) -> bool {
        auto flat = flatten_pattern(pat);
        auto it = seen.find(flat);
        if (it != seen.end()) return it->second;
        auto cell = certify_pattern(layers, pat, opt);
        bool ok = cell.has_value();
        seen.emplace(std::move(flat), ok);
        if (ok) out.push_back(std::move(*cell));
        return ok;
    };

    if (opt.strategy == CellEnumOptions::Strategy::Exhaustive) {
        if (total_units > 30) throw DomainError("enumerate_cells: exhaustive cap exceeded");
        std::vector<std::vector<std::uint8_t>> pat;
        for (const auto& L : layers) pat.emplace_back(static_cast<std::size_t>(L.M.rows()), 0);
        const std::uint64_t count = 1ull << total_units;
        for (std::uint64_t code = 0; code < count; ++code) {
            std::uint64_t c = code;
            for (auto& layer : pat)
                for (auto& bit : layer) {
                    bit = static_cast<std::uint8_t>(c & 1ull);
                    c >>= 1;
                }
            try_pattern(pat);
        }
        return out;
    }

    // Frontier search: seed with sampled patterns, then flip one unit at a
    // time; adjacent nonempty-interior cells differ in exactly one bit.
    Rng rng(opt.rng_seed);
    std::deque<std::size_t> frontier;
    auto seed_point = [&](const Vec& x) {
        std::size_t before = out.size();
        if (try_pattern(pattern_at(layers, x)) && out.size() > before)
            frontier.push_back(out.size() - 1);
    };
    seed_point(0.5 * (opt.lo + opt.hi));
    if (n <= 20) {
        HaltonSampler halton(n, opt.rng_seed ^ 0x9e3779b97f4a7c15ull);
        for (int s = 0; s < opt.seed_samples; ++s) seed_point(halton.next_in_box(opt.lo, opt.hi));
    }
    for (int s = 0; s < opt.seed_samples / 2; ++s) seed_point(uniform_in_box(opt.lo, opt.hi, rng));

    while (!frontier.empty()) {
        std::size_t idx = frontier.front();
        frontier.pop_front();
        auto pat = out[idx].pattern;  // copy: out may reallocate
        for (std::size_t li = 0; li < pat.size(); ++li) {
            for (std::size_t i = 0; i < pat[li].size(); ++i) {
                pat[li][i] ^= 1;
                std::size_t before = out.size();
                if (try_pattern(pat) && out.size() > before) frontier.push_back(out.size() - 1);
                pat[li][i] ^= 1;
            }
        }
    }
    return out;
}

// ------------------------------- regions -----------------------------------

// One linear region of g_k: the joint activation pattern of the hidden layers
// k-1..1 inside g_k (input-side layer first), the polyhedron it cuts out of
// R^{n_k}, and the affine piece g_k(y) = V y + c on it.
struct Region {
    int k = 0;
    std::vector<std::vector<std::uint8_t>> pattern;
    std::vector<Halfspace> halfspaces;
    Mat V;
    Vec c;
    Vec interior;      // certified interior point (empty for uncertified lookups)
    double slack = 0.0;
};

inline std::vector<SigmaLayer> tail_sigma_layers(const NetworkParams& p, int k) {
    std::vector<SigmaLayer> layers;
    for (int j = k - 1; j >= 1; --j) layers.push_back(SigmaLayer{p.weight(j), p.bias(j)});
    return layers;
}

struct RegionEnumOptions {
    // Enumeration box; empty means "derive from `scale`": [-scale, scale]^m.
    Vec lo, hi;
    double scale = 64.0;
    double interior_slack = 1e-9;
    int max_units = 24;
    bool exhaustive = false;
    int seed_samples = 128;
    std::uint64_t rng_seed = 777;
};

inline std::vector<Region> enumerate_regions(const NetworkParams& p, int k,
                                             const RegionEnumOptions& opt = {}) {
    const int K = p.depth();
    if (k < 1 || k > K - 1) throw DomainError("enumerate_regions: k out of range");
    const int m = p.arch.width(k);
    auto layers = tail_sigma_layers(p, k);

    CellEnumOptions copt;
    if (opt.lo.size() == m && opt.hi.size() == m) {
        copt.lo = opt.lo;
        copt.hi = opt.hi;
    } else {
        copt.lo = Vec::Constant(m, -opt.scale);
        copt.hi = Vec::Constant(m, opt.scale);
    }
    copt.box_slack = false;
    copt.interior_slack = opt.interior_slack;
    copt.max_units = opt.max_units;
    copt.strategy = opt.exhaustive ? CellEnumOptions::Strategy::Exhaustive
                                   : CellEnumOptions::Strategy::Frontier;
    copt.seed_samples = opt.seed_samples;
    copt.rng_seed = opt.rng_seed;

    auto cells = enumerate_cells(layers, copt);
    std::vector<Region> regions;
    regions.reserve(cells.size());
    for (auto& cell : cells) {
        Region r;
        r.k = k;
        r.pattern = std::move(cell.pattern);
        r.halfspaces = std::move(cell.constraints);
        r.V = p.weight(0) * cell.map.A;
        r.c = p.weight(0) * cell.map.b + p.bias(0);
        r.interior = std::move(cell.interior);
        r.slack = cell.slack;
        regions.push_back(std::move(r));
    }
    return regions;
}

// Region containing y, resolved by the activation pattern (ties active).
// No interior certification is performed here.
inline Region region_of(const NetworkParams& p, int k, const Vec& y) {
    const int K = p.depth();
    if (k < 1 || k > K - 1) throw DomainError("region_of: k out of range");
    if (y.size() != p.arch.width(k)) throw ShapeError("region_of: bad dimension");
    auto layers = tail_sigma_layers(p, k);
    auto pat = pattern_at(layers, y);
    auto shape = cell_shape(layers, pat, static_cast<int>(y.size()));
    Region r;
    r.k = k;
    r.pattern = std::move(pat);
    r.halfspaces = std::move(shape.constraints);
    r.V = p.weight(0) * shape.map.A;
    r.c = p.weight(0) * shape.map.b + p.bias(0);
    return r;
}

// Hyperplanes H_i^K induced by the first hidden layer, unit normals, active
// side = {M_{i,.} x + b_i > 0}.
inline std::vector<BoundaryHyperplane> first_layer_hyperplanes(const NetworkParams& p) {
    const Mat& M = p.weight(p.depth() - 1);
    const Vec& b = p.bias(p.depth() - 1);
    std::vector<BoundaryHyperplane> out;
    out.reserve(static_cast<std::size_t>(M.rows()));
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        double n = M.row(i).norm();
        if (n < 1e-300)
            throw NormalizationImpossible("first_layer_hyperplanes: zero row " + std::to_string(i));
        out.push_back(BoundaryHyperplane{M.row(i).transpose() / n, b[i] / n});
    }
    return out;
}

// ------------------------------ pushforward --------------------------------

// One cell of the pushforward Omega_k = f_k(Omega): a polyhedron of inputs
// (activation constraints; the box is carried separately) together with the
// affine map whose image it contributes. Degenerate images (rank-deficient A)
// are kept; `image_full_dim` marks the ones with open image.
struct PushforwardCell {
    std::vector<std::vector<std::uint8_t>> pattern;
    std::vector<Halfspace> constraints;  // input space, excluding the box
    AffineMap map;
    Vec source_interior;
    double slack = 0.0;
    bool image_full_dim = false;
};

struct Pushforward {
    int k = 0;
    bool exact = false;
    std::vector<PushforwardCell> cells;
    Mat cloud;  // rows: sampled points of Omega_k (always populated)
    Vec bbox_lo, bbox_hi;
    Vec omega_lo, omega_hi;  // the source box
    std::string note;
};

struct PushforwardOptions {
    int exact_dim_cap = 6;
    int max_units = 24;
    double interior_slack = 1e-9;
    int cloud_samples = 512;
    std::uint64_t rng_seed = 424242;
};

inline std::vector<SigmaLayer> head_sigma_layers(const NetworkParams& p, int k) {
    std::vector<SigmaLayer> layers;
    for (int j = p.depth() - 1; j >= std::max(k, 1); --j)
        layers.push_back(SigmaLayer{p.weight(j), p.bias(j)});
    return layers;
}

inline Pushforward pushforward_domain(const NetworkParams& p, const Vec& lo, const Vec& hi, int k,
                                      const PushforwardOptions& opt = {}) {
    const int K = p.depth();
    if (k < 0 || k > K) throw DomainError("pushforward_domain: k out of range");
    if (lo.size() != p.arch.input_dim() || hi.size() != p.arch.input_dim())
        throw ShapeError("pushforward_domain: box dimension mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i])) throw DomainError("pushforward_domain: box must have lo < hi");

    Pushforward out;
    out.k = k;
    out.omega_lo = lo;
    out.omega_hi = hi;

    // sample cloud (always)
    const int nk = p.arch.width(k);
    HaltonSampler halton(static_cast<int>(lo.size()), opt.rng_seed);
    out.cloud.resize(opt.cloud_samples, nk);
    for (int s = 0; s < opt.cloud_samples; ++s) {
        Vec x = halton.next_in_box(lo, hi);
        out.cloud.row(s) = eval_f_k(p, k, x).transpose();
    }
    out.bbox_lo = out.cloud.colwise().minCoeff().transpose();
    out.bbox_hi = out.cloud.colwise().maxCoeff().transpose();

    if (k == K) {
        PushforwardCell cell;
        cell.map = AffineMap{Mat::Identity(nk, nk), Vec::Zero(nk)};
        cell.source_interior = 0.5 * (lo + hi);
        cell.slack = 0.5 * (hi - lo).minCoeff();
        cell.image_full_dim = true;
        out.cells.push_back(std::move(cell));
        out.exact = true;
        return out;
    }

    auto layers = head_sigma_layers(p, k);
    int total_units = 0;
    for (const auto& L : layers) total_units += static_cast<int>(L.M.rows());
    if (static_cast<int>(lo.size()) > opt.exact_dim_cap || total_units > opt.max_units) {
        out.exact = false;
        out.note = "exact mode cap exceeded; sample cloud fallback";
        return out;
    }

    CellEnumOptions copt;
    copt.lo = lo;
    copt.hi = hi;
    copt.box_slack = true;  // interior relative to Omega
    copt.interior_slack = opt.interior_slack;
    copt.max_units = opt.max_units;
    copt.strategy = CellEnumOptions::Strategy::Frontier;
    copt.rng_seed = opt.rng_seed;
    auto cells = enumerate_cells(layers, copt);
    for (auto& cell : cells) {
        PushforwardCell pc;
        pc.pattern = std::move(cell.pattern);
        pc.constraints = std::move(cell.constraints);
        pc.source_interior = std::move(cell.interior);
        pc.slack = cell.slack;
        if (k == 0) {
            pc.map = AffineMap{p.weight(0) * cell.map.A, p.weight(0) * cell.map.b + p.bias(0)};
        } else {
            pc.map = std::move(cell.map);
        }
        Eigen::JacobiSVD<Mat> svd(pc.map.A);
        double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
        int rank = 0;
        for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()[i] > 1e-12 * std::max(1.0, smax)) ++rank;
        pc.image_full_dim = (rank == nk);
        out.cells.push_back(std::move(pc));
    }
    out.exact = true;
    return out;
}

// Membership of y in Omega_k, via the exact cells (LP per cell) or the cloud.
inline bool pushforward_contains(const Pushforward& pf, const Vec& y, double tol = 1e-8) {
    if (pf.exact) {
        for (const auto& cell : pf.cells) {
            std::vector<Halfspace> ineqs = cell.constraints;
            // A x + b = y, widened by tol to absorb round-off
            for (Eigen::Index i = 0; i < y.size(); ++i) {
                Vec a = cell.map.A.row(i).transpose();
                double c = cell.map.b[i] - y[i];
                double s = tol * std::max(1.0, a.norm());
                ineqs.push_back(Halfspace{a, c + s});
                ineqs.push_back(Halfspace{-a, -c + s});
            }
            if (feasible_point(ineqs, {}, pf.omega_lo, pf.omega_hi)) return true;
        }
        return false;
    }
    for (Eigen::Index r = 0; r < pf.cloud.rows(); ++r)
        if ((pf.cloud.row(r).transpose() - y).norm() <= tol) return true;
    return false;
}

// ------------------- boundary-union membership (for P.d) -------------------

// Normalized distance from z in R^{n_{k+1}} to U_{D in Pi_k} boundary of
// h_k^{-1}(D) for the canonical activation-pattern regions: the region
// assignment changes exactly where a pre-activation of some layer j <= k-1
// composed with h_k crosses zero, so the distance is min_j |pre_j| / |grad
// pre_j| along the pattern active at z. Returns +inf when g_k is affine.
inline double boundary_union_distance(const NetworkParams& p, int k, const Vec& z) {
    const int K = p.depth();
    if (k < 1 || k > K - 1) throw DomainError("boundary_union_distance: k out of range");
    if (z.size() != p.arch.width(k + 1)) throw ShapeError("boundary_union_distance: bad dimension");
    double best = std::numeric_limits<double>::infinity();
    Vec v = z;
    Mat J = Mat::Identity(z.size(), z.size());
    for (int j = k; j >= 1; --j) {
        Vec pre = p.weight(j) * v + p.bias(j);
        Mat G = p.weight(j) * J;
        if (j <= k - 1) {
            for (Eigen::Index i = 0; i < pre.size(); ++i) {
                double gn = G.row(i).norm();
                if (gn > 1e-12) best = std::min(best, std::abs(pre[i]) / gn);
            }
        }
        Mat D = Mat::Zero(pre.size(), pre.size());
        for (Eigen::Index i = 0; i < pre.size(); ++i)
            if (pre[i] >= 0.0) D(i, i) = 1.0;
        v = relu(pre);
        J = D * G;
    }
    return best;
}

// ------------------------------ serialization ------------------------------

inline nlohmann::json to_json(const Region& r) {
    nlohmann::json j;
    std::vector<int> flat;
    for (const auto& layer : r.pattern)
        for (auto b : layer) flat.push_back(static_cast<int>(b));
    j["pattern"] = flat;
    nlohmann::json V = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.V.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < r.V.cols(); ++c) row.push_back(r.V(i, c));
        V.push_back(std::move(row));
    }
    j["V"] = std::move(V);
    nlohmann::json cvec = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.c.size(); ++i) cvec.push_back(r.c[i]);
    j["c"] = std::move(cvec);
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& h : r.halfspaces) {
        nlohmann::json one;
        nlohmann::json a = nlohmann::json::array();
        for (Eigen::Index i = 0; i < h.a.size(); ++i) a.push_back(h.a[i]);
        one["a"] = std::move(a);
        one["c"] = h.c;
        one["sense"] = "≥";
        hs.push_back(std::move(one));
    }
    j["halfspaces"] = std::move(hs);
    return j;
}

inline nlohmann::json regions_to_json(const std::vector<Region>& regions) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : regions) arr.push_back(to_json(r));
    return arr;
}

}  // namespace reluid
