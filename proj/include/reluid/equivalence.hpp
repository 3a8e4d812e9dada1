#pragma once

// The permutation + positive-rescaling group action on network parameters:
// applying witnesses, the group operations, the unit-row canonical form, and
// the equivalence decision procedure.

#include "reluid/net.hpp"

#include <json.hpp>

#include <optional>

namespace reluid {

// Witness of equivalence. perms[k] / scales[k] are indexed by reverse layer
// k = 0..K (output to input). perms are 0-based images: perms[k][j] = phi_k(j).
// Boundary conditions: perms[0], perms[K] identities; scales[0], scales[K] ones.
struct EquivalenceWitness {
    std::vector<std::vector<int>> perms;
    std::vector<Vec> scales;

    void validate(const Architecture& arch) const {
        const int K = arch.depth;
        if (static_cast<int>(perms.size()) != K + 1 || static_cast<int>(scales.size()) != K + 1)
            throw ShapeError("EquivalenceWitness: expected K+1 perms and scales");
        for (int k = 0; k <= K; ++k) {
            const int n = arch.width(k);
            if (static_cast<int>(perms[static_cast<std::size_t>(k)].size()) != n ||
                scales[static_cast<std::size_t>(k)].size() != n)
                throw ShapeError("EquivalenceWitness: size mismatch at layer " + std::to_string(k));
            if (!is_permutation(perms[static_cast<std::size_t>(k)]))
                throw ShapeError("EquivalenceWitness: invalid permutation at layer " + std::to_string(k));
            for (Eigen::Index i = 0; i < scales[static_cast<std::size_t>(k)].size(); ++i)
                if (!(scales[static_cast<std::size_t>(k)][i] > 0.0))
                    throw ShapeError("EquivalenceWitness: non-positive scale at layer " + std::to_string(k));
        }
        auto is_id = [](const std::vector<int>& p) {
            for (std::size_t j = 0; j < p.size(); ++j)
                if (p[j] != static_cast<int>(j)) return false;
            return true;
        };
        if (!is_id(perms.front()) || !is_id(perms.back()))
            throw ShapeError("EquivalenceWitness: boundary permutations must be identities");
        if ((scales.front().array() != 1.0).any() || (scales.back().array() != 1.0).any())
            throw ShapeError("EquivalenceWitness: boundary scales must be all-ones");
    }
};

inline EquivalenceWitness identity_witness(const Architecture& arch) {
    EquivalenceWitness w;
    const int K = arch.depth;
    w.perms.resize(static_cast<std::size_t>(K + 1));
    w.scales.resize(static_cast<std::size_t>(K + 1));
    for (int k = 0; k <= K; ++k) {
        w.perms[static_cast<std::size_t>(k)] = identity_perm(arch.width(k));
        w.scales[static_cast<std::size_t>(k)] = Vec::Ones(arch.width(k));
    }
    return w;
}

// M~^k = P_{phi_k} Diag(l^k) M^k Diag(l^{k+1})^{-1} P_{phi_{k+1}}^{-1},
// b~^k = P_{phi_k} Diag(l^k) b^k. Implemented entrywise:
// M~_{i,j} = l^k_{phi_k^{-1}(i)} / l^{k+1}_{phi_{k+1}^{-1}(j)} * M_{phi_k^{-1}(i), phi_{k+1}^{-1}(j)}.
inline NetworkParams apply_transform(const NetworkParams& p, const EquivalenceWitness& w) {
    w.validate(p.arch);
    NetworkParams out = p;
    const int K = p.depth();
    for (int k = 0; k < K; ++k) {
        const auto inv_k = invert_perm(w.perms[static_cast<std::size_t>(k)]);
        const auto inv_k1 = invert_perm(w.perms[static_cast<std::size_t>(k + 1)]);
        const Vec& lk = w.scales[static_cast<std::size_t>(k)];
        const Vec& lk1 = w.scales[static_cast<std::size_t>(k + 1)];
        const Mat& M = p.weight(k);
        const Vec& b = p.bias(k);
        Mat Mt(M.rows(), M.cols());
        Vec bt(b.size());
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
            const int pi = inv_k[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < M.cols(); ++j) {
                const int pj = inv_k1[static_cast<std::size_t>(j)];
                Mt(i, j) = lk[pi] / lk1[pj] * M(pi, pj);
            }
            bt[i] = lk[pi] * b[pi];
        }
        out.weight(k) = std::move(Mt);
        out.bias(k) = std::move(bt);
    }
    return out;
}

// Composition: apply_transform(p, compose(w1, w2)) == apply_transform(apply_transform(p, w1), w2).
// phi'_k = phi2_k o phi1_k, l'_k[i] = l2_k[phi1_k(i)] * l1_k[i].
inline EquivalenceWitness compose_witness(const EquivalenceWitness& w1,
                                          const EquivalenceWitness& w2) {
    if (w1.perms.size() != w2.perms.size()) throw ShapeError("compose_witness: size mismatch");
    EquivalenceWitness out;
    out.perms.resize(w1.perms.size());
    out.scales.resize(w1.scales.size());
    for (std::size_t k = 0; k < w1.perms.size(); ++k) {
        if (w1.perms[k].size() != w2.perms[k].size())
            throw ShapeError("compose_witness: layer size mismatch");
        out.perms[k] = compose_perm(w2.perms[k], w1.perms[k]);
        Vec s(w1.scales[k].size());
        for (Eigen::Index i = 0; i < s.size(); ++i)
            s[i] = w2.scales[k][w1.perms[k][static_cast<std::size_t>(i)]] * w1.scales[k][i];
        out.scales[k] = std::move(s);
    }
    return out;
}

// phi~_k = phi_k^{-1}, l~_k[i] = 1 / l_k[phi_k^{-1}(i)].
inline EquivalenceWitness invert_witness(const EquivalenceWitness& w) {
    EquivalenceWitness out;
    out.perms.resize(w.perms.size());
    out.scales.resize(w.scales.size());
    for (std::size_t k = 0; k < w.perms.size(); ++k) {
        auto inv = invert_perm(w.perms[k]);
        Vec s(w.scales[k].size());
        for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = 1.0 / w.scales[k][inv[static_cast<std::size_t>(i)]];
        out.perms[k] = std::move(inv);
        out.scales[k] = std::move(s);
    }
    return out;
}

struct NormalizeResult {
    NetworkParams params;
    EquivalenceWitness witness;  // apply_transform(original, witness) == params
};

// Unit-norm canonical form: rescale so every hidden row of every M^k has norm 1.
// Scale recursion from the input side: l^K = 1, l^k_i = 1 / ||M^k_{i,.} Diag(l^{k+1})^{-1}||.
inline NormalizeResult normalize(const NetworkParams& p) {
    p.validate();
    const int K = p.depth();
    EquivalenceWitness w = identity_witness(p.arch);
    for (int k = K - 1; k >= 1; --k) {
        const Mat& M = p.weight(k);
        const Vec& lk1 = w.scales[static_cast<std::size_t>(k + 1)];
        Vec lk(M.rows());
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
            double norm2 = 0.0;
            for (Eigen::Index j = 0; j < M.cols(); ++j) {
                double v = M(i, j) / lk1[j];
                norm2 += v * v;
            }
            double norm = std::sqrt(norm2);
            if (norm < 1e-300)
                throw NormalizationImpossible("normalize: zero row M^" + std::to_string(k) +
                                              " row " + std::to_string(i));
            lk[i] = 1.0 / norm;
        }
        w.scales[static_cast<std::size_t>(k)] = std::move(lk);
    }
    NormalizeResult out{apply_transform(p, w), std::move(w)};
    return out;
}

inline bool is_normalized(const NetworkParams& p, double tol = 1e-12) {
    for (int k = p.depth() - 1; k >= 1; --k) {
        const Mat& M = p.weight(k);
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            if (std::abs(M.row(i).norm() - 1.0) > tol) return false;
    }
    return true;
}

// Decide (M,b) ~ (M~,b~). Normalizes both, then matches rows layer by layer
// from the input side with an optimal assignment on
// ||row_i - row_j|| + |b_i - b_j|; all matched costs must stay below tol.
// Returns the witness w with apply_transform(p1, w) ~= p2, or nullopt.
inline std::optional<EquivalenceWitness> check_equivalent(const NetworkParams& p1,
                                                          const NetworkParams& p2,
                                                          double tol = 1e-6) {
    if (!(p1.arch == p2.arch)) throw ShapeError("check_equivalent: architecture mismatch");
    NormalizeResult n1, n2;
    try {
        n1 = normalize(p1);
        n2 = normalize(p2);
    } catch (const NormalizationImpossible&) {
        return std::nullopt;
    }
    const int K = p1.depth();
    EquivalenceWitness perm_w = identity_witness(p1.arch);

    // phi_{K} = id. Walk from the input side fixing phi_k at each layer.
    for (int k = K - 1; k >= 1; --k) {
        const Mat& A = n1.params.weight(k);
        const Vec& ab = n1.params.bias(k);
        const Mat& B = n2.params.weight(k);
        const Vec& bb = n2.params.bias(k);
        const auto& phi_in = perm_w.perms[static_cast<std::size_t>(k + 1)];  // fixed on the input side
        const int m = static_cast<int>(A.rows());
        // adjusted A: columns permuted by phi_{k+1}^{-1} on the right means
        // column j of A P^{-1} is column phi_{k+1}^{-1}(j) of A.
        const auto inv_in = invert_perm(phi_in);
        Mat Aadj(A.rows(), A.cols());
        for (Eigen::Index j = 0; j < A.cols(); ++j) Aadj.col(j) = A.col(inv_in[static_cast<std::size_t>(j)]);
        Mat cost(m, m);
        for (int i = 0; i < m; ++i)
            for (int r = 0; r < m; ++r)
                cost(i, r) = (B.row(i) - Aadj.row(r)).norm() + std::abs(bb[i] - ab[r]);
        auto assign = min_cost_assignment(cost);  // row i of B -> row assign[i] of Aadj
        std::vector<int> phi(static_cast<std::size_t>(m));
        bool ok = true;
        for (int i = 0; i < m; ++i) {
            if (cost(i, assign[static_cast<std::size_t>(i)]) > tol) ok = false;
            phi[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] = i;  // phi_k(r) = i
        }
        if (!ok) return std::nullopt;
        perm_w.perms[static_cast<std::size_t>(k)] = std::move(phi);
    }
    // Output layer: identity permutation forced.
    {
        const auto inv_in = invert_perm(perm_w.perms[1]);
        const Mat& A = n1.params.weight(0);
        const Mat& B = n2.params.weight(0);
        Mat Aadj(A.rows(), A.cols());
        for (Eigen::Index j = 0; j < A.cols(); ++j) Aadj.col(j) = A.col(inv_in[static_cast<std::size_t>(j)]);
        double gap = (B - Aadj).cwiseAbs().maxCoeff();
        gap = std::max(gap, (n2.params.bias(0) - n1.params.bias(0)).cwiseAbs().maxCoeff());
        if (gap > tol) return std::nullopt;
    }

    EquivalenceWitness w =
        compose_witness(compose_witness(n1.witness, perm_w), invert_witness(n2.witness));
    // Defensive re-verification of the returned witness.
    NetworkParams check = apply_transform(p1, w);
    double gap = 0.0;
    for (int k = 0; k < K; ++k) {
        gap = std::max(gap, (check.weight(k) - p2.weight(k)).cwiseAbs().maxCoeff());
        gap = std::max(gap, (check.bias(k) - p2.bias(k)).cwiseAbs().maxCoeff());
    }
    // matched rows are unit-norm, so per-entry drift stays of the order of the
    // row-matching threshold times the local scales
    double scale = 1.0;
    for (int k = 0; k < K; ++k) scale = std::max(scale, p2.weight(k).cwiseAbs().maxCoeff());
    if (gap > 10.0 * tol * scale) return std::nullopt;
    return w;
}

// --------------------------- witness serialization -------------------------
// { "perms": [[...], ...], "scales": [[...], ...] }, layer k = 0 first.

inline nlohmann::json to_json(const EquivalenceWitness& w) {
    nlohmann::json j;
    j["perms"] = w.perms;
    nlohmann::json scales = nlohmann::json::array();
    for (const auto& s : w.scales) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index i = 0; i < s.size(); ++i) row.push_back(s[i]);
        scales.push_back(std::move(row));
    }
    j["scales"] = std::move(scales);
    return j;
}

inline EquivalenceWitness witness_from_json(const nlohmann::json& j) {
    EquivalenceWitness w;
    try {
        w.perms = j.at("perms").get<std::vector<std::vector<int>>>();
        auto scales = j.at("scales").get<std::vector<std::vector<double>>>();
        for (const auto& s : scales) {
            Vec v(static_cast<Eigen::Index>(s.size()));
            for (std::size_t i = 0; i < s.size(); ++i) v[static_cast<Eigen::Index>(i)] = s[i];
            w.scales.push_back(std::move(v));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("witness document: ") + e.what());
    }
    return w;
}

}  // namespace reluid
