#pragma once

// Fully-connected feedforward ReLU networks with reverse layer indexing:
// the input layer is layer K, the output layer is layer 0. Weights are kept
// in input-side order, weights[0] = M^{K-1}, ..., weights[K-1] = M^0, where
// M^k maps layer k+1 to layer k and has shape n_k x n_{k+1}.

#include "reluid/common.hpp"

#include <json.hpp>

#include <sstream>

namespace reluid {

struct Architecture {
    int depth = 0;                // K
    std::vector<int> widths;      // [n_K, n_{K-1}, ..., n_0]

    // width of layer k in the reverse indexing (k = K is the input layer)
    int width(int k) const { return widths.at(static_cast<std::size_t>(depth - k)); }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }

    void validate() const {
        if (depth < 2) throw ShapeError("Architecture: depth K must be >= 2");
        if (static_cast<int>(widths.size()) != depth + 1)
            throw ShapeError("Architecture: widths must have K+1 entries");
        for (int w : widths)
            if (w < 1) throw ShapeError("Architecture: widths must be >= 1");
    }

    bool operator==(const Architecture& o) const { return depth == o.depth && widths == o.widths; }
};

struct NetworkParams {
    Architecture arch;
    std::vector<Mat> weights;  // M^{K-1} first
    std::vector<Vec> biases;

    int depth() const { return arch.depth; }

    // reverse-indexed accessors
    const Mat& weight(int k) const { return weights.at(static_cast<std::size_t>(arch.depth - 1 - k)); }
    const Vec& bias(int k) const { return biases.at(static_cast<std::size_t>(arch.depth - 1 - k)); }
    Mat& weight(int k) { return weights.at(static_cast<std::size_t>(arch.depth - 1 - k)); }
    Vec& bias(int k) { return biases.at(static_cast<std::size_t>(arch.depth - 1 - k)); }

    void validate() const {
        arch.validate();
        const int K = arch.depth;
        if (static_cast<int>(weights.size()) != K || static_cast<int>(biases.size()) != K)
            throw ShapeError("NetworkParams: expected K weight matrices and biases");
        for (int k = K - 1; k >= 0; --k) {
            const Mat& M = weight(k);
            const Vec& b = bias(k);
            if (M.rows() != arch.width(k) || M.cols() != arch.width(k + 1)) {
                std::ostringstream os;
                os << "NetworkParams: M^" << k << " must be " << arch.width(k) << "x"
                   << arch.width(k + 1) << ", got " << M.rows() << "x" << M.cols();
                throw ShapeError(os.str());
            }
            if (b.size() != arch.width(k)) {
                std::ostringstream os;
                os << "NetworkParams: b^" << k << " must have length " << arch.width(k);
                throw ShapeError(os.str());
            }
            if (!all_finite(M) || !all_finite(b))
                throw ShapeError("NetworkParams: non-finite entry");
        }
    }
};

inline Vec relu(const Vec& v) { return v.cwiseMax(0.0); }

// f_k = h_k o ... o h_{K-1}: map from the input layer down to layer k.
inline Vec eval_f_k(const NetworkParams& p, int k, const Vec& x) {
    const int K = p.depth();
    if (k < 0 || k > K) throw DomainError("eval_f_k: layer index out of range");
    if (x.size() != p.arch.input_dim()) throw ShapeError("eval_f_k: bad input dimension");
    Vec v = x;
    for (int j = K - 1; j >= k; --j) {
        Vec pre = p.weight(j) * v + p.bias(j);
        v = (j == 0) ? pre : relu(pre);
    }
    return v;
}

// g_k = h_0 o ... o h_{k-1}: map from layer k down to the output.
inline Vec eval_g_k(const NetworkParams& p, int k, const Vec& y) {
    const int K = p.depth();
    if (k < 0 || k > K) throw DomainError("eval_g_k: layer index out of range");
    if (y.size() != p.arch.width(k)) throw ShapeError("eval_g_k: bad input dimension");
    Vec v = y;
    for (int j = k - 1; j >= 0; --j) {
        Vec pre = p.weight(j) * v + p.bias(j);
        v = (j == 0) ? pre : relu(pre);
    }
    return v;
}

inline Vec forward(const NetworkParams& p, const Vec& x) { return eval_f_k(p, 0, x); }

// Per-hidden-layer activation bits, input-side layer first (layer K-1, ..., 1).
// A bit is 1 iff the pre-activation is >= 0 (ties count as active).
struct ActivationPattern {
    std::vector<std::vector<std::uint8_t>> bits;

    bool operator==(const ActivationPattern& o) const { return bits == o.bits; }
};

inline ActivationPattern activation_pattern(const NetworkParams& p, const Vec& x) {
    const int K = p.depth();
    if (x.size() != p.arch.input_dim()) throw ShapeError("activation_pattern: bad input dimension");
    ActivationPattern out;
    out.bits.reserve(static_cast<std::size_t>(K - 1));
    Vec v = x;
    for (int j = K - 1; j >= 1; --j) {
        Vec pre = p.weight(j) * v + p.bias(j);
        std::vector<std::uint8_t> layer(static_cast<std::size_t>(pre.size()));
        for (Eigen::Index i = 0; i < pre.size(); ++i) layer[static_cast<std::size_t>(i)] = pre[i] >= 0.0 ? 1 : 0;
        out.bits.push_back(std::move(layer));
        v = relu(pre);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization. Format:
// { "depth": K, "widths": [n_K, ..., n_0],
//   "layers": [ {"k": K-1, "weights": [[...]], "bias": [...]}, ..., {"k": 0, ...} ] }
// nlohmann::json prints doubles with shortest round-trip representation.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const NetworkParams& p) {
    p.validate();
    nlohmann::json j;
    j["depth"] = p.arch.depth;
    j["widths"] = p.arch.widths;
    nlohmann::json layers = nlohmann::json::array();
    for (int k = p.depth() - 1; k >= 0; --k) {
        nlohmann::json layer;
        layer["k"] = k;
        const Mat& M = p.weight(k);
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(i, c));
            rows.push_back(std::move(row));
        }
        layer["weights"] = std::move(rows);
        nlohmann::json bias = nlohmann::json::array();
        for (Eigen::Index i = 0; i < p.bias(k).size(); ++i) bias.push_back(p.bias(k)[i]);
        layer["bias"] = std::move(bias);
        layers.push_back(std::move(layer));
    }
    j["layers"] = std::move(layers);
    return j;
}

inline std::string serialize(const NetworkParams& p) { return to_json(p).dump(2); }

inline NetworkParams from_json(const nlohmann::json& j) {
    NetworkParams p;
    try {
        p.arch.depth = j.at("depth").get<int>();
        p.arch.widths = j.at("widths").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("network document: ") + e.what());
    }
    p.arch.validate();
    const int K = p.arch.depth;
    p.weights.resize(static_cast<std::size_t>(K));
    p.biases.resize(static_cast<std::size_t>(K));
    std::vector<char> seen(static_cast<std::size_t>(K), 0);
    const auto& layers = j.at("layers");
    if (!layers.is_array() || static_cast<int>(layers.size()) != K)
        throw ParseError("network document: expected exactly K layer entries");
    for (const auto& layer : layers) {
        int k;
        std::vector<std::vector<double>> W;
        std::vector<double> b;
        try {
            k = layer.at("k").get<int>();
            W = layer.at("weights").get<std::vector<std::vector<double>>>();
            b = layer.at("bias").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("network layer: ") + e.what());
        }
        if (k < 0 || k >= K) throw ParseError("network layer: index k out of range");
        if (seen[static_cast<std::size_t>(k)]) throw ParseError("network layer: duplicate index k");
        seen[static_cast<std::size_t>(k)] = 1;
        const int rows = p.arch.width(k), cols = p.arch.width(k + 1);
        if (static_cast<int>(W.size()) != rows)
            throw ShapeError("network layer: weight row count mismatch");
        Mat M(rows, cols);
        for (int i = 0; i < rows; ++i) {
            if (static_cast<int>(W[static_cast<std::size_t>(i)].size()) != cols)
                throw ShapeError("network layer: weight column count mismatch");
            for (int c = 0; c < cols; ++c) M(i, c) = W[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
        }
        if (static_cast<int>(b.size()) != rows) throw ShapeError("network layer: bias length mismatch");
        Vec bv(rows);
        for (int i = 0; i < rows; ++i) bv[i] = b[static_cast<std::size_t>(i)];
        p.weight(k) = std::move(M);
        p.bias(k) = std::move(bv);
    }
    p.validate();
    return p;
}

inline NetworkParams deserialize(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("network document: ") + e.what());
    }
    return from_json(j);
}

// Convenience constructor used all over the tests.
inline NetworkParams make_network(const std::vector<int>& widths, const std::vector<Mat>& weights,
                                  const std::vector<Vec>& biases) {
    NetworkParams p;
    p.arch.depth = static_cast<int>(widths.size()) - 1;
    p.arch.widths = widths;
    p.weights = weights;
    p.biases = biases;
    p.validate();
    return p;
}

}  // namespace reluid
