#pragma once

// Black-box function access: oracle wrappers with query accounting and
// domain enforcement, seeded teacher generation, the catalog of reference
// examples, sampled functional distance, and the Monte-Carlo risk estimator.

#include "reluid/equivalence.hpp"
#include "reluid/lp.hpp"
#include "reluid/net.hpp"

#include <functional>
#include <map>
#include <memory>

namespace reluid {

class QueryOracle {
public:
    QueryOracle(Polytope domain, int in_dim, int out_dim)
        : domain_(std::move(domain)), in_dim_(in_dim), out_dim_(out_dim) {}
    virtual ~QueryOracle() = default;

    Vec query(const Vec& x) const {
        if (x.size() != in_dim_) throw ShapeError("oracle query: bad input dimension");
        if (!contains_point(x)) throw DomainError("oracle query: point outside the query domain");
        counter_.fetch_add(1, std::memory_order_relaxed);
        return eval_impl(x);
    }

    // domain membership; overridden by oracles whose domain is not one polytope
    virtual bool contains_point(const Vec& x) const { return domain_.contains(x, domain_tol_); }

    std::uint64_t query_count() const { return counter_.load(std::memory_order_relaxed); }
    const Polytope& domain() const { return domain_; }
    int input_dim() const { return in_dim_; }
    int output_dim() const { return out_dim_; }

    // ground-truth handle for harness verification; null for true black boxes
    virtual const NetworkParams* ground_truth() const { return nullptr; }

protected:
    virtual Vec eval_impl(const Vec& x) const = 0;
    Polytope domain_;
    int in_dim_;
    int out_dim_;
    double domain_tol_ = 1e-9;
    mutable std::atomic<std::uint64_t> counter_{0};
};

class NetworkOracle : public QueryOracle {
public:
    NetworkOracle(NetworkParams p, Polytope domain)
        : QueryOracle(std::move(domain), p.arch.input_dim(), p.arch.output_dim()),
          params_(std::move(p)) {
        params_.validate();
    }
    const NetworkParams* ground_truth() const override { return &params_; }

protected:
    Vec eval_impl(const Vec& x) const override { return forward(params_, x); }

private:
    NetworkParams params_;
};

class FunctionOracle : public QueryOracle {
public:
    FunctionOracle(std::function<Vec(const Vec&)> f, Polytope domain, int in_dim, int out_dim)
        : QueryOracle(std::move(domain), in_dim, out_dim), f_(std::move(f)) {}

protected:
    Vec eval_impl(const Vec& x) const override { return f_(x); }

private:
    std::function<Vec(const Vec&)> f_;
};

// ------------------------------ teachers -----------------------------------

enum class TeacherMode { Gaussian, NormalizedGaussian };

inline NetworkParams make_teacher(const Architecture& arch, std::uint64_t seed,
                                  TeacherMode mode = TeacherMode::Gaussian) {
    arch.validate();
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    NetworkParams p;
    p.arch = arch;
    for (int k = arch.depth - 1; k >= 0; --k) {
        Mat M(arch.width(k), arch.width(k + 1));
        Vec b(arch.width(k));
        for (Eigen::Index i = 0; i < M.rows(); ++i) {
            for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = g(rng);
            b[i] = g(rng);
        }
        p.weights.push_back(std::move(M));
        p.biases.push_back(std::move(b));
    }
    p.validate();
    if (mode == TeacherMode::NormalizedGaussian) return normalize(p).params;
    return p;
}

// ------------------------------ catalog ------------------------------------

struct Scenario {
    std::string id;
    std::vector<NetworkParams> params;  // 1 network, or the pair when printed
    Vec omega_lo, omega_hi;
    std::map<std::string, std::string> expect;  // e.g. {"P.a", "fail@k=1"}
    std::string note;
};

// big-box stand-in for R^{n_K}; catalog features all live within radius 10
inline constexpr double kBigBoxRadius = 1e6;

inline Scenario catalog(const std::string& id, double a = 1.0) {
    auto m = [](std::initializer_list<std::initializer_list<double>> rows) {
        Mat out(static_cast<Eigen::Index>(rows.size()),
                static_cast<Eigen::Index>(rows.begin()->size()));
        Eigen::Index i = 0;
        for (const auto& r : rows) {
            Eigen::Index j = 0;
            for (double v : r) out(i, j++) = v;
            ++i;
        }
        return out;
    };
    auto v = [](std::initializer_list<double> entries) {
        Vec out(static_cast<Eigen::Index>(entries.size()));
        Eigen::Index i = 0;
        for (double e : entries) out[i++] = e;
        return out;
    };

    Scenario s;
    s.id = id;
    if (id == "ex1") {
        NetworkParams p = make_network({2, 3, 1}, {m({{0, 2}, {1, -1}, {-1, -1}}), m({{1, 1, 1}})},
                                       {v({0, 0, 0}), v({0})});
        NetworkParams q = p;
        q.weight(1) = -q.weight(1);
        s.params = {std::move(p), std::move(q)};
        s.omega_lo = Vec::Constant(2, -kBigBoxRadius);
        s.omega_hi = Vec::Constant(2, kBigBoxRadius);
        s.expect = {{"P.a", "fail@k=1"}, {"equivalent", "no"}, {"functionally_equal", "yes"}};
        s.note = "rank-deficient first layer; sign flip preserves the function";
    } else if (id == "ex2") {
        if (!(a > 0)) throw DomainError("catalog ex2: parameter a must be > 0");
        s.params = {make_network({1, 1, 1}, {m({{1}}), m({{1}})}, {v({a}), v({-a})})};
        s.omega_lo = v({1.0});
        s.omega_hi = v({5.0});
        s.expect = {{"P.b", "fail@k=1"}, {"equivalent", "no"}, {"functionally_equal", "yes"}};
        s.note = "hidden neuron never switches on [1,5]; f(x) = x there for every a";
    } else if (id == "ex3") {
        if (!(a > 0)) throw DomainError("catalog ex3: parameter a must be > 0");
        s.params = {make_network({1, 1, 1, 1}, {m({{1}}), m({{1}}), m({{1}})},
                                 {v({a}), v({-1 - a}), v({0})})};
        s.omega_lo = v({-kBigBoxRadius});
        s.omega_hi = v({kBigBoxRadius});
        s.expect = {{"P.c", "fail@k=2"}, {"equivalent", "no"}, {"functionally_equal", "yes"}};
        s.note = "f(x) = sigma(x - 1) independently of a; the first fold is invisible";
    } else if (id == "ex4") {
        NetworkParams p = make_network({1, 1, 1, 1}, {m({{1}}), m({{-1}}), m({{-1}})},
                                       {v({0}), v({1}), v({0})});
        NetworkParams q = make_network({1, 1, 1, 1}, {m({{-1}}), m({{-1}}), m({{1}})},
                                       {v({1}), v({1}), v({-1})});
        s.params = {std::move(p), std::move(q)};
        s.omega_lo = v({-kBigBoxRadius});
        s.omega_hi = v({kBigBoxRadius});
        s.expect = {{"P.d", "fail@k=2"}, {"equivalent", "no"}, {"functionally_equal", "yes"}};
        s.note = "first- and second-layer folds are both points; indistinguishable";
    } else if (id == "comparative") {
        s.params = {make_network({2, 2, 2, 1},
                                 {m({{1, 0}, {0, 1}}), m({{1, -1}, {-1, 2}}), m({{1, 1}})},
                                 {v({0, 0}), v({-1, 2}), v({0})})};
        s.omega_lo = Vec::Constant(2, -10.0);
        s.omega_hi = Vec::Constant(2, 10.0);
        s.expect = {{"P", "pass"}};
        s.note = "two hidden layers, all conditions hold";
    } else {
        throw DomainError("catalog: unknown id '" + id + "'");
    }
    for (auto& p : s.params) p.validate();
    return s;
}

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json j;
    j["id"] = s.id;
    nlohmann::json nets = nlohmann::json::array();
    for (const auto& p : s.params) nets.push_back(to_json(p));
    j["networks"] = std::move(nets);
    nlohmann::json omega;
    nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
    for (Eigen::Index i = 0; i < s.omega_lo.size(); ++i) lo.push_back(s.omega_lo[i]);
    for (Eigen::Index i = 0; i < s.omega_hi.size(); ++i) hi.push_back(s.omega_hi[i]);
    omega["lo"] = std::move(lo);
    omega["hi"] = std::move(hi);
    j["omega"] = std::move(omega);
    j["expect"] = s.expect;
    j["note"] = s.note;
    return j;
}

// ------------------------- functional distance ------------------------------

struct DistanceStats {
    double sup = 0.0;
    double mean = 0.0;
    int samples = 0;
};

inline DistanceStats functional_distance(const NetworkParams& p1, const NetworkParams& p2,
                                         const Vec& lo, const Vec& hi, int n,
                                         std::uint64_t seed = 1) {
    if (p1.arch.input_dim() != p2.arch.input_dim() ||
        p1.arch.output_dim() != p2.arch.output_dim())
        throw ShapeError("functional_distance: dimension mismatch");
    HaltonSampler sampler(p1.arch.input_dim(), seed);
    DistanceStats st;
    st.samples = n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        Vec x = sampler.next_in_box(lo, hi);
        double gap = (forward(p1, x) - forward(p2, x)).cwiseAbs().maxCoeff();
        st.sup = std::max(st.sup, gap);
        acc += gap;
    }
    st.mean = acc / std::max(1, n);
    return st;
}

// ------------------------------ risk ----------------------------------------

using LossFn = std::function<double(const Vec&, const Vec&)>;

inline double squared_error(const Vec& a, const Vec& b) { return (a - b).squaredNorm(); }

struct RiskEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    int samples = 0;
};

using InputSampler = std::function<Vec(Rng&)>;

// Monte-Carlo estimate of E[L(f_student(X), f_teacher(X))]; the input
// distribution defaults to uniform on the box and the loss to squared error
// (which satisfies L(y,y') = 0 => y = y'), both pluggable.
inline RiskEstimate estimate_risk(const NetworkParams& teacher, const NetworkParams& student,
                                  const Vec& lo, const Vec& hi, int n, std::uint64_t seed = 1,
                                  const LossFn& loss = squared_error,
                                  const InputSampler& sampler = nullptr) {
    if (teacher.arch.input_dim() != student.arch.input_dim() ||
        teacher.arch.output_dim() != student.arch.output_dim())
        throw ShapeError("estimate_risk: dimension mismatch");
    Rng rng(seed);
    double acc = 0.0, acc2 = 0.0;
    for (int i = 0; i < n; ++i) {
        Vec x = sampler ? sampler(rng) : uniform_in_box(lo, hi, rng);
        double L = loss(forward(student, x), forward(teacher, x));
        acc += L;
        acc2 += L * L;
    }
    RiskEstimate est;
    est.samples = n;
    est.mean = acc / n;
    double var = std::max(0.0, acc2 / n - est.mean * est.mean);
    est.stderr_ = std::sqrt(var / n);
    return est;
}

}  // namespace reluid
