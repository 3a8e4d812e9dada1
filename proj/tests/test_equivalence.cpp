#include "reluid/equivalence.hpp"

#include "reference_nets.hpp"

#include <catch_amalgamated.hpp>

using namespace reluid;
using testnets::mat;
using testnets::vec;

namespace {

NetworkParams random_net(const std::vector<int>& widths, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<Mat> W;
    std::vector<Vec> B;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        Mat M(widths[i + 1], widths[i]);
        Vec b(widths[i + 1]);
        for (Eigen::Index r = 0; r < M.rows(); ++r) {
            for (Eigen::Index c = 0; c < M.cols(); ++c) M(r, c) = g(rng);
            b[r] = g(rng);
        }
        W.push_back(M);
        B.push_back(b);
    }
    return make_network(widths, W, B);
}

EquivalenceWitness random_witness(const Architecture& arch, Rng& rng) {
    EquivalenceWitness w = identity_witness(arch);
    std::uniform_real_distribution<double> logs(-1.2, 1.2);
    for (int k = 1; k <= arch.depth - 1; ++k) {
        auto& perm = w.perms[static_cast<std::size_t>(k)];
        std::shuffle(perm.begin(), perm.end(), rng);
        for (Eigen::Index i = 0; i < w.scales[static_cast<std::size_t>(k)].size(); ++i)
            w.scales[static_cast<std::size_t>(k)][i] = std::exp(logs(rng));
    }
    return w;
}

double functional_gap(const NetworkParams& a, const NetworkParams& b, int samples, Rng& rng,
                      double radius = 5.0) {
    Vec lo = Vec::Constant(a.arch.input_dim(), -radius);
    Vec hi = Vec::Constant(a.arch.input_dim(), radius);
    double sup = 0.0;
    for (int i = 0; i < samples; ++i) {
        Vec x = uniform_in_box(lo, hi, rng);
        sup = std::max(sup, (forward(a, x) - forward(b, x)).cwiseAbs().maxCoeff());
    }
    return sup;
}

double max_param_gap(const NetworkParams& a, const NetworkParams& b) {
    double gap = 0.0;
    for (int k = 0; k < a.depth(); ++k) {
        gap = std::max(gap, (a.weight(k) - b.weight(k)).cwiseAbs().maxCoeff());
        gap = std::max(gap, (a.bias(k) - b.bias(k)).cwiseAbs().maxCoeff());
    }
    return gap;
}

}  // namespace

TEST_CASE("identity witness leaves parameters unchanged bit-exactly") {
    Rng rng(11);
    auto p = random_net({2, 3, 2, 1}, rng);
    auto q = apply_transform(p, identity_witness(p.arch));
    for (int k = 0; k < p.depth(); ++k) {
        CHECK(q.weight(k) == p.weight(k));
        CHECK(q.bias(k) == p.bias(k));
    }
}

TEST_CASE("single-neuron rescaling matches the hand computation") {
    auto p = make_network({1, 1, 1}, {mat({{1}}), mat({{1}})}, {vec({0}), vec({0})});
    EquivalenceWitness w = identity_witness(p.arch);
    w.scales[1] = vec({2.0});
    auto q = apply_transform(p, w);
    CHECK(q.weight(1)(0, 0) == Catch::Approx(2.0));
    CHECK(q.bias(1)[0] == Catch::Approx(0.0));
    CHECK(q.weight(0)(0, 0) == Catch::Approx(0.5));
}

TEST_CASE("witness application preserves the network function") {
    Rng rng(22);
    for (int t = 0; t < 25; ++t) {
        auto p = random_net({3, 4, 3, 2}, rng);
        auto w = random_witness(p.arch, rng);
        auto q = apply_transform(p, w);
        CHECK(functional_gap(p, q, 1000, rng) <= 1e-9);
    }
}

TEST_CASE("inverse witness restores the original parameters") {
    Rng rng(33);
    auto p = random_net({2, 4, 3, 1}, rng);
    auto w = random_witness(p.arch, rng);
    auto back = apply_transform(apply_transform(p, w), invert_witness(w));
    CHECK(max_param_gap(back, p) <= 1e-12);
}

TEST_CASE("witness errors") {
    Rng rng(44);
    auto p = random_net({2, 3, 1}, rng);
    EquivalenceWitness w = identity_witness(p.arch);
    w.scales[1][0] = -1.0;
    CHECK_THROWS_AS(apply_transform(p, w), ShapeError);
    EquivalenceWitness w2 = identity_witness(p.arch);
    w2.perms[1] = {0, 0, 1};
    CHECK_THROWS_AS(apply_transform(p, w2), ShapeError);
}

TEST_CASE("composition agrees with sequential application") {
    Rng rng(55);
    for (int t = 0; t < 20; ++t) {
        auto p = random_net({2, 3, 3, 2}, rng);
        auto w1 = random_witness(p.arch, rng);
        auto w2 = random_witness(p.arch, rng);
        auto seq = apply_transform(apply_transform(p, w1), w2);
        auto once = apply_transform(p, compose_witness(w1, w2));
        CHECK(max_param_gap(seq, once) <= 1e-10);
    }
}

TEST_CASE("group laws") {
    Rng rng(66);
    auto arch = Architecture{3, {2, 4, 3, 1}};
    for (int t = 0; t < 10; ++t) {
        auto w = random_witness(arch, rng);
        auto id = compose_witness(w, invert_witness(w));
        for (std::size_t k = 0; k < id.perms.size(); ++k) {
            CHECK(id.perms[k] == identity_perm(static_cast<int>(id.perms[k].size())));
            CHECK((id.scales[k].array() - 1.0).abs().maxCoeff() <= 1e-12);
        }
        auto idw = identity_witness(arch);
        auto same = compose_witness(idw, w);
        for (std::size_t k = 0; k < same.perms.size(); ++k) {
            CHECK(same.perms[k] == w.perms[k]);
            CHECK((same.scales[k] - w.scales[k]).cwiseAbs().maxCoeff() <= 1e-15);
        }
        // associativity on random triples
        auto a = random_witness(arch, rng), b = random_witness(arch, rng),
             c = random_witness(arch, rng);
        auto left = compose_witness(compose_witness(a, b), c);
        auto right = compose_witness(a, compose_witness(b, c));
        for (std::size_t k = 0; k < left.perms.size(); ++k) {
            CHECK(left.perms[k] == right.perms[k]);
            CHECK((left.scales[k] - right.scales[k]).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("normalization produces unit rows and preserves the function") {
    Rng rng(77);
    for (int t = 0; t < 20; ++t) {
        auto p = random_net({3, 4, 3, 2}, rng);
        auto n = normalize(p);
        CHECK(is_normalized(n.params, 1e-12));
        CHECK(functional_gap(p, n.params, 300, rng) <= 1e-9);
        auto via = apply_transform(p, n.witness);
        CHECK(max_param_gap(via, n.params) == 0.0);
        // idempotence
        auto n2 = normalize(n.params);
        for (std::size_t k = 0; k < n2.witness.scales.size(); ++k)
            CHECK((n2.witness.scales[k].array() - 1.0).abs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("normalization hand examples") {
    auto p = make_network({2, 1, 1}, {mat({{3, 4}}), mat({{2}})}, {vec({1}), vec({0})});
    auto n = normalize(p);
    CHECK(n.params.weight(1)(0, 0) == Catch::Approx(0.6));
    CHECK(n.params.weight(1)(0, 1) == Catch::Approx(0.8));
    CHECK(n.witness.scales[1][0] == Catch::Approx(0.2));
    CHECK(n.params.weight(0)(0, 0) == Catch::Approx(10.0));  // column scaled by 5
    CHECK(n.params.bias(1)[0] == Catch::Approx(0.2));

    auto comp = testnets::comparative();
    auto nc = normalize(comp);
    const Mat& M1 = nc.params.weight(1);
    CHECK(M1.row(0).norm() == Catch::Approx(1.0).margin(1e-14));
    CHECK(M1(0, 0) == Catch::Approx(1.0 / std::sqrt(2.0)));
    CHECK(M1(1, 1) == Catch::Approx(2.0 / std::sqrt(5.0)));

    auto zero_row = make_network({2, 2, 1}, {mat({{0, 0}, {1, 1}}), mat({{1, 1}})},
                                 {vec({0, 0}), vec({0})});
    CHECK_THROWS_AS(normalize(zero_row), NormalizationImpossible);
}

TEST_CASE("check_equivalent recovers a transforming witness") {
    Rng rng(88);
    for (int t = 0; t < 20; ++t) {
        auto p = random_net({2, 4, 3, 1}, rng);
        auto w = random_witness(p.arch, rng);
        auto q = apply_transform(p, w);
        auto found = check_equivalent(p, q, 1e-6);
        REQUIRE(found.has_value());
        auto back = apply_transform(p, *found);
        CHECK(max_param_gap(back, q) <= 1e-9);
    }
}

TEST_CASE("non-equivalent pairs are rejected") {
    CHECK_FALSE(check_equivalent(testnets::ex2(1.0), testnets::ex2(2.0), 1e-6).has_value());
    CHECK_FALSE(check_equivalent(testnets::ex1(), testnets::ex1_negated(), 1e-6).has_value());
    CHECK_FALSE(check_equivalent(testnets::ex4(), testnets::ex4_tilde(), 1e-6).has_value());
    CHECK_THROWS_AS(check_equivalent(testnets::ex1(), testnets::ex2(1.0), 1e-6), ShapeError);
}

TEST_CASE("check_equivalent is reflexive, symmetric and transitive on chains") {
    Rng rng(99);
    for (int t = 0; t < 10; ++t) {
        auto p = random_net({2, 3, 2, 2}, rng);
        CHECK(check_equivalent(p, p, 1e-8).has_value());
        auto q = apply_transform(p, random_witness(p.arch, rng));
        auto r = apply_transform(q, random_witness(p.arch, rng));
        auto pq = check_equivalent(p, q, 1e-6);
        auto qp = check_equivalent(q, p, 1e-6);
        REQUIRE(pq.has_value());
        REQUIRE(qp.has_value());
        // mutually inverse within tolerance
        auto should_be_id = compose_witness(*pq, *qp);
        auto back = apply_transform(p, should_be_id);
        CHECK(max_param_gap(back, p) <= 1e-8);
        CHECK(check_equivalent(p, r, 1e-6).has_value());
    }
}

TEST_CASE("near-duplicate rows still match via optimal assignment") {
    // two nearly identical hidden rows; greedy matching could cross them
    auto p = make_network(
        {2, 2, 1}, {mat({{1.0, 0.0}, {1.0, 1e-7}}), mat({{1, 2}})}, {vec({0, 0}), vec({1})});
    Rng rng(111);
    auto w = random_witness(p.arch, rng);
    auto q = apply_transform(p, w);
    auto found = check_equivalent(p, q, 1e-5);
    REQUIRE(found.has_value());
    auto back = apply_transform(p, *found);
    CHECK(max_param_gap(back, q) <= 1e-6);
}

TEST_CASE("witness serialization round trip") {
    Rng rng(123);
    auto arch = Architecture{3, {2, 3, 2, 1}};
    auto w = random_witness(arch, rng);
    auto j = to_json(w);
    auto w2 = witness_from_json(j);
    for (std::size_t k = 0; k < w.perms.size(); ++k) {
        CHECK(w2.perms[k] == w.perms[k]);
        CHECK((w2.scales[k] - w.scales[k]).cwiseAbs().maxCoeff() == 0.0);
    }
}
