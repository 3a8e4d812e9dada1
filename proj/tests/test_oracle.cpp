#include "reluid/oracle.hpp"

#include "reference_nets.hpp"

#include <catch_amalgamated.hpp>

#include <thread>

using namespace reluid;
using testnets::vec;

TEST_CASE("oracle counts queries and enforces the domain") {
    auto comp = testnets::comparative();
    NetworkOracle oracle(comp, box_polytope(Vec::Constant(2, -5.0), Vec::Constant(2, 5.0)));
    CHECK(oracle.query_count() == 0);
    Vec x = vec({1.0, 2.0});
    Vec y = oracle.query(x);
    CHECK(y.size() == 1);
    CHECK(oracle.query_count() == 1);
    for (int i = 0; i < 9; ++i) oracle.query(x);
    CHECK(oracle.query_count() == 10);
    CHECK_THROWS_AS(oracle.query(vec({6.0, 0.0})), DomainError);
    CHECK(oracle.query_count() == 10);  // rejected queries are not counted
    CHECK_THROWS_AS(oracle.query(vec({1.0})), ShapeError);
    REQUIRE(oracle.ground_truth() != nullptr);
}

TEST_CASE("query counter is safe under concurrent increments") {
    auto comp = testnets::comparative();
    NetworkOracle oracle(comp, box_polytope(Vec::Constant(2, -5.0), Vec::Constant(2, 5.0)));
    const int threads = 8, per_thread = 2000;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&oracle] {
            Vec x = Vec::Zero(2);
            for (int i = 0; i < per_thread; ++i) oracle.query(x);
        });
    for (auto& th : pool) th.join();
    CHECK(oracle.query_count() == static_cast<std::uint64_t>(threads * per_thread));
}

TEST_CASE("teacher generation is deterministic and normalizes on request") {
    Architecture arch{3, {3, 3, 2, 1}};
    auto a = make_teacher(arch, 42, TeacherMode::Gaussian);
    auto b = make_teacher(arch, 42, TeacherMode::Gaussian);
    for (int k = 0; k < a.depth(); ++k) {
        CHECK(a.weight(k) == b.weight(k));
        CHECK(a.bias(k) == b.bias(k));
    }
    auto c = make_teacher(arch, 42, TeacherMode::NormalizedGaussian);
    CHECK(is_normalized(c, 1e-12));

    int full_rank = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        auto t = make_teacher(Architecture{2, {3, 3, 1}}, s);
        Eigen::JacobiSVD<Mat> svd(t.weight(1));
        full_rank += svd.singularValues().minCoeff() > 1e-8;
    }
    CHECK(full_rank == 100);
}

TEST_CASE("catalog networks reproduce the printed closed forms") {
    Rng rng(2026);
    // ex2: f(x) = -a for x < -a, x otherwise
    for (double a : {1.0, 2.0}) {
        auto s = catalog("ex2", a);
        for (int i = 0; i < 1000; ++i) {
            Vec x = uniform_in_box(Vec::Constant(1, -8.0), Vec::Constant(1, 8.0), rng);
            double expect = x[0] < -a ? -a : x[0];
            CHECK(std::abs(forward(s.params[0], x)[0] - expect) <= 1e-12);
        }
    }
    // ex3: f(x) = sigma(x - 1) for every a
    for (double a : {1.0, 2.0, 0.25}) {
        auto s = catalog("ex3", a);
        for (int i = 0; i < 1000; ++i) {
            Vec x = uniform_in_box(Vec::Constant(1, -8.0), Vec::Constant(1, 8.0), rng);
            double expect = std::max(x[0] - 1.0, 0.0);
            CHECK(std::abs(forward(s.params[0], x)[0] - expect) <= 1e-12);
        }
    }
    // ex4: both networks implement sigma(x)-1 for x <= 1, 0 for x > 1
    {
        auto s = catalog("ex4");
        REQUIRE(s.params.size() == 2);
        for (int i = 0; i < 1000; ++i) {
            Vec x = uniform_in_box(Vec::Constant(1, -8.0), Vec::Constant(1, 8.0), rng);
            double expect = x[0] > 1.0 ? 0.0 : std::max(x[0], 0.0) - 1.0;
            CHECK(std::abs(forward(s.params[0], x)[0] - expect) <= 1e-12);
            CHECK(std::abs(forward(s.params[1], x)[0] - expect) <= 1e-12);
        }
    }
    // ex1: the pair coincides everywhere
    {
        auto s = catalog("ex1");
        REQUIRE(s.params.size() == 2);
        for (int i = 0; i < 1000; ++i) {
            Vec x = uniform_in_box(Vec::Constant(2, -8.0), Vec::Constant(2, 8.0), rng);
            CHECK(std::abs(forward(s.params[0], x)[0] - forward(s.params[1], x)[0]) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(catalog("nope"), DomainError);
    CHECK(catalog("comparative").expect.at("P") == "pass");
}

TEST_CASE("scenario serialization carries omega and expectations") {
    auto s = catalog("ex2", 1.0);
    auto j = to_json(s);
    CHECK(j["omega"]["lo"][0] == 1.0);
    CHECK(j["omega"]["hi"][0] == 5.0);
    CHECK(j["expect"]["P.b"] == "fail@k=1");
    CHECK(j["networks"].size() == 1);
}

TEST_CASE("functional distance statistics") {
    // equivalent pair: sup <= 1e-9
    Rng rng(7);
    auto comp = testnets::comparative();
    EquivalenceWitness w = identity_witness(comp.arch);
    w.scales[1] = vec({2.0, 0.5});
    w.perms[2] = {1, 0};
    auto moved = apply_transform(comp, w);
    auto d = functional_distance(comp, moved, Vec::Constant(2, -10.0), Vec::Constant(2, 10.0),
                                 1000, 5);
    CHECK(d.sup <= 1e-9);

    // ex2 pair: indistinguishable on [1,5], far apart on [-5,5]
    auto a1 = catalog("ex2", 1.0).params[0];
    auto a2 = catalog("ex2", 2.0).params[0];
    auto near = functional_distance(a1, a2, vec({1.0}), vec({5.0}), 1000, 5);
    CHECK(near.sup <= 1e-12);
    auto far = functional_distance(a1, a2, vec({-5.0}), vec({5.0}), 4000, 5);
    CHECK(far.sup >= 1.0 - 1e-3);  // |a - a'| = 1 attained left of -2
    CHECK(far.mean > 0.0);

    // determinism per seed
    auto rep = functional_distance(a1, a2, vec({-5.0}), vec({5.0}), 4000, 5);
    CHECK(rep.sup == far.sup);
    CHECK(rep.mean == far.mean);

    CHECK_THROWS_AS(functional_distance(a1, comp, vec({-1.0}), vec({1.0}), 10), ShapeError);
}

TEST_CASE("risk estimator") {
    auto comp = testnets::comparative();
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);

    // equivalent student: zero risk within noise
    EquivalenceWitness w = identity_witness(comp.arch);
    w.scales[1] = vec({3.0, 0.25});
    auto student = apply_transform(comp, w);
    auto zero = estimate_risk(comp, student, lo, hi, 100000, 99);
    CHECK(zero.mean <= 1e-16 + 3.0 * zero.stderr_);

    // perturbed bias: risk bounded away from zero
    auto bad = comp;
    bad.bias(1)[0] += 0.5;
    auto pos = estimate_risk(comp, bad, lo, hi, 100000, 99);
    CHECK(pos.mean > 5.0 * pos.stderr_);

    // ex2 pair with the distribution supported on [1,5]: estimate ~ 0
    auto a1 = catalog("ex2", 1.0).params[0];
    auto a2 = catalog("ex2", 2.0).params[0];
    auto hidden = estimate_risk(a1, a2, vec({1.0}), vec({5.0}), 100000, 99);
    CHECK(hidden.mean <= 1e-16 + 3.0 * hidden.stderr_);
}
