#include "reluid/conditions.hpp"

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
    std::uniform_real_distribution<double> logs(-0.8, 0.8);
    for (int k = 1; k <= arch.depth - 1; ++k) {
        auto& perm = w.perms[static_cast<std::size_t>(k)];
        std::shuffle(perm.begin(), perm.end(), rng);
        for (Eigen::Index i = 0; i < w.scales[static_cast<std::size_t>(k)].size(); ++i)
            w.scales[static_cast<std::size_t>(k)][i] = std::exp(logs(rng));
    }
    return w;
}

Vec box1(double v) { return Vec::Constant(1, v); }

const double BIG = 1e6;

}  // namespace

TEST_CASE("P.a: rank verdicts") {
    auto e1 = testnets::ex1();
    auto ra = check_P_a(e1, 1);
    CHECK(ra.verdict == Verdict::Fail);  // 3x2 cannot have full row rank

    auto comp = testnets::comparative();
    CHECK(check_P_a(comp, 1).verdict == Verdict::Pass);
    CHECK(check_P_a(comp, 2).verdict == Verdict::Pass);

    Rng rng(20240810);
    int pass = 0;
    for (int s = 0; s < 100; ++s) {
        auto p = random_net({3, 3, 1}, rng);
        pass += check_P_a(p, 1).verdict == Verdict::Pass;
    }
    CHECK(pass == 100);

    auto zero = make_network({2, 2, 1}, {Mat::Zero(2, 2), Mat::Zero(1, 2)},
                             {Vec::Zero(2), Vec::Zero(1)});
    CHECK(check_P_a(zero, 1).verdict == Verdict::Fail);
}

TEST_CASE("P.b: comparative network passes with re-verifiable witnesses") {
    auto comp = testnets::comparative();
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);
    auto pf3 = pushforward_domain(comp, lo, hi, 3);
    auto pf2 = pushforward_domain(comp, lo, hi, 2);
    auto r2 = check_P_b(comp, lo, hi, 2, pf3);
    REQUIRE(r2.verdict == Verdict::Pass);
    auto r1 = check_P_b(comp, lo, hi, 1, pf2);
    REQUIRE(r1.verdict == Verdict::Pass);
    // witnesses satisfy M^1 x + b^1 = 0 per neuron and lie in Omega_2 = [0,10]^2
    for (int i = 0; i < 2; ++i) {
        const Vec& w = r1.witnesses[static_cast<std::size_t>(i)];
        REQUIRE(w.size() == 2);
        CHECK(std::abs(comp.weight(1).row(i).dot(w) + comp.bias(1)[i]) <= 1e-8);
        CHECK(w.minCoeff() >= -1e-9);
        CHECK(w.maxCoeff() <= 10.0 + 1e-9);
    }
}

TEST_CASE("P.b: example 2 fails on [1,5] for every a > 0") {
    for (double a : {1.0, 2.0, 0.5}) {
        auto e2 = testnets::ex2(a);
        Vec lo = box1(1.0), hi = box1(5.0);
        auto pf2 = pushforward_domain(e2, lo, hi, 2);
        auto r = check_P_b(e2, lo, hi, 1, pf2);
        CHECK(r.verdict == Verdict::Fail);
        CHECK(r.failing_neuron == 0);
        // fail witness re-verifies: constant sign over Omega samples
        Rng rng(1);
        for (int s = 0; s < 10000; ++s) {
            Vec x = uniform_in_box(lo, hi, rng);
            CHECK(e2.weight(1)(0, 0) * x[0] + e2.bias(1)[0] > 0.0);
        }
    }
}

TEST_CASE("P.b: hyperplane through the box center passes") {
    auto p = make_network({2, 1, 1}, {mat({{1, 0}}), mat({{1}})}, {vec({0}), vec({0})});
    Vec lo = Vec::Constant(2, -4.0), hi = Vec::Constant(2, 4.0);
    auto pf = pushforward_domain(p, lo, hi, 2);
    auto r = check_P_b(p, lo, hi, 1, pf);
    REQUIRE(r.verdict == Verdict::Pass);
    CHECK(std::abs(r.witnesses[0][0]) <= 1e-8);
}

TEST_CASE("P.c: example 3 fails at k=2 with a re-checkable offender") {
    for (double a : {1.0, 2.0}) {
        auto e3 = testnets::ex3(a);
        Vec lo = box1(-BIG), hi = box1(BIG);
        auto pf2 = pushforward_domain(e3, lo, hi, 2);
        RegionEnumOptions ro;
        ro.lo = box1(-2.0 * BIG);
        ro.hi = box1(2.0 * BIG);
        auto regions = enumerate_regions(e3, 2, ro);
        auto r = check_P_c(e3, lo, hi, 2, regions, pf2);
        REQUIRE(r.verdict == Verdict::Fail);
        REQUIRE(!r.offenders.empty());
        const auto& off = r.offenders[0];
        CHECK(off.col_norm <= 1e-10);
        // offender point: in E_i (|y_i| small), inside the region, inside Omega_2
        CHECK(std::abs(off.point[off.column]) <= 1e-8);
        CHECK(eval_f_k(e3, 2, box1(off.point[0] - a)).size() == 1);  // shapes line up
    }
}

TEST_CASE("P.c: comparative network passes at k=2") {
    auto comp = testnets::comparative();
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);
    auto pf2 = pushforward_domain(comp, lo, hi, 2);
    RegionEnumOptions ro;
    ro.scale = 40.0;
    auto regions = enumerate_regions(comp, 2, ro);
    auto r = check_P_c(comp, lo, hi, 2, regions, pf2);
    CHECK(r.verdict == Verdict::Pass);

    // affine tail with nonzero columns and a crossing boundary
    auto pf1 = pushforward_domain(comp, lo, hi, 1);
    auto regions1 = enumerate_regions(comp, 1);
    CHECK(check_P_c(comp, lo, hi, 1, regions1, pf1).verdict == Verdict::Pass);
}

TEST_CASE("P.d: example 4 fails at k=2, the covered hyperplane is {1}") {
    auto e4 = testnets::ex4();
    Vec lo = box1(-BIG), hi = box1(BIG);
    auto pf3 = pushforward_domain(e4, lo, hi, 3);
    RegionEnumOptions ro;
    ro.lo = box1(-2.0 * BIG);
    ro.hi = box1(2.0 * BIG);
    auto regions = enumerate_regions(e4, 2, ro);
    auto r = check_P_d(e4, lo, hi, 2, regions, pf3);
    REQUIRE(r.verdict == Verdict::Fail);
    REQUIRE(r.failing_candidate >= 0);
    const auto& cd = r.candidates[static_cast<std::size_t>(r.failing_candidate)];
    CHECK(std::abs(std::abs(cd.offset / cd.normal[0]) - 1.0) <= 1e-9);
}

TEST_CASE("P.d: comparative network passes at k=2; affine tail is vacuous") {
    auto comp = testnets::comparative();
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);
    auto pf3 = pushforward_domain(comp, lo, hi, 3);
    RegionEnumOptions ro;
    ro.scale = 40.0;
    auto regions = enumerate_regions(comp, 2, ro);
    auto r = check_P_d(comp, lo, hi, 2, regions, pf3);
    CHECK(r.verdict == Verdict::Pass);
    // every candidate full hyperplane has uncovered samples
    for (const auto& cd : r.candidates)
        if (cd.meets_interior) CHECK(cd.samples_on_boundary < cd.samples_total);

    auto pf2 = pushforward_domain(comp, lo, hi, 2);
    auto regions1 = enumerate_regions(comp, 1);
    auto r1 = check_P_d(comp, lo, hi, 1, regions1, pf2);
    CHECK(r1.verdict == Verdict::Pass);
    CHECK(r1.candidates.empty());
}

TEST_CASE("check_P: comparative passes overall") {
    auto comp = testnets::comparative();
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);
    auto report = check_P(comp, lo, hi);
    CHECK(report.overall == Verdict::Pass);
    for (const auto& L : report.layers) {
        CHECK(L.a.verdict == Verdict::Pass);
        CHECK(L.b.verdict == Verdict::Pass);
        CHECK(L.c.verdict == Verdict::Pass);
        CHECK(L.d.verdict == Verdict::Pass);
    }
}

TEST_CASE("check_P: designated counter-example failures") {
    // Ex. 1 -> P.a at k=1; everything else passes
    {
        auto report = check_P(testnets::ex1(), Vec::Constant(2, -BIG), Vec::Constant(2, BIG));
        REQUIRE(report.layers.size() == 1);
        CHECK(report.layers[0].a.verdict == Verdict::Fail);
        CHECK(report.layers[0].b.verdict == Verdict::Pass);
        CHECK(report.layers[0].c.verdict == Verdict::Pass);
        CHECK(report.layers[0].d.verdict == Verdict::Pass);
        CHECK(report.overall == Verdict::Fail);
    }
    // Ex. 2 on [1,5] -> P.b at k=1 only
    {
        auto report = check_P(testnets::ex2(1.0), box1(1.0), box1(5.0));
        REQUIRE(report.layers.size() == 1);
        CHECK(report.layers[0].a.verdict == Verdict::Pass);
        CHECK(report.layers[0].b.verdict == Verdict::Fail);
        CHECK(report.layers[0].c.verdict == Verdict::Pass);
        CHECK(report.layers[0].d.verdict == Verdict::Pass);
    }
    // Ex. 3 -> P.c at k=2 (P.d at k=2 also fails, as the discussion of the
    // example notes: the boundary union is again a point of R)
    {
        auto report = check_P(testnets::ex3(1.0), box1(-BIG), box1(BIG));
        REQUIRE(report.layers.size() == 2);
        const auto& k1 = report.layers[0];
        const auto& k2 = report.layers[1];
        CHECK(k1.k == 1);
        CHECK(k2.k == 2);
        CHECK(k2.c.verdict == Verdict::Fail);
        CHECK(k1.a.verdict == Verdict::Pass);
        CHECK(k1.b.verdict == Verdict::Pass);
        CHECK(k1.c.verdict == Verdict::Pass);
        CHECK(k1.d.verdict == Verdict::Pass);
        CHECK(k2.a.verdict == Verdict::Pass);
        CHECK(k2.b.verdict == Verdict::Pass);
    }
    // Ex. 4 -> P.d at k=2 only
    {
        auto report = check_P(testnets::ex4(), box1(-BIG), box1(BIG));
        REQUIRE(report.layers.size() == 2);
        const auto& k1 = report.layers[0];
        const auto& k2 = report.layers[1];
        CHECK(k2.d.verdict == Verdict::Fail);
        CHECK(k2.a.verdict == Verdict::Pass);
        CHECK(k2.b.verdict == Verdict::Pass);
        CHECK(k2.c.verdict == Verdict::Pass);
        CHECK(k1.a.verdict == Verdict::Pass);
        CHECK(k1.b.verdict == Verdict::Pass);
        CHECK(k1.c.verdict == Verdict::Pass);
        CHECK(k1.d.verdict == Verdict::Pass);
    }
    // all-zero network fails P.a
    {
        auto zero = make_network({2, 2, 1}, {Mat::Zero(2, 2), Mat::Zero(1, 2)},
                                 {Vec::Zero(2), Vec::Zero(1)});
        auto report = check_P(zero, Vec::Constant(2, -5.0), Vec::Constant(2, 5.0));
        CHECK(report.layers[0].a.verdict == Verdict::Fail);
        CHECK(report.overall == Verdict::Fail);
    }
}

TEST_CASE("conditions P are stable under equivalence transforms") {
    // random small networks fail P often (usually P.b or P.c); scan until
    // enough passing seeds are found, then require stability for each
    Rng rng(31337);
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);
    int passing = 0;
    for (int s = 0; s < 300 && passing < 8; ++s) {
        auto p = random_net({2, 2, 2, 1}, rng);
        auto report = check_P(p, lo, hi);
        if (report.overall != Verdict::Pass) continue;
        ++passing;
        auto w = random_witness(p.arch, rng);
        auto q = apply_transform(p, w);
        auto report2 = check_P(q, lo, hi);
        CHECK(report2.overall == Verdict::Pass);
    }
    CHECK(passing >= 5);
}

TEST_CASE("verdicts are deterministic for a fixed seed") {
    auto comp = testnets::comparative();
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);
    ConditionOptions opt;
    opt.seed = 987654321;
    auto a = to_json(check_P(comp, lo, hi, opt)).dump();
    auto b = to_json(check_P(comp, lo, hi, opt)).dump();
    CHECK(a == b);
}

TEST_CASE("report rendering includes verdicts and seed") {
    auto comp = testnets::comparative();
    Vec lo = Vec::Constant(2, -10.0), hi = Vec::Constant(2, 10.0);
    auto report = check_P(comp, lo, hi);
    auto text = render_text(report);
    CHECK(text.find("overall: pass") != std::string::npos);
    auto j = to_json(report);
    CHECK(j["overall"] == "pass");
    CHECK(j["layers"].size() == 2);
}
