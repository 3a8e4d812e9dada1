#include "reluid/net.hpp"

#include "reference_nets.hpp"

#include <catch_amalgamated.hpp>

#include <random>

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

}  // namespace

TEST_CASE("forward matches the closed forms of the catalog networks") {
    auto e4 = testnets::ex4();
    CHECK(forward(e4, vec({0.5}))[0] == Catch::Approx(-0.5).margin(1e-15));
    CHECK(forward(e4, vec({2.0}))[0] == Catch::Approx(0.0).margin(1e-15));
    CHECK(forward(e4, vec({-3.0}))[0] == Catch::Approx(-1.0).margin(1e-15));

    auto comp = testnets::comparative();
    CHECK(forward(comp, vec({0.0, 0.0}))[0] == Catch::Approx(2.0).margin(1e-15));
}

TEST_CASE("all-zero network maps everything to zero") {
    auto zero = make_network({2, 2, 1}, {Mat::Zero(2, 2), Mat::Zero(1, 2)},
                             {Vec::Zero(2), Vec::Zero(1)});
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        Vec x = uniform_in_box(Vec::Constant(2, -5.0), Vec::Constant(2, 5.0), rng);
        CHECK(forward(zero, x).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("eval_f_k conventions") {
    auto comp = testnets::comparative();
    Vec x = vec({-1.0, 3.0});
    CHECK((eval_f_k(comp, comp.depth(), x) - x).cwiseAbs().maxCoeff() == 0.0);
    Vec f2 = eval_f_k(comp, 2, x);
    CHECK(f2[0] == 0.0);
    CHECK(f2[1] == 3.0);

    Rng rng(7);
    auto p = random_net({3, 4, 2}, rng);
    for (int i = 0; i < 100; ++i) {
        Vec xi = uniform_in_box(Vec::Constant(3, -4.0), Vec::Constant(3, 4.0), rng);
        CHECK((eval_f_k(p, 0, xi) - forward(p, xi)).cwiseAbs().maxCoeff() < 1e-14);
    }
    CHECK_THROWS_AS(eval_f_k(p, 4, x), DomainError);
}

TEST_CASE("eval_g_k conventions and composition") {
    auto comp = testnets::comparative();
    CHECK(eval_g_k(comp, 2, vec({2.0, 1.0}))[0] == Catch::Approx(2.0).margin(1e-15));
    Vec y = vec({4.0});
    CHECK((eval_g_k(comp, 0, vec({4.0})) - vec({4.0})).cwiseAbs().maxCoeff() == 0.0);

    auto e3 = testnets::ex3(1.0);
    CHECK(eval_g_k(e3, 2, vec({3.0}))[0] == Catch::Approx(1.0).margin(1e-15));

    Rng rng(13);
    for (int t = 0; t < 20; ++t) {
        auto p = random_net({2, 3, 3, 2}, rng);
        for (int k = 0; k <= p.depth(); ++k) {
            for (int i = 0; i < 50; ++i) {
                Vec x = uniform_in_box(Vec::Constant(2, -3.0), Vec::Constant(2, 3.0), rng);
                Vec via = eval_g_k(p, k, eval_f_k(p, k, x));
                CHECK((via - forward(p, x)).cwiseAbs().maxCoeff() <= 1e-12);
            }
        }
    }
}

TEST_CASE("activation patterns use the >= 0 convention") {
    auto comp = testnets::comparative();
    auto pat = activation_pattern(comp, vec({3.0, 1.0}));
    REQUIRE(pat.bits.size() == 2);
    CHECK(pat.bits[0] == std::vector<std::uint8_t>{1, 1});
    CHECK(pat.bits[1] == std::vector<std::uint8_t>{1, 1});

    auto e2 = testnets::ex2(1.0);
    auto pat2 = activation_pattern(e2, vec({5.0}));
    CHECK(pat2.bits[0] == std::vector<std::uint8_t>{1});

    auto zero = make_network({2, 3, 1}, {Mat::Zero(3, 2), Mat::Zero(1, 3)},
                             {Vec::Zero(3), Vec::Zero(1)});
    auto patz = activation_pattern(zero, vec({1.0, -1.0}));
    CHECK(patz.bits[0] == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("output layer applies no activation") {
    auto p = make_network({1, 1, 1}, {mat({{1}}), mat({{1}})}, {vec({0}), vec({-10})});
    CHECK(forward(p, vec({1.0}))[0] == Catch::Approx(-9.0));
    CHECK(forward(p, vec({-1.0}))[0] == Catch::Approx(-10.0));
}

TEST_CASE("piecewise linearity: constant pattern implies one affine map") {
    Rng rng(99);
    auto p = random_net({3, 4, 3, 2}, rng);
    std::normal_distribution<double> g(0.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 50 && checked < 20; ++trial) {
        Vec x0 = uniform_in_box(Vec::Constant(3, -3.0), Vec::Constant(3, 3.0), rng);
        double r = 1e-4;
        auto pat0 = activation_pattern(p, x0);
        std::vector<Vec> pts{x0};
        bool same = true;
        for (int i = 0; i < 8; ++i) {
            Vec xi = x0 + r * random_unit_vector(3, rng);
            if (!(activation_pattern(p, xi) == pat0)) {
                same = false;
                break;
            }
            pts.push_back(xi);
        }
        if (!same) continue;
        ++checked;
        // fit affine map from 4 of the points, check the rest
        Mat A(4, 4);
        Mat Y(4, 2);
        for (int i = 0; i < 4; ++i) {
            A.row(i).head(3) = pts[static_cast<std::size_t>(i)].transpose();
            A(i, 3) = 1.0;
            Y.row(i) = forward(p, pts[static_cast<std::size_t>(i)]).transpose();
        }
        Mat theta = A.fullPivLu().solve(Y);
        for (const auto& pt : pts) {
            Vec pred = theta.topRows(3).transpose() * pt + theta.row(3).transpose();
            CHECK((pred - forward(p, pt)).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
    CHECK(checked >= 10);
}

TEST_CASE("serialization round trip is bit exact") {
    Rng rng(4242);
    for (int t = 0; t < 10; ++t) {
        auto p = random_net({3, 4, 2}, rng);
        auto q = deserialize(serialize(p));
        REQUIRE(q.arch == p.arch);
        for (int k = 0; k < p.depth(); ++k) {
            CHECK(q.weight(k) == p.weight(k));
            CHECK(q.bias(k) == p.bias(k));
        }
    }
}

TEST_CASE("network document parsing and validation") {
    auto e1 = testnets::ex1();
    auto parsed = deserialize(serialize(e1));
    Mat m1 = mat({{0, 2}, {1, -1}, {-1, -1}});
    CHECK(parsed.weight(1) == m1);

    // n_1 = 3 but a 2-row M^1
    std::string bad = R"({
      "depth": 2, "widths": [2, 3, 1],
      "layers": [
        {"k": 1, "weights": [[0, 2], [1, -1]], "bias": [0, 0, 0]},
        {"k": 0, "weights": [[1, 1, 1]], "bias": [0]}
      ]})";
    CHECK_THROWS_AS(deserialize(bad), ShapeError);

    CHECK_THROWS_AS(deserialize("{not json"), ParseError);
    CHECK_THROWS_AS(deserialize(R"({"depth": 2, "widths": [2, 3]})"), ShapeError);
}

TEST_CASE("shape errors on evaluation") {
    auto e1 = testnets::ex1();
    CHECK_THROWS_AS(forward(e1, vec({1.0})), ShapeError);
    CHECK_THROWS_AS(eval_g_k(e1, 1, vec({1.0, 2.0})), ShapeError);
}
