// Command-line frontend: evaluate networks, check the identifiability
// conditions, test equivalence, normalize, recover parameters from a black
// box, reproduce the reference examples, and estimate risk.

#include "reluid/conditions.hpp"
#include "reluid/equivalence.hpp"
#include "reluid/net.hpp"
#include "reluid/oracle.hpp"
#include "reluid/recovery.hpp"
#include "reluid/regions.hpp"

#include <CLI11.hpp>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

namespace {

using namespace reluid;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    out << content;
}

NetworkParams load_network(const std::string& path) { return deserialize(read_file(path)); }

// --box LO HI, repeatable per dimension; one pair broadcasts
std::pair<Vec, Vec> resolve_box(const std::vector<double>& flat, int dim, double fallback_radius) {
    if (flat.empty()) {
        return {Vec::Constant(dim, -fallback_radius), Vec::Constant(dim, fallback_radius)};
    }
    if (flat.size() % 2 != 0) throw Error("--box expects LO HI pairs");
    const int pairs = static_cast<int>(flat.size()) / 2;
    Vec lo(dim), hi(dim);
    if (pairs == 1) {
        lo.setConstant(flat[0]);
        hi.setConstant(flat[1]);
    } else if (pairs == dim) {
        for (int i = 0; i < dim; ++i) {
            lo[i] = flat[static_cast<std::size_t>(2 * i)];
            hi[i] = flat[static_cast<std::size_t>(2 * i + 1)];
        }
    } else {
        throw Error("--box: expected 1 or " + std::to_string(dim) + " LO HI pairs");
    }
    for (int i = 0; i < dim; ++i)
        if (!(lo[i] < hi[i])) throw Error("--box: LO must be strictly below HI");
    return {lo, hi};
}

std::string format_vec(const Vec& v) {
    std::ostringstream os;
    os.precision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
    return os.str();
}

// ------------------------- external oracle process -------------------------
// Line protocol: one input vector per line on the child's stdin, one output
// vector per line on its stdout, flushed per query.
class SubprocessOracle : public QueryOracle {
public:
    SubprocessOracle(const std::string& command, Polytope domain, int in_dim, int out_dim,
                     int processes)
        : QueryOracle(std::move(domain), in_dim, out_dim) {
        for (int i = 0; i < std::max(1, processes); ++i)
            children_.push_back(std::make_unique<Child>(command));
    }

protected:
    Vec eval_impl(const Vec& x) const override {
        std::size_t idx = next_.fetch_add(1, std::memory_order_relaxed) % children_.size();
        return children_[idx]->ask(x, out_dim_);
    }

private:
    struct Child {
        explicit Child(const std::string& command) {
            // O_CLOEXEC keeps siblings from inheriting each other's pipe
            // ends; otherwise closing one child's stdin never delivers EOF
            int to_child[2], from_child[2];
            if (pipe2(to_child, O_CLOEXEC) != 0 || pipe2(from_child, O_CLOEXEC) != 0)
                throw Error("oracle subprocess: pipe failed");
            pid = fork();
            if (pid < 0) throw Error("oracle subprocess: fork failed");
            if (pid == 0) {
                dup2(to_child[0], STDIN_FILENO);   // dup2 clears CLOEXEC
                dup2(from_child[1], STDOUT_FILENO);
                execl("/bin/sh", "sh", "-c", command.c_str(), (char*)nullptr);
                _exit(127);
            }
            close(to_child[0]);
            close(from_child[1]);
            in = fdopen(to_child[1], "w");
            out = fdopen(from_child[0], "r");
            if (!in || !out) throw Error("oracle subprocess: fdopen failed");
        }
        ~Child() {
            if (in) fclose(in);  // EOF on the child's stdin ends it
            if (out) fclose(out);
            if (pid > 0) {
                int status = 0;
                waitpid(pid, &status, 0);
            }
        }
        Vec ask(const Vec& x, int out_dim) {
            std::lock_guard<std::mutex> lock(mu);
            std::ostringstream os;
            os.precision(17);
            for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? " " : "") << x[i];
            os << "\n";
            auto s = os.str();
            if (fputs(s.c_str(), in) == EOF || fflush(in) != 0)
                throw Error("oracle subprocess: write failed");
            char buf[65536];
            if (!fgets(buf, sizeof(buf), out)) throw Error("oracle subprocess: read failed");
            std::istringstream is(buf);
            Vec y(out_dim);
            for (int i = 0; i < out_dim; ++i)
                if (!(is >> y[i])) throw Error("oracle subprocess: malformed response line");
            return y;
        }
        pid_t pid = -1;
        FILE* in = nullptr;
        FILE* out = nullptr;
        std::mutex mu;
    };
    std::vector<std::unique_ptr<Child>> children_;
    mutable std::atomic<std::size_t> next_{0};
};

// ------------------------------ subcommands --------------------------------

int cmd_eval(const std::string& net_path, const std::string& points_path,
             const std::string& out_path) {
    auto net = load_network(net_path);
    std::ifstream pts(points_path);
    if (!pts) {
        std::cerr << "eval: cannot open points file: " << points_path << "\n";
        return 1;
    }
    std::ostringstream out;
    out.precision(17);
    std::string line;
    int lineno = 0;
    while (std::getline(pts, line)) {
        ++lineno;
        std::istringstream is(line);
        std::vector<double> vals;
        double v;
        while (is >> v) vals.push_back(v);
        if (vals.empty()) continue;
        if (static_cast<int>(vals.size()) != net.arch.input_dim()) {
            std::cerr << "eval: line " << lineno << ": expected " << net.arch.input_dim()
                      << " coordinates, got " << vals.size() << "\n";
            return 1;
        }
        Vec x(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t i = 0; i < vals.size(); ++i) x[static_cast<Eigen::Index>(i)] = vals[i];
        out << format_vec(forward(net, x)) << "\n";
    }
    if (out_path.empty())
        std::cout << out.str();
    else
        write_file(out_path, out.str());
    return 0;
}

int cmd_check(const std::string& net_path, const std::vector<double>& box_flat,
              const ConditionOptions& opt, const std::string& out_path) {
    auto net = load_network(net_path);
    auto [lo, hi] = resolve_box(box_flat, net.arch.input_dim(), kBigBoxRadius);
    auto report = check_P(net, lo, hi, opt);
    std::cout << render_text(report);
    if (!out_path.empty()) write_file(out_path, to_json(report).dump(2) + "\n");
    switch (report.overall) {
        case Verdict::Pass: return 0;
        case Verdict::Fail: return 1;
        default: return 2;
    }
}

int cmd_equiv(const std::string& a_path, const std::string& b_path, double tol,
              const std::string& out_path) {
    auto a = load_network(a_path);
    auto b = load_network(b_path);
    auto witness = check_equivalent(a, b, tol);
    if (!witness) {
        std::cout << "not equivalent (tol " << tol << ")\n";
        return 1;
    }
    std::string doc = to_json(*witness).dump(2) + "\n";
    if (out_path.empty())
        std::cout << doc;
    else
        write_file(out_path, doc);
    std::cout << "equivalent (tol " << tol << ")\n";
    return 0;
}

int cmd_normalize(const std::string& net_path, const std::string& out_path,
                  const std::string& witness_path) {
    auto net = load_network(net_path);
    auto result = normalize(net);
    std::string doc = serialize(result.params) + "\n";
    if (out_path.empty())
        std::cout << doc;
    else
        write_file(out_path, doc);
    if (!witness_path.empty()) write_file(witness_path, to_json(result.witness).dump(2) + "\n");
    return 0;
}

int cmd_recover(const std::string& teacher_path, const std::string& oracle_cmd,
                std::vector<int> arch_widths, const std::vector<double>& box_flat, int in_dim,
                int out_dim, const RecoveryOptions& ropts, int parallel, double equiv_tol,
                const std::string& out_path) {
    std::shared_ptr<QueryOracle> oracle;
    std::optional<NetworkParams> teacher;
    if (!teacher_path.empty()) {
        teacher = load_network(teacher_path);
        if (arch_widths.empty()) arch_widths = teacher->arch.widths;
        auto [lo, hi] = resolve_box(box_flat, teacher->arch.input_dim(), 10.0);
        oracle = std::make_shared<NetworkOracle>(*teacher, box_polytope(lo, hi));
    } else {
        if (oracle_cmd.empty()) {
            std::cerr << "recover: provide --teacher or --oracle-cmd\n";
            return 1;
        }
        if (arch_widths.empty() || in_dim <= 0 || out_dim <= 0) {
            std::cerr << "recover: external oracles need --arch, --in-dim and --out-dim\n";
            return 1;
        }
        auto [lo, hi] = resolve_box(box_flat, in_dim, 10.0);
        oracle = std::make_shared<SubprocessOracle>(oracle_cmd, box_polytope(lo, hi), in_dim,
                                                    out_dim, parallel);
    }
    Architecture arch{static_cast<int>(arch_widths.size()) - 1, arch_widths};
    arch.validate();

    auto result = recover_network(oracle, arch, ropts);
    std::cout << "queries: " << result.diag.queries_used << " (seed " << result.diag.seed << ")\n";
    for (const auto& st : result.diag.stages) {
        std::cout << "layer " << st.layer_k;
        if (st.layer_k >= 1)
            std::cout << ": observations " << st.observations << ", clusters " << st.clusters
                      << ", full hyperplanes " << st.full_hyperplanes << ", max fit residual "
                      << st.max_fit_residual;
        else
            std::cout << ": affine fit residual " << st.max_fit_residual;
        if (!st.note.empty()) std::cout << "  [" << st.note << "]";
        std::cout << "\n";
    }
    if (!result.diag.success) {
        std::cout << "recovery failed at layer " << result.diag.failed_layer << ": "
                  << result.diag.failure << "\n";
        if (!result.diag.suspected_condition.empty())
            std::cout << "suspected cause: " << result.diag.suspected_condition << "\n";
        return result.diag.suspected_condition == "budget" ? 2 : 1;
    }
    double gap = verify_recovery(*oracle, *result.network, ropts.verify_samples,
                                 ropts.seed ^ 0xabcdef);
    std::cout << "verification sup gap over fresh samples: " << gap << "\n";
    if (teacher) {
        auto w = check_equivalent(*result.network, *teacher, equiv_tol);
        std::cout << "equivalence vs teacher (tol " << equiv_tol
                  << "): " << (w ? "equivalent" : "NOT equivalent") << "\n";
    }
    std::string doc = serialize(*result.network) + "\n";
    if (out_path.empty())
        std::cout << doc;
    else
        write_file(out_path, doc);
    return 0;
}

int cmd_demo(const std::string& id, std::vector<double> avals, const std::string& out_path) {
    if (avals.empty()) avals = {1.0};
    std::cout.precision(12);
    try {
        if (id == "ex1" || id == "ex4") {
            auto s = catalog(id);
            std::cout << s.id << ": " << s.note << "\n";
            Vec lo = s.omega_lo, hi = s.omega_hi;
            std::cout << "sampled values of the two parameterizations (identical):\n";
            HaltonSampler sampler(static_cast<int>(lo.size()), 7);
            for (int i = 0; i < 5; ++i) {
                Vec x = sampler.next_in_box(Vec::Constant(lo.size(), -3.0),
                                            Vec::Constant(lo.size(), 3.0));
                std::cout << "  f(" << format_vec(x) << ") = "
                          << format_vec(forward(s.params[0], x)) << "  vs  "
                          << format_vec(forward(s.params[1], x)) << "\n";
            }
            auto d = functional_distance(s.params[0], s.params[1], Vec::Constant(lo.size(), -10.0),
                                         Vec::Constant(lo.size(), 10.0), 1000, 3);
            std::cout << "sup gap over 1000 samples: " << d.sup << "\n";
            auto w = check_equivalent(s.params[0], s.params[1], 1e-6);
            std::cout << "check_equivalent: " << (w ? "equivalent" : "not equivalent") << "\n";
            std::cout << "expected condition failure: ";
            for (const auto& [k, v] : s.expect)
                if (k.rfind("P.", 0) == 0) std::cout << k << " " << v;
            std::cout << "\n";
            if (!out_path.empty()) write_file(out_path, to_json(s).dump(2) + "\n");
            return 0;
        }
        if (id == "ex2" || id == "ex3") {
            std::vector<Scenario> scen;
            for (double a : avals) scen.push_back(catalog(id, a));
            std::cout << id << ": " << scen[0].note << "\n";
            Vec lo = scen[0].omega_lo, hi = scen[0].omega_hi;
            if (id == "ex3") {
                lo = Vec::Constant(1, -10.0);
                hi = Vec::Constant(1, 10.0);
            }
            HaltonSampler sampler(1, 7);
            std::cout << "sampled values on Omega";
            for (double a : avals) std::cout << "  [a=" << a << "]";
            std::cout << ":\n";
            for (int i = 0; i < 5; ++i) {
                Vec x = sampler.next_in_box(lo, hi);
                std::cout << "  f(" << format_vec(x) << ") =";
                for (const auto& s : scen) std::cout << " " << format_vec(forward(s.params[0], x));
                std::cout << "\n";
            }
            if (scen.size() >= 2) {
                auto d = functional_distance(scen[0].params[0], scen[1].params[0], lo, hi, 1000, 3);
                std::cout << "sup gap over 1000 samples: " << d.sup << "\n";
                auto w = check_equivalent(scen[0].params[0], scen[1].params[0], 1e-6);
                std::cout << "check_equivalent: " << (w ? "equivalent" : "not equivalent") << "\n";
            }
            std::cout << "expected condition failure: ";
            for (const auto& [k, v] : scen[0].expect)
                if (k.rfind("P.", 0) == 0) std::cout << k << " " << v;
            std::cout << "\n";
            if (!out_path.empty()) write_file(out_path, to_json(scen[0]).dump(2) + "\n");
            return 0;
        }
        if (id == "comparative") {
            auto s = catalog("comparative");
            const auto& net = s.params[0];
            std::cout << "comparative: " << s.note << "\n";
            RegionEnumOptions ro;
            ro.scale = 40.0;
            auto regions = enumerate_regions(net, 2, ro);
            std::cout << "regions of g_2 (pattern -> V^2, c^2):\n";
            for (const auto& r : regions) {
                auto flat = flatten_pattern(r.pattern);
                std::cout << "  D_{" << (flat[0] ? 1 : -1) << "," << (flat[1] ? 1 : -1) << "}"
                          << "  V^2 = (" << r.V(0, 0) << ", " << r.V(0, 1) << ")"
                          << "  c^2 = " << r.c[0] << "\n";
            }
            std::cout << "first-layer hyperplanes (unit normal, offset):\n";
            for (const auto& h : first_layer_hyperplanes(net))
                std::cout << "  [" << format_vec(h.normal) << "], " << h.offset << "\n";
            auto report = check_P(net, s.omega_lo, s.omega_hi);
            std::cout << render_text(report);
            if (!out_path.empty()) {
                nlohmann::json j = to_json(s);
                j["regions_g2"] = regions_to_json(regions);
                j["conditions"] = to_json(report);
                write_file(out_path, j.dump(2) + "\n");
            }
            return report.overall == Verdict::Pass ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << "demo: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "demo: unknown id '" << id << "' (use ex1, ex2, ex3, ex4, comparative)\n";
    return 1;
}

int cmd_risk(const std::string& teacher_path, const std::string& student_path,
             const std::vector<double>& box_flat, int n, std::uint64_t seed) {
    auto teacher = load_network(teacher_path);
    auto student = load_network(student_path);
    auto [lo, hi] = resolve_box(box_flat, teacher.arch.input_dim(), 10.0);
    auto est = estimate_risk(teacher, student, lo, hi, n, seed);
    std::cout.precision(12);
    std::cout << "risk estimate: " << est.mean << "  stderr: " << est.stderr_ << "  (n = " << n
              << ", seed " << seed << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"identifiability toolkit for feedforward ReLU networks"};
    app.require_subcommand(1);

    // eval
    std::string eval_net, eval_points, eval_out;
    auto* eval = app.add_subcommand("eval", "evaluate a network on points from a file");
    eval->add_option("net", eval_net, "network JSON file")->required();
    eval->add_option("points", eval_points, "points file, one vector per line")->required();
    eval->add_option("--out", eval_out, "output file (default stdout)");

    // check
    std::string check_net, check_out;
    std::vector<double> check_box;
    ConditionOptions copt;
    auto* check = app.add_subcommand("check", "verify the conditions P on a domain");
    check->add_option("net", check_net, "network JSON file")->required();
    check->add_option("--box", check_box, "domain box LO HI (repeat per dimension)");
    check->add_option("--seed", copt.seed, "sampling seed");
    check->add_option("--tol-rank", copt.tol.rank_tol, "rank tolerance");
    check->add_option("--tol-col", copt.tol.col_tol, "V-column tolerance");
    check->add_option("--tol-membership", copt.tol.membership, "boundary membership tolerance");
    check->add_option("--tol-slack", copt.tol.interior_slack, "interior certification slack");
    check->add_option("--out", check_out, "write the JSON report here");

    // equiv
    std::string eq_a, eq_b, eq_out;
    double eq_tol = 1e-6;
    auto* equiv = app.add_subcommand("equiv", "decide equivalence modulo permutation and rescaling");
    equiv->add_option("a", eq_a, "first network")->required();
    equiv->add_option("b", eq_b, "second network")->required();
    equiv->add_option("--tol", eq_tol, "matching tolerance");
    equiv->add_option("--out", eq_out, "write the witness JSON here");

    // normalize
    std::string norm_net, norm_out, norm_wit;
    auto* norm = app.add_subcommand("normalize", "unit-norm canonical form");
    norm->add_option("net", norm_net, "network JSON file")->required();
    norm->add_option("--out", norm_out, "output network file (default stdout)");
    norm->add_option("--witness", norm_wit, "write the normalizing witness here");

    // recover
    std::string rec_teacher, rec_cmd, rec_out;
    std::vector<int> rec_arch;
    std::vector<double> rec_box;
    int rec_in = 0, rec_out_dim = 0, rec_parallel = 1;
    double rec_eqtol = 1e-5;
    RecoveryOptions ropts;
    auto* rec = app.add_subcommand("recover", "recover parameters from black-box queries");
    rec->add_option("--teacher", rec_teacher, "teacher network file (in-process oracle)");
    rec->add_option("--oracle-cmd", rec_cmd, "external oracle command (line protocol)");
    rec->add_option("--arch", rec_arch, "architecture widths, input first (e.g. 3 3 2 1)");
    rec->add_option("--box", rec_box, "query domain LO HI (repeat per dimension)");
    rec->add_option("--in-dim", rec_in, "input dimension (external oracle)");
    rec->add_option("--out-dim", rec_out_dim, "output dimension (external oracle)");
    rec->add_option("--seed", ropts.seed, "randomness seed");
    rec->add_option("--budget", ropts.query_budget, "query budget");
    rec->add_option("--parallel", rec_parallel, "number of oracle subprocesses");
    rec->add_option("--tol-equiv", rec_eqtol, "equivalence tolerance for teacher comparison");
    rec->add_option("--out", rec_out, "write the recovered network here");

    // demo
    std::string demo_id, demo_out;
    std::vector<double> demo_a;
    auto* demo = app.add_subcommand("demo", "reproduce a reference example");
    demo->add_option("id", demo_id, "ex1 | ex2 | ex3 | ex4 | comparative")->required();
    demo->add_option("--a", demo_a, "parameter a (repeatable; ex2/ex3 only)");
    demo->add_option("--out", demo_out, "write the scenario JSON here");

    // risk
    std::string risk_teacher, risk_student;
    std::vector<double> risk_box;
    int risk_n = 100000;
    std::uint64_t risk_seed = 1;
    auto* risk = app.add_subcommand("risk", "Monte-Carlo risk of a student against a teacher");
    risk->add_option("teacher", risk_teacher, "teacher network")->required();
    risk->add_option("student", risk_student, "student network")->required();
    risk->add_option("--box", risk_box, "input distribution box LO HI");
    risk->add_option("--n", risk_n, "sample count");
    risk->add_option("--seed", risk_seed, "sampling seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*eval) return cmd_eval(eval_net, eval_points, eval_out);
        if (*check) return cmd_check(check_net, check_box, copt, check_out);
        if (*equiv) return cmd_equiv(eq_a, eq_b, eq_tol, eq_out);
        if (*norm) return cmd_normalize(norm_net, norm_out, norm_wit);
        if (*rec)
            return cmd_recover(rec_teacher, rec_cmd, rec_arch, rec_box, rec_in, rec_out_dim,
                               ropts, rec_parallel, rec_eqtol, rec_out);
        if (*demo) return cmd_demo(demo_id, demo_a, demo_out);
        if (*risk) return cmd_risk(risk_teacher, risk_student, risk_box, risk_n, risk_seed);
    } catch (const BudgetExhausted& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
