// weinfib_cli: batch runner for scenario pipelines.
//
//   weinfib_cli run --scenario cylinder.scn --out out/ [--threads N] [--seed S]
//   weinfib_cli liouville --model torus4 --set step.liouville.tol=1e-7
//
// Exit codes: 0 all steps pass, 1 a step failed, 2 parse error, 3 model
// build failure.

#include "weinfib/scenario.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

struct Common {
    std::string scenario;
    std::string out;
    std::string model;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
    std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c, bool single_step)
{
    app->add_option("--scenario", c.scenario, "scenario file (key = value text)");
    app->add_option("--out", c.out, "output directory for reports and tables");
    app->add_option("--threads", c.threads, "worker threads (falls back to WEINFIB_THREADS)")->check(CLI::PositiveNumber);
    app->add_option("--seed", c.seed, "seed for probe points; unseeded runs use a fixed low-discrepancy sequence");
    app->add_flag("--verbose", c.verbose, "print one line per step to stderr");
    app->add_option("--set", c.sets, "extra `key=value` scenario settings, applied after the file");
    if (single_step) app->add_option("--model", c.model, "built-in model (cylinder, torus2, torus4, product_MxB)");
}

int execute(const Common& c, const std::string& only_op)
{
    weinfib::Scenario s;
    try {
        if (!c.scenario.empty()) s = weinfib::load_scenario(c.scenario);
        if (!c.model.empty()) s.model_name = c.model;
        if (!only_op.empty()) {
            std::map<std::string, std::string> kept;
            for (const auto& st : s.pipeline)
                if (st.op == only_op) kept.insert(st.params.begin(), st.params.end());
            s.pipeline = {{only_op, only_op, kept}};
        }
        for (const auto& kv : c.sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw weinfib::ParseError("--set expects key=value, got '" + kv + "'");
            weinfib::apply_setting(s, weinfib::detail::trim(kv.substr(0, eq)), weinfib::detail::trim(kv.substr(eq + 1)));
        }
    } catch (const weinfib::Error& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 2;
    }
    if (c.threads > 0) weinfib::set_thread_count(c.threads);
    weinfib::RunOptions opt;
    opt.out_dir = c.out;
    opt.seed = c.seed;
    opt.verbose = c.verbose;
    opt.log = &std::cerr;
    const auto r = weinfib::run_scenario(s, opt);
    if (r.exit_code == 3) std::cerr << "model build failed: " << r.report.value("error", std::string{}) << '\n';
    if (r.exit_code == 1) std::cerr << "step failed: " << r.report.value("failed_step", std::string{}) << '\n';
    if (c.out.empty() && s.out_dir.empty()) std::cout << r.report.dump(2) << '\n';
    return r.exit_code;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Fibred forms, Liouville structures and Weinstein charts on symplectic bundle models"};
    app.require_subcommand(1);

    Common common;
    auto* run = app.add_subcommand("run", "run every step of a scenario pipeline");
    add_common(run, common, false);
    run->callback([&] {
        if (common.scenario.empty()) throw CLI::RequiredError("--scenario");
    });

    const std::vector<std::string> ops = {"hodge", "liouville", "polarize", "weinstein-build", "weinstein-verify",
                                          "classify", "lagrangianize", "graph", "classify-fibration", "psi"};
    std::vector<CLI::App*> subs;
    for (const auto& op : ops) {
        auto* sub = app.add_subcommand(op, "run the " + op + " step alone");
        add_common(sub, common, true);
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (run->parsed()) return execute(common, "");
    for (std::size_t i = 0; i < ops.size(); ++i)
        if (subs[i]->parsed()) return execute(common, ops[i]);
    return 2;
}
