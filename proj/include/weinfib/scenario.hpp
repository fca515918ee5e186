#pragma once

// Scenario files and the pipeline runner behind weinfib_cli.
//
// A scenario is flat `key = value` text with dotted sections:
//
//   schema_version = 1
//   model.name = cylinder
//   model.c_amplitude = 0.5
//   pipeline = liouville, polarize, weinstein-build, weinstein-verify, classify
//   step.classify.near = 0.1*dth1
//
// Pipeline entries are `op` or `op:label`; step parameters are addressed by
// the label when present, else by the op name.

#include "weinfib/fibration_space.hpp"
#include "weinfib/form_io.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <regex>

namespace weinfib {

inline constexpr int kScenarioSchema = 1;
inline constexpr int kReportSchema = 1;

class ParseError : public Error {
public:
    using Error::Error;
};

struct StepSpec {
    std::string op;
    std::string label;
    std::map<std::string, std::string> params;
};

struct Scenario {
    int schema_version = kScenarioSchema;
    std::string model_name = "cylinder";
    ModelParams params;
    std::vector<StepSpec> pipeline;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::set<std::string> tables;
};

namespace detail {

inline std::string trim(std::string s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError("'" + key + "' expects a number, got '" + v + "'");
    }
}

inline long to_long(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const long d = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParseError("'" + key + "' expects an integer, got '" + v + "'");
    }
}

inline const std::map<std::string, std::set<std::string>>& step_keys()
{
    static const std::map<std::string, std::set<std::string>> keys = {
        {"liouville", {"tol", "nodes", "per_axis"}},
        {"polarize", {"tol_solve", "tol_eigen", "tol_isotropy", "tol_conformal", "t_max", "h", "points", "conformal_points"}},
        {"weinstein-build", {"h", "manifest"}},
        {"weinstein-verify", {"probes", "tol", "manifest"}},
        {"classify", {"alpha", "near", "expect", "tol", "backend", "grid"}},
        {"hodge", {"degree", "count", "grid", "tol", "patches", "twist"}},
        {"lagrangianize", {"alpha", "expected", "grid", "tol"}},
        {"graph", {"amplitude", "expect"}},
        {"classify-fibration", {"coords", "expect"}},
        {"psi", {"amplitude", "nodes", "tol", "expect"}},
    };
    return keys;
}

} // namespace detail

inline bool is_known_op(const std::string& op) { return detail::step_keys().count(op) != 0; }

/// Applies one `key = value` assignment.
inline void apply_setting(Scenario& s, const std::string& key, const std::string& value)
{
    using detail::to_double;
    using detail::to_long;
    if (key == "schema_version") {
        s.schema_version = static_cast<int>(to_long(key, value));
        if (s.schema_version != kScenarioSchema)
            throw ParseError("unsupported schema_version " + value + " (expected " + std::to_string(kScenarioSchema) + ")");
    } else if (key == "seed") {
        s.seed = static_cast<std::uint64_t>(to_long(key, value));
    } else if (key == "model.name") {
        s.model_name = value;
    } else if (key == "model.c_amplitude") {
        s.params.c_amplitude = to_double(key, value);
    } else if (key == "model.fibre_resolution") {
        s.params.fibre_resolution = static_cast<int>(to_long(key, value));
    } else if (key == "model.base_samples") {
        s.params.base_samples = static_cast<int>(to_long(key, value));
    } else if (key == "model.patches") {
        s.params.patches = static_cast<int>(to_long(key, value));
    } else if (key == "model.tubular_radius") {
        s.params.tubular_radius = to_double(key, value);
    } else if (key == "model.tilt") {
        s.params.tilt = to_double(key, value);
    } else if (key == "pipeline") {
        s.pipeline.clear();
        for (const auto& entry : detail::split_list(value)) {
            StepSpec st;
            const auto colon = entry.find(':');
            st.op = detail::trim(entry.substr(0, colon));
            st.label = colon == std::string::npos ? st.op : detail::trim(entry.substr(colon + 1));
            if (!is_known_op(st.op)) throw ParseError("unknown pipeline op '" + st.op + "'");
            s.pipeline.push_back(std::move(st));
        }
    } else if (key == "output.dir") {
        s.out_dir = value;
    } else if (key == "output.tables") {
        for (const auto& t : detail::split_list(value)) s.tables.insert(t);
    } else if (key.rfind("step.", 0) == 0) {
        const auto dot = key.find('.', 5);
        if (dot == std::string::npos) throw ParseError("step key '" + key + "' needs a parameter name");
        const std::string label = key.substr(5, dot - 5);
        const std::string param = key.substr(dot + 1);
        if ((param == "tol" || param.rfind("tol_", 0) == 0) && detail::to_double(key, value) <= 0.0)
            throw ParseError("tolerance '" + key + "' must be positive");
        bool found = false;
        for (auto& st : s.pipeline)
            if (st.label == label) {
                if (!detail::step_keys().at(st.op).count(param))
                    throw ParseError("step '" + st.op + "' has no parameter '" + param + "'");
                st.params[param] = value;
                found = true;
            }
        if (!found) throw ParseError("'" + key + "' refers to no pipeline step (declare the pipeline first)");
    } else {
        throw ParseError("unknown key '" + key + "'");
    }
}

inline Scenario parse_scenario(std::istream& is)
{
    Scenario s;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("line " + std::to_string(lineno) + ": empty key");
        try {
            apply_setting(s, key, value);
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return s;
}

inline Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file '" + path + "'");
    return parse_scenario(in);
}

// ---------------------------------------------------------------------------
// Analytic 1-forms on the θ-torus: sums of A*dthI, A*sin(K*thJ)*dthI,
// A*cos(K*thJ)*dthI.
// ---------------------------------------------------------------------------

struct FourierTerm {
    double coef = 0;
    int kind = 0; ///< 0 constant, 1 sin, 2 cos
    double freq = 1;
    int arg = 0;
    int slot = 0;
};

inline std::vector<FourierTerm> parse_one_form(const std::string& text, int n)
{
    std::vector<FourierTerm> terms;
    std::string s;
    for (char c : text)
        if (c != ' ') s += c;
    if (s.empty() || s == "0") return terms;
    // Split on '+' and '-' that start a term.
    std::vector<std::string> parts;
    std::string cur;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        const bool sign = (c == '+' || c == '-') && i > 0 && s[i - 1] != '*' && s[i - 1] != '(' && s[i - 1] != 'e';
        if (sign) {
            parts.push_back(cur);
            cur = c == '-' ? "-" : "";
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    static const std::regex konst(R"(^([-+]?[0-9.eE+-]*)\*?dth([0-9])$)");
    static const std::regex trig(R"(^([-+]?[0-9.eE+-]*)\*?(sin|cos)\((?:([0-9.]+)\*)?th([0-9])\)\*?dth([0-9])$)");
    auto coef = [](const std::string& c) {
        if (c.empty() || c == "+") return 1.0;
        if (c == "-") return -1.0;
        return detail::to_double("coefficient", c);
    };
    for (const auto& p : parts) {
        std::smatch m;
        FourierTerm t;
        if (std::regex_match(p, m, konst)) {
            t.coef = coef(m[1]);
            t.slot = std::stoi(m[2]) - 1;
        } else if (std::regex_match(p, m, trig)) {
            t.coef = coef(m[1]);
            t.kind = m[2] == "sin" ? 1 : 2;
            t.freq = m[3].matched ? detail::to_double("frequency", m[3]) : 1.0;
            t.arg = std::stoi(m[4]) - 1;
            t.slot = std::stoi(m[5]) - 1;
        } else {
            throw ParseError("cannot parse 1-form term '" + p + "'");
        }
        if (t.slot < 0 || t.slot >= n || t.arg < 0 || t.arg >= n)
            throw ParseError("1-form term '" + p + "' uses an axis outside 1.." + std::to_string(n));
        terms.push_back(t);
    }
    return terms;
}

/// Field 1-form with exact Jacobian from Fourier terms.
inline FieldForm fourier_one_form(const std::vector<FourierTerm>& terms, int n)
{
    return FieldForm(
        1, n,
        [terms, n](double, const Vec& th) {
            Vec v = Vec::Zero(n);
            for (const auto& t : terms) {
                const double a = t.freq * th[t.arg];
                v[t.slot] += t.coef * (t.kind == 0 ? 1.0 : t.kind == 1 ? std::sin(a) : std::cos(a));
            }
            return v;
        },
        [terms, n](double, const Vec& th) {
            Mat j = Mat::Zero(n, n);
            for (const auto& t : terms) {
                const double a = t.freq * th[t.arg];
                if (t.kind == 1) j(t.slot, t.arg) += t.coef * t.freq * std::cos(a);
                if (t.kind == 2) j(t.slot, t.arg) -= t.coef * t.freq * std::sin(a);
            }
            return j;
        });
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

using Json = nlohmann::ordered_json;

struct RunOptions {
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
    std::ostream* log = nullptr;
};

struct RunResult {
    int exit_code = 0;
    Json report;
};

class PipelineRunner {
public:
    PipelineRunner(Scenario s, RunOptions opt) : s_(std::move(s)), opt_(std::move(opt))
    {
        if (!opt_.seed) opt_.seed = s_.seed;
        if (opt_.out_dir.empty()) opt_.out_dir = s_.out_dir;
    }

    RunResult run()
    {
        RunResult r;
        Json rep;
        rep["schema_version"] = kReportSchema;
        rep["model"] = s_.model_name;
        rep["seed"] = opt_.seed ? Json(*opt_.seed) : Json(nullptr);
        try {
            model_ = make_model(s_.model_name, s_.params);
            L_ = std::make_shared<const LagrangianSubbundle>(LagrangianSubbundle::tilted(model_, s_.params.tilt));
        } catch (const Error& e) {
            rep["error"] = e.what();
            rep["passed"] = false;
            r.exit_code = 3;
            r.report = rep;
            return r;
        }
        Json steps = Json::array();
        bool all = true;
        std::string failed;
        for (std::size_t i = 0; i < s_.pipeline.size(); ++i) {
            const auto& st = s_.pipeline[i];
            const auto t0 = std::chrono::steady_clock::now();
            Json out;
            out["step"] = st.label;
            out["op"] = st.op;
            bool ok = false;
            try {
                ok = dispatch(st, out);
            } catch (const std::exception& e) {
                out["error"] = e.what();
                ok = false;
            }
            out["passed"] = ok;
            out["wall_time_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            if (opt_.verbose && opt_.log)
                *opt_.log << "[" << (ok ? "pass" : "FAIL") << "] " << st.label << " ("
                          << out["wall_time_ms"].get<double>() << " ms)\n";
            if (!ok && all) failed = st.label;
            all = all && ok;
            write_json(std::to_string(i) + "_" + st.label + ".json", out);
            steps.push_back(std::move(out));
        }
        rep["steps"] = std::move(steps);
        rep["passed"] = all;
        if (!all) rep["failed_step"] = failed;
        write_json("report.json", rep);
        r.exit_code = all ? 0 : 1;
        r.report = std::move(rep);
        return r;
    }

private:
    // -- helpers ------------------------------------------------------------
    std::string param(const StepSpec& st, const std::string& key, const std::string& fallback) const
    {
        const auto it = st.params.find(key);
        return it == st.params.end() ? fallback : it->second;
    }
    double num(const StepSpec& st, const std::string& key, double fallback) const
    {
        const auto it = st.params.find(key);
        return it == st.params.end() ? fallback : detail::to_double(key, it->second);
    }
    int integer(const StepSpec& st, const std::string& key, int fallback) const
    {
        const auto it = st.params.find(key);
        return it == st.params.end() ? fallback : static_cast<int>(detail::to_long(key, it->second));
    }
    bool want_table(const std::string& name) const { return !opt_.out_dir.empty() && s_.tables.count(name); }

    std::filesystem::path out_path(const std::string& name) const
    {
        std::filesystem::create_directories(opt_.out_dir);
        return std::filesystem::path(opt_.out_dir) / name;
    }
    void write_json(const std::string& name, const Json& j) const
    {
        if (opt_.out_dir.empty()) return;
        std::ofstream(out_path(name)) << j.dump(2) << '\n';
    }

    int n() const { return model_->half_dim(); }

    const FibredForm& lambda(const StepSpec& st)
    {
        if (!lambda_) {
            const auto rho = linear_retraction(*L_);
            lambda_ = liouville_from_symplectic(*model_, *L_, rho, {integer(st, "nodes", 12)});
        }
        return *lambda_;
    }
    const LiouvilleField& field(const StepSpec& st)
    {
        if (!Y_) Y_ = liouville_field(model_, lambda(st));
        return *Y_;
    }
    const WeinsteinChart& chart(const StepSpec& st)
    {
        if (!chart_) {
            const std::string manifest = param(st, "manifest", "");
            if (!manifest.empty() && st.op != "weinstein-build") {
                std::ifstream in(manifest);
                if (!in) throw ConfigurationError("cannot open chart manifest '" + manifest + "'");
                chart_ = chart_from_manifest(nlohmann::json::parse(in));
            } else {
                ChartOptions o;
                o.h = num(st, "h", 1e-3);
                chart_ = build_chart(field(st), *L_, vertical_polarization(*L_), o);
            }
        }
        return *chart_;
    }

    std::vector<Vec> theta_points(int per_axis) const { return grid_points(n(), per_axis); }

    // -- steps --------------------------------------------------------------
    bool dispatch(const StepSpec& st, Json& out)
    {
        if (st.op == "liouville") return step_liouville(st, out);
        if (st.op == "polarize") return step_polarize(st, out);
        if (st.op == "weinstein-build") return step_build(st, out);
        if (st.op == "weinstein-verify") return step_verify(st, out);
        if (st.op == "classify") return step_classify(st, out);
        if (st.op == "hodge") return step_hodge(st, out);
        if (st.op == "lagrangianize") return step_lagrangianize(st, out);
        if (st.op == "graph") return step_graph(st, out);
        if (st.op == "classify-fibration") return step_classify_fibration(st, out);
        if (st.op == "psi") return step_psi(st, out);
        throw ParseError("unknown op " + st.op);
    }

    bool step_liouville(const StepSpec& st, Json& out)
    {
        const double tol = num(st, "tol", 1e-6);
        const HomotopyConfig cfg{integer(st, "nodes", 12)};
        const auto rho = linear_retraction(*L_);
        const FibredForm& lam = lambda(st);
        const auto pts = model_->probe_points(integer(st, "per_axis", 6));
        const double closed = field_sup(fibred_d(lam) - model_->omega(), pts);
        const double on_L = homotopy_on_L(model_->omega(), rho, *L_, theta_points(8), cfg);
        const double identity = homotopy_identity_residual(model_->omega(), rho, pts, cfg);
        // λ = -c(b) Σ (r_i - σ_i) dθ_i for the built-in models.
        double oracle = 0.0;
        for (int i = 0; i < model_->base()->size(); ++i) {
            const double b = model_->base()->sample(i);
            for (const auto& x : pts) {
                Vec expect = Vec::Zero(2 * n());
                expect.head(n()) = -model_->c(b) * L_->offset(b, x);
                oracle = std::max(oracle, sup_abs(lam.field_data()(b, x) - expect));
            }
        }
        out["residuals"] = {{"d_lambda_minus_omega", closed},
                            {"lambda_on_L", on_L},
                            {"homotopy_identity", identity},
                            {"oracle_error", oracle}};
        if (want_table("lambda")) {
            std::ofstream f(out_path("lambda.csv"));
            write_field_samples(f, lam, pts);
        }
        const bool ok = closed <= tol && on_L <= 1e-10 && identity <= tol;
        out["verdicts"] = {{"liouville", ok}};
        return ok;
    }

    bool step_polarize(const StepSpec& st, Json& out)
    {
        const auto& f = field(st);
        const auto pts = model_->probe_points(6);
        const double solve = liouville_residual(f, pts);
        const int npts = integer(st, "points", 16);
        ProbeSequence probes(n(), opt_.seed);
        const auto& base = *model_->base();
        double eig = 0.0, iso = 0.0, split = 0.0;
        Json per = Json::array();
        std::vector<Vec> thetas;
        for (int k = 0; k < npts; ++k) thetas.push_back(kTwoPi * probes.next());
        for (int k = 0; k < npts; ++k) {
            const double b = base.sample(k % base.size());
            const EigenSplit sp = jacobian_split(f, *L_, b, L_->point(b, thetas[static_cast<std::size_t>(k)]));
            std::vector<double> ev;
            for (Eigen::Index i = 0; i < sp.eigenvalues.size(); ++i) ev.push_back(sp.eigenvalues[i].real());
            std::sort(ev.begin(), ev.end());
            eig = std::max(eig, sp.cluster_distance);
            iso = std::max(iso, sp.e1_isotropy);
            split = std::max({split, sp.e0_residual, sp.e1_residual});
            per.push_back({{"base_index", k % base.size()}, {"eigenvalues", ev}});
        }
        const auto pol = vertical_polarization(*L_);
        double leaf_worst = 0.0;
        for (int k = 0; k < std::min(npts, 8); ++k) {
            const auto c = transverse_leaf(f, *L_, pol, base.sample(k % base.size()), thetas[static_cast<std::size_t>(k)]);
            leaf_worst = std::max({leaf_worst, c.ker_lambda, c.lagrangian, c.y_tangent, c.e1_gap});
        }
        std::vector<Vec> cpts;
        const double reach = 0.5 * model_->tubular_radius();
        for (int k = 0; k < integer(st, "conformal_points", 4); ++k) {
            Vec x = L_->point(base.sample(0), thetas[static_cast<std::size_t>(k) % thetas.size()]);
            x.tail(n()).array() += reach * (k % 2 == 0 ? 1.0 : -1.0);
            cpts.push_back(x);
        }
        const auto conf = conformal_check(f, *L_, base.sample(0), cpts, num(st, "t_max", 1.0), num(st, "h", 1e-3));
        Json table = Json::array();
        for (const auto& row : conf.rows)
            table.push_back({{"t", row.t}, {"residual", row.residual}, {"e1_decay", row.e1_decay}, {"exp_minus_2t", row.e1_expected}});
        if (want_table("conformal")) {
            std::ofstream csv(out_path("conformal.csv"));
            csv << "t,residual,e1_decay,exp_minus_2t\n";
            for (const auto& row : conf.rows)
                csv << detail::format17(row.t) << ',' << detail::format17(row.residual) << ','
                    << detail::format17(row.e1_decay) << ',' << detail::format17(row.e1_expected) << '\n';
        }
        out["residuals"] = {{"liouville_solve", solve},   {"eigen_cluster", eig},      {"e1_isotropy", iso},
                            {"split_residual", split},    {"leaf_checks", leaf_worst}, {"conformal", conf.sup_residual}};
        out["per_point"] = per;
        out["conformal_table"] = table;
        const bool ok = solve <= num(st, "tol_solve", 1e-9) && eig <= num(st, "tol_eigen", 1e-6)
                        && split <= num(st, "tol_eigen", 1e-6) && iso <= num(st, "tol_isotropy", 1e-8)
                        && conf.sup_residual <= num(st, "tol_conformal", 1e-4);
        out["verdicts"] = {{"transverse_polarisation", ok}};
        return ok;
    }

    bool step_build(const StepSpec& st, Json& out)
    {
        chart_.reset();
        const auto& c = chart(st);
        double zero = 0.0;
        for (int i = 0; i < model_->base()->size(); ++i) {
            const double b = model_->base()->sample(i);
            for (const auto& th : theta_points(8))
                zero = std::max(zero, sup_abs(c.forward(b, th, Vec::Zero(n())) - L_->point(b, th)));
        }
        out["manifest"] = c.manifest();
        out["residuals"] = {{"zero_section", zero}};
        if (!opt_.out_dir.empty()) {
            const std::string name = param(st, "manifest", "chart.json");
            std::ofstream(out_path(name)) << c.manifest().dump(2) << '\n';
        }
        const bool ok = zero <= 1e-9;
        out["verdicts"] = {{"chart", ok}};
        return ok;
    }

    bool step_verify(const StepSpec& st, Json& out)
    {
        const auto& c = chart(st);
        const int probes = integer(st, "probes", 100);
        double worst = 0.0, zero = 0.0;
        Json per = Json::array();
        for (int i = 0; i < model_->base()->size(); ++i) {
            std::optional<std::uint64_t> seed;
            if (opt_.seed) seed = *opt_.seed + static_cast<std::uint64_t>(i);
            const auto d = verify_symplectic(c, i, probes, seed);
            worst = std::max(worst, d.sup_defect);
            zero = std::max(zero, d.zero_section);
            per.push_back({{"base_index", i}, {"defect", d.sup_defect}});
        }
        out["residuals"] = {{"symplectic_defect", worst}, {"zero_section", zero}, {"fibre_drift", 0.0}};
        out["per_sample"] = per;
        const bool ok = worst <= num(st, "tol", 1e-5) && zero <= 1e-9;
        out["verdicts"] = {{"symplectic", ok}};
        return ok;
    }

    bool step_classify(const StepSpec& st, Json& out)
    {
        const double tol = num(st, "tol", 1e-6);
        const std::string expect = param(st, "expect", "lagrangian");
        if (expect != "lagrangian" && expect != "not_lagrangian")
            throw ParseError("classify.expect must be lagrangian or not_lagrangian");
        FibredForm alpha = FibredForm::field(model_->base(), FieldForm::zero(1, n()));
        double roundtrip = 0.0;
        if (st.params.count("alpha")) {
            alpha = FibredForm::field(model_->base(), fourier_one_form(parse_one_form(st.params.at("alpha"), n()), n()));
        } else {
            const auto near_form = fourier_one_form(parse_one_form(param(st, "near", "0.1*dth1"), n()), n());
            const auto& sigma = L_->graph();
            // L_near = {r = σ + near}.
            const LagrangianSubbundle near(model_, linear_combination(1.0, sigma, 1.0, near_form));
            const auto sec = subbundle_to_form(chart(st), near, 6);
            alpha = sec.alpha;
            roundtrip = sec.roundtrip;
        }
        if (param(st, "backend", "field") == "cochain") {
            const int g = integer(st, "grid", 32);
            alpha = sample_cochain(alpha, std::make_shared<const FibreComplex>(std::vector<int>(static_cast<std::size_t>(n()), g)));
        }
        const auto v = is_lagrangian(alpha, tol);
        out["residuals"] = {{"defect", v.defect}, {"chart_roundtrip", roundtrip}};
        out["verdicts"] = {{"lagrangian", v.lagrangian}, {"expected", expect}};
        return v.lagrangian == (expect == "lagrangian") && roundtrip <= 1e-6;
    }

    std::vector<Vec> probe_cochains(std::size_t count, Eigen::Index size)
    {
        ProbeSequence probes(1, opt_.seed);
        std::vector<Vec> out;
        for (std::size_t c = 0; c < count; ++c) {
            Vec v(size);
            for (Eigen::Index i = 0; i < size; ++i) v[i] = 2.0 * probes.next()[0] - 1.0;
            out.push_back(std::move(v));
        }
        return out;
    }

    bool step_hodge(const StepSpec& st, Json& out)
    {
        const int k = integer(st, "degree", 1);
        const int g = integer(st, "grid", 32);
        const int dim = model_->omega_cochain() ? model_->fibre_dim() : n();
        if (k < 0 || k >= dim) throw ParseError("hodge.degree must lie in [0, " + std::to_string(dim) + ")");
        auto cx = std::make_shared<const FibreComplex>(std::vector<int>(static_cast<std::size_t>(dim), g));
        const int patches = integer(st, "patches", 1);
        auto base = std::make_shared<const BaseGrid>(
            BaseGrid::uniform_circle(s_.params.base_samples, patches, patches > 1 ? 1 : 0));
        std::vector<std::vector<int>> shifts;
        if (integer(st, "twist", 0) != 0 && patches > 1) {
            shifts.assign(static_cast<std::size_t>(patches), std::vector<int>(static_cast<std::size_t>(dim), 0));
            shifts.back()[0] = g / 4;
        }
        const auto D = build_delta(base, cx, {k}, shifts);
        const auto count = static_cast<std::size_t>(integer(st, "count", 10));
        double dd = 0.0, idem = 0.0;
        std::vector<double> per(static_cast<std::size_t>(base->size()), 0.0);
        for (std::size_t c = 0; c < count; ++c) {
            const auto slices = probe_cochains(static_cast<std::size_t>(base->size()), static_cast<Eigen::Index>(cx->cell_count(k)));
            const auto a = FibredForm::cochain(base, cx, k, slices);
            const FibredForm da = fibred_d(a);
            const FibredForm back = fibred_d(apply_delta(D, da));
            for (int i = 0; i < base->size(); ++i) {
                const double r = sup_abs(back.slice(i) - da.slice(i)) / std::max(sup_abs(da.slice(i)), 1e-300);
                per[static_cast<std::size_t>(i)] = std::max(per[static_cast<std::size_t>(i)], r);
                dd = std::max(dd, r);
            }
            const auto split = project_closed(D, a);
            const auto again = project_closed(D, split.complement);
            idem = std::max(idem, cochain_sup(again.complement - split.complement) / std::max(cochain_sup(a), 1e-300));
        }
        out["degree"] = k;
        out["sup_residual_d_delta_d"] = dd;
        out["idempotence_residual"] = idem;
        Json ps = Json::array();
        for (std::size_t i = 0; i < per.size(); ++i) ps.push_back({{"base_index", i}, {"d_delta_d", per[i]}});
        out["per_sample"] = ps;
        out["residuals"] = {{"d_delta_d", dd}, {"idempotence", idem}};
        if (want_table("hodge")) {
            std::ofstream csv(out_path("hodge.csv"));
            csv << "base_index,d_delta_d\n";
            for (std::size_t i = 0; i < per.size(); ++i) csv << i << ',' << detail::format17(per[i]) << '\n';
        }
        const double tol = num(st, "tol", 1e-8);
        const bool ok = dd <= tol && idem <= tol;
        out["verdicts"] = {{"right_inverse", dd <= tol}, {"idempotent", idem <= tol}};
        return ok;
    }

    bool step_lagrangianize(const StepSpec& st, Json& out)
    {
        if (n() < 2) throw ParseError("lagrangianize needs a model with a 2-torus L (torus4)");
        const int g = integer(st, "grid", 64);
        auto cx = std::make_shared<const FibreComplex>(std::vector<int>(static_cast<std::size_t>(n()), g));
        const auto alpha = sample_cochain(
            FibredForm::field(model_->base(), fourier_one_form(parse_one_form(param(st, "alpha", "0"), n()), n())), cx);
        const auto D = build_delta(model_->base(), cx, {1});
        const FibredForm closed = lagrangianize(D, alpha);
        const auto v = is_lagrangian(closed, num(st, "tol", 1e-6));
        double err = 0.0;
        if (st.params.count("expected")) {
            const auto expected = sample_cochain(
                FibredForm::field(model_->base(), fourier_one_form(parse_one_form(st.params.at("expected"), n()), n())), cx);
            err = cochain_density_sup(closed - expected);
        }
        if (want_table("lagrangianize")) {
            std::ofstream f(out_path("lagrangianized.csv"));
            write_form_table(f, closed);
        }
        out["residuals"] = {{"closed_defect", v.defect}, {"expected_error", err}};
        const bool ok = v.lagrangian && err <= num(st, "tol", 1e-6);
        out["verdicts"] = {{"lagrangian", v.lagrangian}};
        return ok;
    }

    bool step_graph(const StepSpec& st, Json& out)
    {
        const double a = num(st, "amplitude", 0.5);
        const std::string expect = param(st, "expect", "subbundle");
        const FibrationMap pi(
            2, 1,
            [a](const Vec& x) { return Vec::Constant(1, x[0] + a * std::sin(x[0])); },
            [a](const Vec& x) {
                Mat j = Mat::Zero(1, 2);
                j(0, 0) = 1.0 + a * std::cos(x[0]);
                return j;
            });
        const auto g = graph_of(pi);
        out["residuals"] = {{"min_singular_value", g.submersion.min_singular},
                            {"failure_count", g.submersion.failures.size()}};
        if (!g.submersion.passed) out["first_failure"] = std::vector<double>(g.submersion.worst_point.data(),
                                                                             g.submersion.worst_point.data() + 2);
        out["verdicts"] = {{"subbundle", g.is_subbundle}, {"expected", expect}};
        return g.is_subbundle == (expect == "subbundle");
    }

    bool step_classify_fibration(const StepSpec& st, Json& out)
    {
        const auto coords = detail::split_list(param(st, "coords", "th1,th2"));
        const std::string expect = param(st, "expect", "lagrangian");
        if (coords.size() != 2) throw ParseError("classify-fibration.coords needs two coordinates");
        // M = T⁴ with x = (θ1, θ2, r1, r2) and ω = dθ1∧dr1 + dθ2∧dr2.
        auto axis = [](const std::string& c) {
            static const std::map<std::string, int> names = {{"th1", 0}, {"th2", 1}, {"r1", 2}, {"r2", 3}};
            const auto it = names.find(c);
            if (it == names.end()) throw ParseError("unknown coordinate '" + c + "'");
            return it->second;
        };
        const int i0 = axis(coords[0]);
        const int i1 = axis(coords[1]);
        Mat proj = Mat::Zero(2, 4);
        proj(0, i0) = 1.0;
        proj(1, i1) = 1.0;
        const FibrationMap pi(4, 2, [proj](const Vec& x) { return Vec(proj * x); }, [proj](const Vec&) { return proj; });
        Mat om = Mat::Zero(4, 4);
        om(0, 2) = om(1, 3) = 1.0;
        om(2, 0) = om(3, 1) = -1.0;
        auto omega = [om](const Vec&) { return om; };
        const auto fib = lagrangian_fibration_test(omega, pi, 4);
        const auto sub = classify_via_subbundle(omega, pi, Vec::Constant(4, 0.3));
        out["residuals"] = {{"fibre_defect", fib.defect}, {"graph_defect", sub.defect}};
        out["verdicts"] = {{"lagrangian_fibration", fib.lagrangian},
                           {"subbundle_classifier", sub.lagrangian},
                           {"agree", fib.lagrangian == sub.lagrangian},
                           {"expected", expect}};
        return fib.lagrangian == sub.lagrangian && fib.lagrangian == (expect == "lagrangian");
    }

    bool step_psi(const StepSpec& st, Json& out)
    {
        const double a = num(st, "amplitude", 0.1);
        const int nodes = integer(st, "nodes", 256);
        const std::string expect = param(st, "expect", "inside");
        const BiFibration bf{nodes};
        const auto alpha = bf.section_p1([a](double x) { return x + a * std::sin(x); });
        try {
            const auto fwd = psi_reparametrize(bf, alpha);
            const auto back = psi_inverse(bf, fwd.section);
            const double trip = section_distance(back.section, alpha);
            out["residuals"] = {{"roundtrip", trip},
                                {"p2_identity", fwd.identity_residual},
                                {"graph", fwd.graph_residual},
                                {"newton_iterations", fwd.max_iterations}};
            if (want_table("psi")) {
                std::ofstream csv(out_path("psi.csv"));
                csv << "node,x,alpha_y,psi_x\n";
                for (int i = 0; i < nodes; ++i)
                    csv << i << ',' << detail::format17(alpha.node(i)) << ',' << detail::format17(alpha.lift(alpha.node(i)))
                        << ',' << detail::format17(fwd.section.lift(fwd.section.node(i))) << '\n';
            }
            out["verdicts"] = {{"inside_V1", true}, {"expected", expect}};
            return expect == "inside" && trip <= num(st, "tol", 1e-6) && fwd.identity_residual <= 1e-8;
        } catch (const PsiError& e) {
            out["residuals"] = {{"failing_node", e.node()}};
            out["verdicts"] = {{"inside_V1", false}, {"expected", expect}};
            out["report"] = e.what();
            return expect == "outside";
        }
    }

    Scenario s_;
    RunOptions opt_;
    ModelPtr model_;
    std::shared_ptr<const LagrangianSubbundle> L_;
    std::optional<FibredForm> lambda_;
    std::optional<LiouvilleField> Y_;
    std::optional<WeinsteinChart> chart_;
};

inline RunResult run_scenario(const Scenario& s, const RunOptions& opt = {}) { return PipelineRunner(s, opt).run(); }

/// The report with wall-clock fields removed, for determinism comparisons.
inline Json strip_timings(Json j)
{
    if (j.is_object()) {
        j.erase("wall_time_ms");
        for (auto& [k, v] : j.items()) v = strip_timings(v);
    } else if (j.is_array()) {
        for (auto& v : j) v = strip_timings(v);
    }
    return j;
}

} // namespace weinfib
