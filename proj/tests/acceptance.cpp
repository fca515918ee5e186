// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "weinfib/weinfib.hpp"
#include "weinfib/scenario.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <sys/wait.h>

using namespace weinfib;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Line {
    bool ok = true;
    std::ostringstream detail;

    void check(bool cond, const std::string& what)
    {
        if (!cond) {
            ok = false;
            detail << " [violated: " << what << "]";
        }
    }
};

int failures = 0;

void report(int id, const std::string& name, const Line& l)
{
    std::cout << "AC" << id << ' ' << (l.ok ? "PASS" : "FAIL") << ' ' << name << ':' << l.detail.str() << std::endl;
    if (!l.ok) ++failures;
}

template <class F>
void criterion(int id, const std::string& name, F&& body)
{
    Line l;
    try {
        body(l);
    } catch (const std::exception& e) {
        l.ok = false;
        l.detail << " [exception: " << e.what() << "]";
    }
    report(id, name, l);
}

FibreComplexPtr torus(int n, int per_axis)
{
    return std::make_shared<const FibreComplex>(std::vector<int>(static_cast<std::size_t>(n), per_axis));
}

Vec random_vec(std::mt19937_64& rng, Eigen::Index size)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec v(size);
    for (auto& x : v) x = u(rng);
    return v;
}

FibredForm random_cochain(std::mt19937_64& rng, const BaseGridPtr& base, const FibreComplexPtr& cx, int k)
{
    std::vector<Vec> s;
    for (int i = 0; i < base->size(); ++i) s.push_back(random_vec(rng, static_cast<Eigen::Index>(cx->cell_count(k))));
    return FibredForm::cochain(base, cx, k, std::move(s));
}

FibredForm field(const ModelPtr& m, int degree, FieldEval f)
{
    return FibredForm::field(m->base(), FieldForm(degree, m->fibre_dim(), std::move(f), {}, FiniteDifference{}, m->ranges()));
}

FibredForm torus_one_form(BaseGridPtr base, FieldEval f, FieldJac j = {})
{
    return FibredForm::field(std::move(base), FieldForm(1, 2, std::move(f), std::move(j)));
}

// 1. d_p∘d_p = 0 bit-exact.
void exactness(Line& l)
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> coin(-1000, 1000);
    const auto base = std::make_shared<const BaseGrid>(BaseGrid::uniform_circle(16));
    // (fibre dim, per-axis resolution, degree) with d∘d defined.
    struct Case {
        int n, m, k;
    };
    const std::vector<Case> cases = {{2, 64, 0}, {3, 16, 0}, {3, 16, 1}, {4, 8, 0}, {4, 8, 1}, {4, 8, 2}};
    int inputs = 0;
    double worst = 0.0;
    for (; inputs < 200; ++inputs) {
        const Case c = cases[static_cast<std::size_t>(inputs) % cases.size()];
        const auto cx = torus(c.n, c.m);
        std::vector<Vec> s;
        for (int i = 0; i < base->size(); ++i) {
            Vec v(static_cast<Eigen::Index>(cx->cell_count(c.k)));
            for (auto& x : v) x = coin(rng);
            s.push_back(v);
        }
        const auto a = FibredForm::cochain(base, cx, c.k, std::move(s));
        worst = std::max(worst, cochain_sup(fibred_d(fibred_d(a))));
    }
    const double t = seconds_since(t0);
    l.detail << " inputs=" << inputs << " grids=64^2,16^3,8^4 degrees=0..n-2 base=16 sup|dd|=" << worst << " time=" << t << "s";
    l.check(worst == 0.0, "dd == 0 bit-exact");
    l.check(t < 10.0, "runtime < 10 s");
}

// 2. Hodge right inverse, idempotence, kernel.
void hodge(Line& l)
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2);
    const auto base = std::make_shared<const BaseGrid>(BaseGrid::uniform_circle(16, 2, 1));
    const auto cx = torus(2, 64);
    const auto D = build_delta(base, cx, {0, 1}, {{0, 0}, {5, -3}});
    double inv = 0.0;
    double idem = 0.0;
    double kernel = 0.0;
    for (int k = 0; k < 2; ++k)
        for (int rep = 0; rep < 100; ++rep) {
            const auto a = random_cochain(rng, base, cx, k);
            const auto da = fibred_d(a);
            const auto pa = apply_delta(D, da);
            inv = std::max(inv, cochain_sup(fibred_d(pa) - da) / cochain_sup(da));
            const auto ppa = apply_delta(D, fibred_d(pa));
            idem = std::max(idem, cochain_sup(ppa - pa) / cochain_sup(pa));
            // Closed: exact part plus a harmonic constant on every cell type.
            FibredForm closed = FibredForm::zero_cochain(base, cx, k);
            if (k == 0) {
                std::vector<Vec> s;
                for (int i = 0; i < base->size(); ++i)
                    s.push_back(Vec::Constant(static_cast<Eigen::Index>(cx->cell_count(0)), random_vec(rng, 1)[0]));
                closed = FibredForm::cochain(base, cx, 0, s);
            } else {
                const auto g = random_cochain(rng, base, cx, 0);
                std::vector<Vec> s;
                const auto v = static_cast<Eigen::Index>(cx->vertex_count());
                for (int i = 0; i < base->size(); ++i) {
                    Vec h(2 * v);
                    const Vec c = random_vec(rng, 2);
                    h << Vec::Constant(v, c[0]), Vec::Constant(v, c[1]);
                    s.push_back(h);
                }
                closed = fibred_d(g) + FibredForm::cochain(base, cx, 1, s);
            }
            kernel = std::max(kernel, cochain_sup(apply_delta(D, fibred_d(closed))) / cochain_sup(closed));
        }
    const double t = seconds_since(t0);
    l.detail << " grid=64^2x16 patches=2 ||ddd-d||/||d||=" << inv << " idempotence=" << idem << " ||P closed||=" << kernel
             << " time=" << t << "s";
    l.check(inv <= 1e-8, "right inverse <= 1e-8");
    l.check(idem <= 1e-8, "idempotence <= 1e-8");
    l.check(kernel <= 1e-8, "kernel <= 1e-8");
    l.check(t < 60.0, "runtime < 60 s");
}

// 3. Fibred Poincaré lemma.
void poincare(Line& l)
{
    double identity = 0.0;
    double on_L = 0.0;
    const std::vector<ModelPtr> models = {make_cylinder(), make_cylinder(ModelParams{.c_amplitude = 0.5}),
                                          make_torus2(ModelParams{.fibre_resolution = 8}),
                                          make_torus4(ModelParams{.c_amplitude = 0.3, .fibre_resolution = 4})};
    for (const auto& m : models) {
        const int dim = m->fibre_dim();
        const auto pts = m->probe_points(dim == 4 ? 3 : 6);
        const auto generic1 = field(m, 1, [dim](double b, const Vec& x) {
            Vec v(dim);
            for (int i = 0; i < dim; ++i) v[i] = std::sin(x[i] + b) * std::cos(x[(i + 1) % dim]) + 0.1 * x[(i + dim / 2) % dim];
            return v;
        });
        const auto generic2 = field(m, 2, [dim](double b, const Vec& x) {
            Vec v(dim * (dim - 1) / 2);
            for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::cos(x[i % dim] - b) * std::exp(0.2 * x[dim - 1]) + 0.01 * i;
            return v;
        });
        for (double tilt : {0.0, 0.2}) {
            const auto L = LagrangianSubbundle::tilted(m, tilt);
            const auto rho = linear_retraction(L);
            for (const auto* beta : {&m->omega(), &generic1, &generic2})
                identity = std::max(identity, homotopy_identity_residual(*beta, rho, pts));
            on_L = std::max(on_L, homotopy_on_L(m->omega(), rho, L, grid_points(m->half_dim(), 8)));
        }
    }
    const auto cyl = make_cylinder();
    const auto L0 = LagrangianSubbundle::zero(cyl);
    const auto lam = liouville_from_symplectic(*cyl, L0, linear_retraction(L0));
    const auto pts = cyl->probe_points(8);
    double match = 0.0;
    for (int i = 0; i < cyl->base()->size(); ++i)
        for (const auto& x : pts)
            match = std::max(match, sup_abs(lam.field_data()(cyl->base()->sample(i), x) - Vec(Vec::Unit(2, 0) * -x[1])));
    const double dlam = field_sup(fibred_d(lam) - cyl->omega(), pts);
    l.detail << " nodes=12 identity=" << identity << " P(omega)|L=" << on_L << " |lambda+r dth|=" << match
             << " |d lambda-omega|=" << dlam;
    l.check(identity <= 1e-6, "homotopy identity <= 1e-6");
    l.check(on_L <= 1e-10, "P beta on L <= 1e-10");
    l.check(match <= 1e-10, "cylinder lambda = -r dth within 1e-10");
    l.check(dlam <= 1e-6, "d lambda = omega within 1e-6");
}

// 4. Polarisation.
void polarisation(Line& l)
{
    double solve = 0.0;
    double eig = 0.0;
    double iso = 0.0;
    double conformal = 0.0;
    int lpoints = 0;
    const std::vector<ModelPtr> models = {make_cylinder(), make_cylinder(ModelParams{.c_amplitude = 0.5}),
                                          make_torus4(ModelParams{.c_amplitude = 0.3, .fibre_resolution = 4})};
    for (const auto& m : models) {
        const auto L = LagrangianSubbundle::tilted(m, 0.2);
        const auto f = liouville_field(m, liouville_from_symplectic(*m, L, linear_retraction(L)));
        solve = std::max(solve, liouville_residual(f, m->probe_points(m->half_dim() == 2 ? 3 : 6)));
        const int n = m->half_dim();
        const auto thetas = grid_points(n, n == 1 ? 8 : 3);
        const auto& base = *m->base();
        int count = 0;
        for (int i = 0; i < base.size() && count < 64; ++i)
            for (const auto& th : thetas) {
                if (count == 64) break;
                const auto s = jacobian_split(f, L, base.sample(i), L.point(base.sample(i), th));
                eig = std::max(eig, s.cluster_distance);
                iso = std::max(iso, s.e1_isotropy);
                ++count;
            }
        lpoints = std::max(lpoints, count);
        const auto pts = n == 1 ? m->probe_points(4) : std::vector<Vec>{m->probe_points(2)[5], m->probe_points(2)[10]};
        for (double b : {0.0, 2.0}) conformal = std::max(conformal, conformal_check(f, L, b, pts, 1.0, 1e-3).sup_residual);
    }
    l.detail << " L-points=" << lpoints << " solve=" << solve << " eigen={0,1} distance=" << eig << " E1 isotropy=" << iso
             << " conformal(t<=1,h=1e-3)=" << conformal;
    l.check(lpoints == 64, "64 L-points per model");
    l.check(solve <= 1e-9, "solve residual <= 1e-9");
    l.check(eig <= 1e-6, "eigenvalues within 1e-6 of {0,1}");
    l.check(iso <= 1e-8, "E1 isotropy <= 1e-8");
    l.check(conformal <= 1e-4, "conformal residual <= 1e-4");
}

// 5. Weinstein chart.
void weinstein(Line& l)
{
    double zero = 0.0;
    double symp = 0.0;
    double oracle = 0.0;
    double leaf = 0.0;
    const auto cyl = make_cylinder();
    const auto bdep = make_cylinder(ModelParams{.c_amplitude = 0.5});
    const auto t4 = make_torus4(ModelParams{.fibre_resolution = 4});
    for (const auto& m : {cyl, bdep, t4}) {
        const auto chart = chart_for(m, LagrangianSubbundle::zero(m));
        for (int s = 0; s < m->base()->size(); ++s) {
            const auto d = verify_symplectic(chart, s, 100, 20240611);
            zero = std::max(zero, d.zero_section);
            symp = std::max(symp, d.sup_defect);
        }
        if (m == bdep)
            for (int s = 0; s < m->base()->size(); ++s) {
                const double b = m->base()->sample(s);
                for (const auto& qa : grid_points(2, 9, {AxisRange{}, AxisRange{false, -chart.radius(), chart.radius()}})) {
                    Vec expect(2);
                    expect << qa[0], qa[1] / m->c(b);
                    const Vec y = chart.forward(b, qa.head(1), qa.tail(1));
                    oracle = std::max(oracle, sup_abs(y - expect));
                    leaf = std::max(leaf, std::abs(y[0] - qa[0]));
                }
            }
    }
    l.detail << " probes/sample=100 zero-section=" << zero << " symplectic defect=" << symp
             << " |phi-(th,p/c(b))|=" << oracle << " leaf drift=" << leaf << " (base point fixed by construction)";
    l.check(zero <= 1e-9, "zero section on L <= 1e-9");
    l.check(symp <= 1e-5, "symplectic defect <= 1e-5");
    l.check(oracle <= 1e-9, "b-dependent chart matches (th, p/c(b))");
    l.check(leaf == 0.0, "chart preserves leaves exactly");
}

// 6. Lagrangian classifier.
void classifier(Line& l)
{
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> amp(0.1, 1.0);
    std::uniform_int_distribution<int> mode(1, 3);
    const auto base = std::make_shared<const BaseGrid>(BaseGrid::single(0.0));
    int errors = 0;
    int cases = 0;
    for (int c = 0; c < 25; ++c) {
        FibredForm a = FibredForm::field(base, FieldForm::zero(1, 2));
        const double c0 = amp(rng) - 0.5;
        const double c1 = amp(rng) - 0.5;
        if (c % 2 == 0) {
            a = torus_one_form(base, [c0, c1](double, const Vec&) { return Vec((Vec(2) << c0, c1).finished()); },
                               [](double, const Vec&) { return Mat(Mat::Zero(2, 2)); });
        } else {
            // dg with g = A sin(k θ1 + j θ2).
            const double A = amp(rng);
            const int k = mode(rng);
            const int j = mode(rng);
            a = torus_one_form(base, [A, k, j, c0](double, const Vec& t) {
                const double cs = A * std::cos(k * t[0] + j * t[1]);
                return Vec((Vec(2) << c0 + k * cs, j * cs).finished());
            });
        }
        errors += is_lagrangian(a).lagrangian ? 0 : 1;
        ++cases;
    }
    for (int c = 0; c < 25; ++c) {
        const double A = amp(rng);
        const int k = mode(rng);
        const int slot = c % 2;
        const bool use_sin = c % 3 != 0;
        // A trig(k θ_other) dθ_slot: d of it is ±A k trig'(...) dθ1∧dθ2.
        const auto a = torus_one_form(base, [A, k, slot, use_sin](double, const Vec& t) {
            const double arg = k * t[1 - slot];
            Vec v = Vec::Zero(2);
            v[slot] = A * (use_sin ? std::sin(arg) : std::cos(arg));
            return v;
        });
        errors += is_lagrangian(a).lagrangian ? 1 : 0;
        ++cases;
    }
    const auto sin_form = [&](const BaseGridPtr& b) {
        return torus_one_form(b, [](double, const Vec& t) { return Vec(Vec::Unit(2, 0) * std::sin(t[1])); });
    };
    const double field_defect = is_lagrangian(sin_form(base)).defect;
    std::vector<double> err;
    for (int n : {16, 32, 64})
        err.push_back(std::abs(is_lagrangian(sample_cochain(sin_form(base), torus(2, n))).defect - 1.0));
    const double r1 = std::log2(err[0] / err[1]);
    const double r2 = std::log2(err[1] / err[2]);
    l.detail << " cases=" << cases << " errors=" << errors << " field defect(sin th2 dth1)=" << field_defect
             << " cochain errors 16/32/64=" << err[0] << '/' << err[1] << '/' << err[2] << " rates=" << r1 << ',' << r2;
    l.check(cases == 50 && errors == 0, "50 cases, zero errors");
    l.check(std::abs(field_defect - 1.0) <= 1e-4, "field defect 1.0 +- 1e-4");
    l.check(std::abs(r1 - 2.0) <= 0.2 && std::abs(r2 - 2.0) <= 0.2, "cochain O(N^-2)");
}

// 7. Lagrangianize.
void lagrangianize_check(Line& l)
{
    const auto base = std::make_shared<const BaseGrid>(BaseGrid::uniform_circle(4));
    const auto cx = torus(2, 64);
    const auto target = sample_cochain(torus_one_form(base, [](double, const Vec&) { return Vec(Vec::Unit(2, 0) * 0.3); }), cx);
    const auto alpha = sample_cochain(
        torus_one_form(base, [](double, const Vec& t) { return Vec(Vec::Unit(2, 0) * (0.3 + std::sin(t[1]))); }), cx);
    const auto fixed = lagrangianize(build_delta(base, cx, {1}), alpha);
    const double err = cochain_density_sup(fixed - target);
    const auto verdict = is_lagrangian(fixed);
    l.detail << " grid=64^2 |result-0.3 dth1|=" << err << " classifier defect=" << verdict.defect;
    l.check(err <= 1e-6, "recovers 0.3 dth1 within 1e-6");
    l.check(verdict.lagrangian, "result classified Lagrangian");
}

// 8. Fibration space.
void fibrations(Line& l)
{
    const BiFibration bf{256};
    const auto a = bf.section_p1([](double x) { return x + 0.1 * std::sin(x); });
    const auto psi = psi_reparametrize(bf, a);
    const double roundtrip = section_distance(psi_inverse(bf, psi.section).section, a);

    auto circle_map = [](double eps) {
        return FibrationMap(2, 1, [eps](const Vec& x) { return Vec(Vec::Constant(1, x[0] + eps * std::sin(x[0]))); });
    };
    const bool s0 = submersion_test(circle_map(0.0)).passed;
    const bool s1 = submersion_test(circle_map(0.5)).passed;
    const bool s2 = submersion_test(circle_map(1.0)).passed;

    auto omega = [](const Vec&) {
        Mat om = Mat::Zero(4, 4);
        om.topRightCorner(2, 2).setIdentity();
        om.bottomLeftCorner(2, 2) = -Mat::Identity(2, 2);
        return om;
    };
    struct Row {
        int a, b;
        bool expect;
    };
    int mismatches = 0;
    int disagreements = 0;
    Vec m0(4);
    m0 << 0.4, 1.3, -0.2, 2.2;
    for (const Row& r : {Row{0, 1, true}, Row{0, 3, true}, Row{0, 2, false}}) {
        const FibrationMap pi(4, 2, [r](const Vec& x) { return Vec((Vec(2) << x[r.a], x[r.b]).finished()); });
        const bool direct = lagrangian_fibration_test(omega, pi).lagrangian;
        const bool via = classify_via_subbundle(omega, pi, m0).lagrangian;
        mismatches += direct != r.expect;
        disagreements += direct != via;
    }
    l.detail << " psi roundtrip(256 nodes, amp 0.1)=" << roundtrip << " submersion(th, th+0.5sin, th+sin)=" << s0 << s1 << s2
             << " T4 table mismatches=" << mismatches << " classifier disagreements=" << disagreements;
    l.check(roundtrip <= 1e-6, "psi roundtrip <= 1e-6");
    l.check(s0 && s1 && !s2, "submersion verdicts pass, pass, fail");
    l.check(mismatches == 0, "T4 verdict table");
    l.check(disagreements == 0, "agreement with subbundle classifier");
}

// 9. CLI end to end.
void cli(Line& l)
{
    const fs::path root = fs::temp_directory_path() / "weinfib_acceptance";
    fs::remove_all(root);
    std::vector<nlohmann::ordered_json> reps;
    double worst = 0.0;
    bool exits_ok = true;
    for (const char* run : {"a", "b"}) {
        const fs::path out = root / run;
        const std::string cmd = std::string(WEINFIB_CLI_PATH) + " run --scenario " + WEINFIB_SCENARIO_DIR
                                + "/cylinder_end_to_end.scn --seed 7 --out " + out.string() + " >/dev/null 2>&1";
        const auto t0 = Clock::now();
        const int status = std::system(cmd.c_str());
        worst = std::max(worst, seconds_since(t0));
        exits_ok = exits_ok && WIFEXITED(status) && WEXITSTATUS(status) == 0;
        std::ifstream in(out / "report.json");
        reps.push_back(in ? nlohmann::ordered_json::parse(in) : nlohmann::ordered_json{});
    }
    const bool same = strip_timings(reps[0]) == strip_timings(reps[1]) && !reps[0].empty();
    fs::remove_all(root);
    l.detail << " cylinder_end_to_end exit codes 0=" << exits_ok << " slowest run=" << worst << "s reruns identical=" << same;
    l.check(exits_ok, "exit code 0");
    l.check(worst < 60.0, "runtime < 60 s");
    l.check(same, "seeded reruns identical");
}

} // namespace

int main()
{
    criterion(1, "exactness", exactness);
    criterion(2, "hodge right inverse", hodge);
    criterion(3, "fibred Poincare lemma", poincare);
    criterion(4, "polarisation", polarisation);
    criterion(5, "Weinstein chart", weinstein);
    criterion(6, "Lagrangian classifier", classifier);
    criterion(7, "lagrangianize", lagrangianize_check);
    criterion(8, "fibration space", fibrations);
    criterion(9, "CLI end to end", cli);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
