// Acceptance gate for the library and CLI. Each numbered criterion prints a
// single PASS/FAIL line; the exit status is 0 only if every criterion holds.
#include "stmap/pipelines.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace stmap;
namespace fs = std::filesystem;

namespace {

const double kFourPiSq = 4.0 * std::numbers::pi * std::numbers::pi;

struct Criterion {
    bool pass = false;
    std::string detail;
};

struct EmittedOrbits {
    std::string name;
    std::vector<TwistMapPtr> maps;  // chain applied cyclically
    OrbitClass cls;
    std::vector<OrbitRecord> records;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double torus_gap(double v, double target) {
    const double d = std::fabs(v - target);
    return std::min(d, 1.0 - d);
}

OrbitClass cls_1d(int m, int d) {
    IVec mv(1);
    mv << m;
    return OrbitClass(mv, d);
}

/// Forward-step mismatch and d N-step deck-translation closure of a record
/// under the chain, both in the sup norm.
std::pair<double, double> orbit_closure(const EmittedOrbits& set, const OrbitRecord& rec) {
    const int dN = static_cast<int>(rec.points.size());
    const int N = static_cast<int>(set.maps.size());
    double step_err = 0.0;
    PhasePoint z = rec.points.front();
    for (int k = 0; k < dN; ++k) {
        z = set.maps[k % N]->forward(z);
        if (k + 1 < dN)
            step_err = std::max(step_err,
                                (z.flat() - rec.points[k + 1].flat()).lpNorm<Eigen::Infinity>());
    }
    Vec target = rec.points.front().flat();
    for (int i = 0; i < set.cls.m.size(); ++i) target[i] += set.cls.m[i];
    const double closure = (z.flat() - target).lpNorm<Eigen::Infinity>();
    return {step_err, closure};
}

Criterion criterion_standard_count(EmittedOrbits& out) {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    auto S = classical_standard_genfun(0.8);
    const ActionEvaluator W({S}, cls_1d(0, 1));
    const auto records = find_critical_points(W);
    const double elapsed = seconds_since(t0);

    out = {"standard s=0.8", {std::make_shared<TwistMap>(S)}, cls_1d(0, 1), records};

    std::ostringstream os;
    bool ok = records.size() == 2;
    if (!ok) os << "found " << records.size() << " orbits instead of 2";
    if (ok) {
        const auto& lo = records[0];
        const auto& hi = records[1];
        ok = lo.spectrum.morse_index && *lo.spectrum.morse_index == 0 &&
             torus_gap(lo.canonical.v[0], 0.5) < 1e-7 && hi.spectrum.morse_index &&
             *hi.spectrum.morse_index == 1 && torus_gap(hi.canonical.v[0], 0.0) < 1e-7;
        if (!ok) os << "positions or Morse indices off";
    }
    if (ok) {
        const double a = 0.8 / kFourPiSq;
        ok = std::fabs(records[0].action + a) < 1e-10 && std::fabs(records[1].action - a) < 1e-10 &&
             records[0].residual < 1e-10 && records[1].residual < 1e-10;
        if (!ok) os << "actions or residuals above 1e-10";
    }
    if (ok && elapsed >= 1.0) {
        ok = false;
        os << "took " << elapsed << " s";
    }
    if (ok) {
        os.setf(std::ios::fixed);
        os.precision(3);
        os << "2 orbits at q=1/2 (index 0) and q=0 (index 1), residual<1e-10, " << elapsed << " s";
    }
    c.pass = ok;
    c.detail = os.str();
    return c;
}

Criterion criterion_froeschle_count(EmittedOrbits& out) {
    Criterion c;
    const auto t0 = std::chrono::steady_clock::now();
    auto S = froeschle_genfun(0.1, 0.1, 0.05);
    IVec m(2);
    m << 1, 0;
    const OrbitClass cls(m, 1);
    const ActionEvaluator W({S}, cls);
    const auto records = find_critical_points(W);
    const double elapsed = seconds_since(t0);

    out = {"froeschle", {std::make_shared<TwistMap>(S)}, cls, records};
    const OrbitCountReport count = count_report(records, 2);

    std::ostringstream os;
    bool ok = count.found >= 3;
    if (!ok) os << "found " << count.found << " < 3";
    if (ok && count.all_nondegenerate && count.found != 4) {
        ok = false;
        os << "nondegenerate audit passed but found " << count.found << " != 4";
    }
    if (ok && count.found != 4) {
        ok = false;
        os << "expected the 4 critical points of the coupled potential, found " << count.found;
    }
    if (ok) {
        double worst = 0.0;
        for (const auto& rec : records) {
            const auto [step_err, closure] = orbit_closure(out, rec);
            worst = std::max({worst, step_err, closure});
        }
        if (worst >= 1e-8) {
            ok = false;
            os << "map verification error " << worst;
        }
    }
    if (ok && elapsed >= 30.0) {
        ok = false;
        os << "took " << elapsed << " s";
    }
    if (ok) {
        os.setf(std::ios::fixed);
        os.precision(3);
        os << "4 orbits (degenerate minimum flagged), map-verified <1e-8, " << elapsed << " s";
    }
    c.pass = ok;
    c.detail = os.str();
    return c;
}

Criterion criterion_orbit_closure(const std::vector<const EmittedOrbits*>& sets) {
    Criterion c;
    double worst_step = 0.0, worst_closure = 0.0;
    int orbits = 0;
    for (const EmittedOrbits* set : sets)
        for (const auto& rec : set->records) {
            const auto [step_err, closure] = orbit_closure(*set, rec);
            worst_step = std::max(worst_step, step_err);
            worst_closure = std::max(worst_closure, closure);
            ++orbits;
        }
    std::ostringstream os;
    c.pass = orbits > 0 && worst_step < 1e-8 && worst_closure < 1e-8;
    os << orbits << " orbits, forward-step mismatch " << worst_step << ", deck closure "
       << worst_closure;
    c.detail = os.str();
    return c;
}

Criterion criterion_gradient_consistency() {
    Criterion c;
    Mat A(2, 2);
    A << 2, 1, 1, 3;
    struct Case {
        GenFunPtr S;
        OrbitClass cls;
    };
    IVec m10(2), m11(2);
    m10 << 1, 0;
    m11 << 1, 1;
    const std::vector<Case> cases = {{integrable_genfun(A), OrbitClass(m10, 2)},
                                     {classical_standard_genfun(0.8), cls_1d(1, 3)},
                                     {froeschle_genfun(0.1, 0.1, 0.05), OrbitClass(m11, 2)}};
    double worst_grad = 0.0, worst_sym = 0.0;
    UniformSampler rng(71);
    for (const auto& cs : cases) {
        const ActionEvaluator W({cs.S}, cs.cls);
        const int dim = W.points() * W.dim();
        for (int trial = 0; trial < 100; ++trial) {
            Vec x(dim);
            for (int j = 0; j < dim; ++j) x[j] = rng.next(-0.4, 1.4);
            const Configuration cfg = W.configuration(x);
            const Vec g = W.gradient(cfg);
            const Mat H = W.hessian(cfg);
            worst_sym = std::max(worst_sym, (H - H.transpose()).lpNorm<Eigen::Infinity>());
            const double h = 1e-6;
            for (int j = 0; j < dim; ++j) {
                Vec xp = x, xm = x;
                xp[j] += h;
                xm[j] -= h;
                const double fd =
                    (W.value(W.configuration(xp)) - W.value(W.configuration(xm))) / (2 * h);
                worst_grad = std::max(worst_grad,
                                      std::fabs(g[j] - fd) / std::max(1.0, std::fabs(fd)));
            }
        }
    }

    bool minima_ok = true;
    for (const auto& cs : cases) {
        const ActionEvaluator W({cs.S}, cs.cls);
        const OrbitRecord rec = minimize_action(W);
        if (rec.spectrum.morse_index && *rec.spectrum.morse_index != 0) minima_ok = false;
    }

    std::ostringstream os;
    c.pass = worst_grad < 1e-6 && worst_sym < 1e-10 && minima_ok;
    os << "grad vs FD rel " << worst_grad << ", Hessian asymmetry " << worst_sym
       << (minima_ok ? ", minimizers have index 0 or degenerate" : ", a minimizer has index > 0");
    c.detail = os.str();
    return c;
}

Criterion criterion_lower_bound() {
    Criterion c;
    Mat A(2, 2);
    A << 2, 1, 1, 3;
    const std::vector<GenFunPtr> families = {integrable_genfun(A), classical_standard_genfun(0.8),
                                             froeschle_genfun(0.1, 0.1, 0.05)};
    double worst_margin = 1e300;
    bool gamma_ok = true;
    long samples = 0;
    for (const auto& S : families) {
        ConvexitySampling cs;
        cs.random_samples = 10000;
        const TwistConstants tc = certify_convexity(*S, cs);
        const LowerBoundCert lb = lower_bound_cert(*S, tc, cs);
        worst_margin = std::min(worst_margin, lb.worst_margin);
        gamma_ok = gamma_ok && lb.gamma == tc.a / 2.0;
        samples += lb.sample_count;
    }
    std::ostringstream os;
    c.pass = worst_margin >= 0.0 && gamma_ok && samples >= 30000;
    os << samples << " samples across 3 families, worst margin " << worst_margin
       << ", gamma = a/2";
    c.detail = os.str();
    return c;
}

Criterion criterion_pendulum_pipeline(EmittedOrbits& out) {
    Criterion c;
    std::ostringstream os;
    const auto t0 = std::chrono::steady_clock::now();
    auto H = pendulum_hamiltonian(-1.0 / kFourPiSq);
    const OpticalBounds bounds = estimate_optical_bounds(*H, 2.0);

    DecompositionPlan plan;
    try {
        plan = decompose(H, bounds);
    } catch (const Error& e) {
        c.detail = std::string("decomposition failed: ") + e.what();
        return c;
    }

    double comp_err = 0.0;
    UniformSampler rng(83);
    const MapChain chain = plan.chain();
    for (int s = 0; s < 50; ++s) {
        PhasePoint z(rng.vector(1, 0.0, 1.0), rng.vector(1, -1.0, 1.0));
        const PhasePoint via_chain = chain.forward(z);
        const PhasePoint direct = flow(*H, z, 0.0, 1.0, 2 * 64 * plan.N);
        comp_err = std::max(comp_err,
                            (via_chain.flat() - direct.flat()).lpNorm<Eigen::Infinity>());
    }

    const OrbitClass cls = cls_1d(0, 1);
    SearchBudget budget;
    budget.grid_per_axis = 2;
    budget.random_starts = 40;
    const ActionEvaluator W(plan.genfuns(), cls);
    const auto records = find_critical_points(W, budget);

    std::vector<TwistMapPtr> maps(plan.steps.begin(), plan.steps.end());
    out = {"pendulum chain", maps, cls, records};

    const double a = 1.0 / kFourPiSq;
    bool elliptic = false, hyperbolic = false;
    double md_err = 0.0;
    for (const auto& rec : records) {
        md_err = std::max(md_err, verify_md_point(*H, rec.points.front(), cls));
        if (rec.spectrum.morse_index && *rec.spectrum.morse_index == 0 &&
            std::fabs(rec.action + a) < 1e-8 && torus_gap(rec.canonical.v[0], 0.5) < 1e-6)
            elliptic = true;
        if (rec.spectrum.morse_index && *rec.spectrum.morse_index == 1 &&
            std::fabs(rec.action - a) < 1e-8 && torus_gap(rec.canonical.v[0], 0.0) < 1e-6)
            hyperbolic = true;
    }
    const double elapsed = seconds_since(t0);

    bool ok = true;
    if (plan.N != choose_N(bounds, 4.0)) {
        ok = false;
        os << "stint count " << plan.N;
    } else if (comp_err >= 1e-8) {
        ok = false;
        os << "composition vs flow " << comp_err;
    } else if (!elliptic || !hyperbolic) {
        ok = false;
        os << "missing a fixed point (found " << records.size() << ")";
    } else if (md_err >= 1e-6) {
        ok = false;
        os << "verify_md_point " << md_err;
    } else if (elapsed >= 60.0) {
        ok = false;
        os << "took " << elapsed << " s";
    } else {
        os.setf(std::ios::fixed);
        os.precision(3);
        os << "N=" << plan.N << ", composition error " << std::scientific << comp_err
           << std::fixed << ", both fixed points recovered, " << elapsed << " s";
    }
    c.pass = ok;
    c.detail = os.str();
    return c;
}

Criterion criterion_flow_certificates() {
    Criterion c;
    auto H = pendulum_hamiltonian(-1.0 / kFourPiSq);
    const OpticalBounds bounds = estimate_optical_bounds(*H, 2.0);
    UniformSampler rng(91);
    double symp = 0.0, ratio = 0.0;
    bool window_ok = true, gronwall_ok = true;
    for (int s = 0; s < 20; ++s) {
        const PhasePoint z(rng.vector(1, 0.0, 1.0), rng.vector(1, -1.5, 1.5));
        symp = std::max(symp, check_symplectic(tangent_flow(*H, z, 0.0, 1.0, 256).final_frame()));
        try {
            ratio = std::max(ratio, gronwall_check(*H, z, 0.0, 1.0, bounds.K, 128).max_ratio);
        } catch (const BoundViolation&) {
            gronwall_ok = false;
        }
        const TwistBlockReport tb = twist_block(*H, z, 0.1, bounds);
        window_ok = window_ok && tb.admissible && tb.eig_min >= tb.bound_lo &&
                    tb.eig_max <= tb.bound_hi;
    }
    std::ostringstream os;
    c.pass = symp < 1e-8 && gronwall_ok && window_ok;
    os << "symplecticity " << symp << ", growth ratio " << ratio
     << (window_ok ? ", twist blocks inside the optical window" : ", twist block out of window");
    c.detail = os.str();
    return c;
}

Criterion criterion_free_stint() {
    Criterion c;
    auto H = free_hamiltonian(1);
    const ShortTimeGenFun S(H, 0.0, 0.25);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            const double q = i / 9.0;
            const double Q = -1.0 + 2.0 * j / 9.0;
            const double closed = (Q - q) * (Q - q) / 0.5;
            worst = std::max(worst, std::fabs(S.eval(Vec::Constant(1, q), Vec::Constant(1, Q)) -
                                              closed));
        }
    std::ostringstream os;
    c.pass = worst < 1e-8;
    os << "max |shooting - closed form| = " << worst << " on a 10x10 grid";
    c.detail = os.str();
    return c;
}

Criterion criterion_suspension() {
    Criterion c;
    std::ostringstream os;

    const Suspension shear(integrable_genfun(Mat::Identity(1, 1)), 1.0);
    double integrable_err = 0.0;
    for (double p : {-0.4, 0.2, 0.7}) {
        PhasePoint z(Vec::Constant(1, 0.3), Vec::Constant(1, p));
        integrable_err = std::max(integrable_err, suspension_roundtrip_error(shear, z, 1000));
    }

    const Suspension kicked(classical_standard_genfun(0.5), 1.0);
    double standard_err = 0.0;
    for (double p : {-0.3, 0.3}) {
        PhasePoint z(Vec::Constant(1, 0.15), Vec::Constant(1, p));
        standard_err = std::max(standard_err, suspension_roundtrip_error(kicked, z, 1000));
    }

    SuspensionParams plain;
    plain.dt = 4e-3;
    plain.richardson = 0;
    SuspensionParams refined = plain;
    refined.richardson = 1;
    const PhasePoint z(Vec::Constant(1, 0.2), Vec::Constant(1, 0.3));
    const double e_plain = suspension_roundtrip_error(kicked, z, 400, plain);
    const double e_refined = suspension_roundtrip_error(kicked, z, 400, refined);

    c.pass = integrable_err < 1e-6 && standard_err < 1e-3 && e_refined <= 0.5 * e_plain;
    os << "integrable " << integrable_err << ", standard " << standard_err
       << ", Richardson refinement " << e_plain << " -> " << e_refined;
    c.detail = os.str();
    return c;
}

int run_cli(const std::string& cli, const fs::path& config, const fs::path& out) {
    const std::string cmd = "\"" + cli + "\" orbits --config \"" + config.string() +
                            "\" --out \"" + out.string() + "\" > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1 || !WIFEXITED(rc)) return -1;
    return WEXITSTATUS(rc);
}

std::string file_without_timestamp(const fs::path& p, bool& found) {
    std::ifstream in(p);
    if (!in) {
        found = false;
        return {};
    }
    found = true;
    std::ostringstream kept;
    std::string line;
    while (std::getline(in, line))
        if (line.find("\"timestamp\"") == std::string::npos) kept << line << '\n';
    return kept.str();
}

Criterion criterion_reproducibility(const std::string& cli) {
    Criterion c;
    std::ostringstream os;
    if (cli.empty()) {
        c.detail = "no --cli path given";
        return c;
    }
    const fs::path tmp =
        fs::temp_directory_path() / ("stmap-accept-" + std::to_string(::getpid()));
    std::error_code ec;
    fs::remove_all(tmp, ec);
    fs::create_directories(tmp);
    const fs::path cfg = tmp / "config.json";
    {
        std::ofstream out(cfg);
        out << R"({"system": {"family": "standard", "s": 0.8},)"
            << R"( "classes": [{"m": [0], "d": 1}], "seed": 99})" << "\n";
    }
    const int rc_a = run_cli(cli, cfg, tmp / "a");
    const int rc_b = run_cli(cli, cfg, tmp / "b");
    bool ok = rc_a == 0 && rc_b == 0;
    if (!ok) os << "exit codes " << rc_a << "/" << rc_b;
    if (ok) {
        bool fa = false, fb = false;
        const std::string ra = file_without_timestamp(tmp / "a" / "report.json", fa);
        const std::string rb = file_without_timestamp(tmp / "b" / "report.json", fb);
        ok = fa && fb && !ra.empty() && ra == rb;
        if (!ok) os << "reports differ beyond the timestamp";
        if (ok) {
            std::ifstream ca(tmp / "a" / "orbits_m0_d1.csv"), cb(tmp / "b" / "orbits_m0_d1.csv");
            std::stringstream sa, sb;
            sa << ca.rdbuf();
            sb << cb.rdbuf();
            ok = ca && cb && sa.str() == sb.str() && !sa.str().empty();
            if (!ok) os << "csv outputs differ or are missing";
        }
    }
    if (ok) os << "two CLI runs byte-identical modulo timestamp";
    fs::remove_all(tmp, ec);
    c.pass = ok;
    c.detail = os.str();
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

    EmittedOrbits standard_set, froeschle_set, pendulum_set;
    Criterion results[10];
    results[0] = criterion_standard_count(standard_set);
    results[1] = criterion_froeschle_count(froeschle_set);
    results[3] = criterion_gradient_consistency();
    results[4] = criterion_lower_bound();
    results[5] = criterion_pendulum_pipeline(pendulum_set);
    results[2] = criterion_orbit_closure({&standard_set, &froeschle_set, &pendulum_set});
    results[6] = criterion_flow_certificates();
    results[7] = criterion_free_stint();
    results[8] = criterion_suspension();
    results[9] = criterion_reproducibility(cli);

    const char* names[10] = {
        "standard map s=0.8 class (0,1) orbit count and Morse data",
        "Froeschle K=0.1, lambda=0.05 class ((1,0),1) orbit census",
        "critical configurations close up under the maps",
        "action gradient/Hessian consistency and minimizer indices",
        "coercivity certificate S >= alpha - beta|Q-q| + gamma|Q-q|^2",
        "pendulum decomposition, composition check and fixed points",
        "tangent flow symplecticity, growth bound and twist window",
        "free Hamiltonian stint action vs closed form",
        "suspension round trips and Richardson refinement",
        "byte-identical CLI reports modulo timestamp",
    };

    bool all = true;
    for (int k = 0; k < 10; ++k) {
        all = all && results[k].pass;
        std::printf("%s criterion %d: %s [%s]\n", results[k].pass ? "PASS" : "FAIL", k + 1,
                    names[k], results[k].detail.c_str());
    }
    return all ? 0 : 1;
}
