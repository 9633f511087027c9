#include "stmap/pipelines.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace stmap {

namespace {

constexpr double kFourPiSq = 39.478417604357434475337963999505;

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

const Json* find(const Json& j, const char* key) {
    if (!j.is_object()) return nullptr;
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return nullptr;
    return &*it;
}

double get_num(const Json& j, const char* key, double def) {
    const Json* v = find(j, key);
    if (!v) return def;
    if (!v->is_number()) throw UsageError(std::string("config: '") + key + "' must be a number");
    return v->get<double>();
}

int get_int(const Json& j, const char* key, int def) {
    const Json* v = find(j, key);
    if (!v) return def;
    if (!v->is_number_integer()) throw UsageError(std::string("config: '") + key + "' must be an integer");
    return v->get<int>();
}

std::uint64_t get_u64(const Json& j, const char* key, std::uint64_t def) {
    const Json* v = find(j, key);
    if (!v) return def;
    if (!v->is_number_integer()) throw UsageError(std::string("config: '") + key + "' must be an integer");
    return v->get<std::uint64_t>();
}

std::string get_str(const Json& j, const char* key, const std::string& def) {
    const Json* v = find(j, key);
    if (!v) return def;
    if (!v->is_string()) throw UsageError(std::string("config: '") + key + "' must be a string");
    return v->get<std::string>();
}

Mat parse_matrix(const Json& v, const char* key) {
    if (!v.is_array() || v.empty())
        throw UsageError(std::string("config: '") + key + "' must be an array of rows");
    const int rows = static_cast<int>(v.size());
    Mat A;
    for (int i = 0; i < rows; ++i) {
        const Json& row = v[i];
        if (!row.is_array() || (i == 0 ? false : static_cast<int>(row.size()) != A.cols()))
            throw UsageError(std::string("config: '") + key + "' rows must have equal length");
        if (i == 0) A.resize(rows, static_cast<int>(row.size()));
        for (int c = 0; c < A.cols(); ++c) A(i, c) = row[c].get<double>();
    }
    return A;
}

TrigPotential parse_potential(const Json& sys, int n) {
    const Json* pj = find(sys, "potential");
    if (!pj) return TrigPotential();
    if (!pj->is_array()) throw UsageError("config: 'potential' must be an array of terms");
    std::vector<TrigPotential::Term> terms;
    for (const Json& t : *pj) {
        const Json* coef = find(t, "coef");
        const Json* wave = find(t, "wave");
        if (!coef || !wave || !wave->is_array() || static_cast<int>(wave->size()) != n)
            throw UsageError("config: each potential term needs 'coef' and an n-entry 'wave'");
        IVec k(n);
        for (int i = 0; i < n; ++i) k[i] = (*wave)[i].get<int>();
        terms.push_back({coef->get<double>(), k});
    }
    return TrigPotential(n, std::move(terms));
}

std::string system_type(const Json& sys) {
    std::string type = get_str(sys, "type", "");
    if (!type.empty()) {
        if (type != "map" && type != "hamiltonian")
            throw UsageError("config: system.type must be 'map' or 'hamiltonian'");
        return type;
    }
    if (find(sys, "family")) return "map";
    if (find(sys, "catalog") || find(sys, "expression")) return "hamiltonian";
    throw UsageError("config: system needs 'family' (map) or 'catalog'/'expression' (hamiltonian)");
}

GenFunPtr build_map_genfun(const Json& sys) {
    const std::string family = get_str(sys, "family", "");
    if (family == "integrable") {
        if (const Json* A = find(sys, "A")) return integrable_genfun(parse_matrix(*A, "A"));
        const int n = get_int(sys, "n", 0);
        if (n < 1) throw UsageError("config: integrable family needs 'A' or 'n'");
        return integrable_genfun(Mat::Identity(n, n));
    }
    if (family == "standard") {
        if (find(sys, "s") && !find(sys, "potential") && !find(sys, "A"))
            return classical_standard_genfun(get_num(sys, "s", 0.0));
        Mat A;
        if (const Json* Aj = find(sys, "A")) {
            A = parse_matrix(*Aj, "A");
        } else {
            const int n = get_int(sys, "n", 0);
            if (n < 1) throw UsageError("config: standard family needs 'A' or 'n'");
            A = Mat::Identity(n, n);
        }
        return standard_genfun(A, parse_potential(sys, static_cast<int>(A.rows())));
    }
    if (family == "froeschle")
        return froeschle_genfun(get_num(sys, "K1", 0.0), get_num(sys, "K2", 0.0),
                                get_num(sys, "lambda", 0.0));
    throw UsageError("config: system.family must be 'integrable', 'standard' or 'froeschle'");
}

HamiltonianPtr build_hamiltonian(const Json& sys) {
    if (const Json* expr = find(sys, "expression")) {
        if (!expr->is_string()) throw UsageError("config: 'expression' must be a string");
        try {
            const hamlang::Ast ast = hamlang::parse(expr->get<std::string>());
            return expression_hamiltonian(ast, get_int(sys, "n", 0));
        } catch (const UsageError&) {
            throw;
        } catch (const Error& e) {
            throw UsageError(std::string("config: bad expression: ") + e.what());
        }
    }
    const std::string catalog = get_str(sys, "catalog", "");
    if (catalog == "free") {
        const int n = get_int(sys, "n", 1);
        return free_hamiltonian(n);
    }
    if (catalog == "pendulum") return pendulum_hamiltonian(get_num(sys, "c", -1.0 / kFourPiSq));
    throw UsageError("config: system.catalog must be 'free' or 'pendulum', or give 'expression'");
}

std::vector<OrbitClass> parse_classes(const Json& config, int n) {
    const Json* cj = find(config, "classes");
    if (!cj || !cj->is_array() || cj->empty())
        throw UsageError("config: 'classes' must be a non-empty array of {m, d}");
    std::vector<OrbitClass> out;
    for (const Json& c : *cj) {
        const Json* mj = find(c, "m");
        if (!mj || !mj->is_array() || static_cast<int>(mj->size()) != n)
            throw UsageError("config: class 'm' must be an array of length " + std::to_string(n));
        IVec m(n);
        for (int i = 0; i < n; ++i) m[i] = (*mj)[i].get<int>();
        const int d = get_int(c, "d", 1);
        if (d < 1) throw UsageError("config: class 'd' must be >= 1");
        out.emplace_back(std::move(m), d);
    }
    return out;
}

SearchBudget parse_budget(const Json& config) {
    SearchBudget b;
    const Json* bj = find(config, "budget");
    if (bj) {
        b.grid_per_axis = get_int(*bj, "grid_per_axis", b.grid_per_axis);
        b.random_starts = get_int(*bj, "random_starts", b.random_starts);
    }
    b.seed = get_u64(config, "seed", 2024);
    b.threads = get_int(config, "threads", 1);
    return b;
}

SearchTolerances parse_tolerances(const Json& config) {
    SearchTolerances t;
    const Json* tj = find(config, "tolerances");
    if (!tj) return t;
    t.residual = get_num(*tj, "residual", t.residual);
    t.dedup = get_num(*tj, "dedup", t.dedup);
    t.degeneracy = get_num(*tj, "degeneracy", t.degeneracy);
    t.deflation_radius = get_num(*tj, "deflation_radius", t.deflation_radius);
    return t;
}

ConvexitySampling parse_certification(const Json& config) {
    ConvexitySampling c;
    const Json* cj = find(config, "certification");
    if (!cj) return c;
    c.per_axis = get_int(*cj, "per_axis", c.per_axis);
    c.random_samples = get_int(*cj, "random_samples", c.random_samples);
    c.displacement = get_num(*cj, "displacement", c.displacement);
    c.seed = get_u64(*cj, "seed", c.seed);
    return c;
}

Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Json ivec_json(const IVec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Json record_json(const OrbitRecord& rec) {
    Json j;
    j["action"] = rec.action;
    j["residual"] = rec.residual;
    if (rec.spectrum.morse_index)
        j["morse_index"] = *rec.spectrum.morse_index;
    else
        j["morse_index"] = nullptr;
    j["min_abs_eig"] = rec.spectrum.min_abs_eig;
    j["eigenvalues"] = vec_json(rec.spectrum.eigenvalues);
    j["v"] = vec_json(rec.canonical.v);
    Json pts = Json::array();
    for (const auto& z : rec.points) pts.push_back(Json{{"q", vec_json(z.q)}, {"p", vec_json(z.p)}});
    j["points"] = pts;
    return j;
}

std::string class_slug(const OrbitClass& cls) {
    std::ostringstream os;
    os << "m";
    for (int i = 0; i < cls.m.size(); ++i) os << (i ? "_" : "") << cls.m[i];
    os << "_d" << cls.d;
    return os.str();
}

std::string orbits_csv(const std::vector<OrbitRecord>& recs, int n) {
    std::ostringstream os;
    os << "orbit,k";
    for (int i = 0; i < n; ++i) os << ",q" << i + 1;
    for (int i = 0; i < n; ++i) os << ",p" << i + 1;
    os << "\n";
    for (std::size_t r = 0; r < recs.size(); ++r)
        for (std::size_t k = 0; k < recs[r].points.size(); ++k) {
            os << r << "," << k;
            for (int i = 0; i < n; ++i) os << "," << fmt(recs[r].points[k].q[i]);
            for (int i = 0; i < n; ++i) os << "," << fmt(recs[r].points[k].p[i]);
            os << "\n";
        }
    return os.str();
}

Json count_json(const OrbitCountReport& cnt) {
    Json j;
    j["found"] = cnt.found;
    j["min_distinct"] = cnt.min_distinct;
    j["min_distinct_nondegenerate"] = cnt.min_distinct_nondegenerate;
    j["all_nondegenerate"] = cnt.all_nondegenerate;
    Json census = Json::object();
    for (const auto& [idx, c] : cnt.index_census) census[std::to_string(idx)] = c;
    j["index_census"] = std::move(census);
    return j;
}

bool count_certified(const OrbitCountReport& cnt) {
    if (cnt.found < cnt.min_distinct) return false;
    if (cnt.all_nondegenerate && cnt.found < cnt.min_distinct_nondegenerate) return false;
    return true;
}

template <typename Fn>
RunResult guarded(const char* command, const Json& config, Fn&& body) {
    RunResult res;
    res.report["schema_version"] = 1;
    res.report["command"] = command;
    res.report["seed"] = get_u64(config, "seed", 2024);
    try {
        body(res);
    } catch (const UsageError& e) {
        res.report["error"] = e.what();
        res.exit_code = kUsage;
    } catch (const NonPrimeClass& e) {
        res.report["error"] = e.what();
        res.exit_code = kUsage;
    } catch (const hamlang::SyntaxError& e) {
        res.report["error"] = e.what();
        res.exit_code = kUsage;
    } catch (const hamlang::UnknownIdentifier& e) {
        res.report["error"] = e.what();
        res.exit_code = kUsage;
    } catch (const ConvexityViolation& e) {
        res.report["error"] = e.what();
        res.exit_code = kCertification;
    } catch (const BoundViolation& e) {
        res.report["error"] = e.what();
        res.exit_code = kCertification;
    } catch (const PositivityFailure& e) {
        res.report["error"] = e.what();
        res.exit_code = kCertification;
    } catch (const OpticalityViolation& e) {
        res.report["error"] = e.what();
        res.exit_code = kCertification;
    } catch (const NotCritical& e) {
        res.report["error"] = e.what();
        res.exit_code = kCertification;
    } catch (const Error& e) {
        res.report["error"] = e.what();
        res.exit_code = kNumerical;
    } catch (const std::exception& e) {
        res.report["error"] = e.what();
        res.exit_code = kNumerical;
    }
    return res;
}

const Json& require_system(const Json& config) {
    const Json* sys = find(config, "system");
    if (!sys) throw UsageError("config: 'system' section is required");
    return *sys;
}

Json system_json(const std::string& type, const std::string& label, int n) {
    return Json{{"type", type}, {"label", label}, {"n", n}};
}

double resolve_p_max(const Json& config, const Json& sys,
                     const std::vector<OrbitClass>* classes) {
    double p_max = get_num(sys, "p_max", 0.0);
    if (p_max > 0.0) return p_max;
    if (classes && !classes->empty()) return default_p_max(*classes);
    return 3.0;
}

ShootingParams parse_shooting(const Json& config) {
    ShootingParams p;
    const Json* dj = find(config, "decompose");
    if (dj) {
        p.substeps = get_int(*dj, "substeps", p.substeps);
        p.fd_step = get_num(*dj, "fd_step", p.fd_step);
    }
    return p;
}

}  // namespace

RunResult run_check(const Json& config) {
    return guarded("check", config, [&](RunResult& res) {
        const Json& sys = require_system(config);
        if (system_type(sys) == "map") {
            GenFunPtr S = build_map_genfun(sys);
            res.report["system"] = system_json("map", S->label(), S->dim());

            const ConvexitySampling cs = parse_certification(config);
            const TwistConstants tc = certify_convexity(*S, cs);
            res.report["twist_constants"] =
                Json{{"a", tc.a},
                     {"kprime", tc.kprime},
                     {"product", tc.a * tc.kprime},
                     {"samples", tc.sample_count},
                     {"displacement", tc.displacement}};

            const LowerBoundCert lb = lower_bound_cert(*S, tc, cs);
            res.report["lower_bound"] = Json{{"alpha", lb.alpha},
                                             {"beta", lb.beta},
                                             {"gamma", lb.gamma},
                                             {"worst_margin", lb.worst_margin},
                                             {"samples", lb.sample_count},
                                             {"displacement", lb.displacement}};

            const DerivativeCheckReport dc = fd_derivative_check(*S);
            res.report["derivative_check"] = Json{{"d1", dc.max_rel_d1},
                                                  {"d2", dc.max_rel_d2},
                                                  {"d11", dc.max_rel_d11},
                                                  {"d12", dc.max_rel_d12},
                                                  {"d22", dc.max_rel_d22},
                                                  {"max", dc.max_rel()}};
            res.report["periodicity_residual"] = periodicity_residual(*S);

            const TwistMap F(S);
            UniformSampler rng(get_u64(config, "seed", 2024));
            double roundtrip = 0.0, symp = 0.0;
            const int samples = 32;
            for (int s = 0; s < samples; ++s) {
                const PhasePoint z(rng.vector(S->dim(), 0.0, 1.0),
                                   rng.vector(S->dim(), -2.0, 2.0));
                const PhasePoint w = F.inverse(F.forward(z));
                roundtrip = std::max(roundtrip,
                                     (w.flat() - z.flat()).lpNorm<Eigen::Infinity>());
                symp = std::max(symp, check_symplectic(F.tangent(z)));
            }
            res.report["map_checks"] =
                Json{{"samples", samples}, {"roundtrip", roundtrip}, {"symplecticity", symp}};
        } else {
            HamiltonianPtr H = build_hamiltonian(sys);
            res.report["system"] = system_json("hamiltonian", H->label(), H->dim());

            std::vector<OrbitClass> classes;
            if (find(config, "classes")) classes = parse_classes(config, H->dim());
            const double p_max = resolve_p_max(config, sys, &classes);
            const OpticalBounds bounds = estimate_optical_bounds(*H, p_max);
            res.report["optical_bounds"] = Json{{"C", bounds.C},
                                                {"K", bounds.K},
                                                {"p_max", bounds.p_max},
                                                {"samples", bounds.sample_count}};
            const double safety = get_num(find(config, "decompose") ? *find(config, "decompose")
                                                                    : Json::object(),
                                          "safety", 4.0);
            const int N = choose_N(bounds, safety);
            res.report["stint_count"] = N;

            UniformSampler rng(get_u64(config, "seed", 2024));
            double max_ratio = 0.0, sup_hess = 0.0, eig_lo = 1e300, eig_hi = 0.0;
            const int samples = 4;
            TwistBlockReport tb;
            for (int s = 0; s < samples; ++s) {
                const PhasePoint z(rng.vector(H->dim(), 0.0, 1.0),
                                   rng.vector(H->dim(), -0.5 * p_max, 0.5 * p_max));
                const GronwallReport gr = gronwall_check(*H, z, 0.0, 1.0, bounds.K, 128);
                max_ratio = std::max(max_ratio, gr.max_ratio);
                sup_hess = std::max(sup_hess, gr.sup_hessian);
                tb = twist_block(*H, z, 1.0 / N, bounds);
                eig_lo = std::min(eig_lo, tb.eig_min);
                eig_hi = std::max(eig_hi, tb.eig_max);
            }
            res.report["tangent_growth"] = Json{{"samples", samples},
                                                {"max_ratio", max_ratio},
                                                {"sup_hessian", sup_hess}};
            res.report["twist_block"] = Json{{"epsilon", 1.0 / N},
                                             {"eig_min", eig_lo},
                                             {"eig_max", eig_hi},
                                             {"bound_lo", tb.bound_lo},
                                             {"bound_hi", tb.bound_hi},
                                             {"admissible", tb.admissible}};
        }
    });
}

RunResult run_orbits(const Json& config) {
    return guarded("orbits", config, [&](RunResult& res) {
        const Json& sys = require_system(config);
        const SearchBudget budget = parse_budget(config);
        const SearchTolerances tols = parse_tolerances(config);

        std::vector<GenFunPtr> chain;
        HamiltonianPtr H;
        int n = 0;
        if (system_type(sys) == "map") {
            GenFunPtr S = build_map_genfun(sys);
            n = S->dim();
            res.report["system"] = system_json("map", S->label(), n);
            const TwistConstants tc = certify_convexity(*S, parse_certification(config));
            res.report["twist_constants"] =
                Json{{"a", tc.a}, {"kprime", tc.kprime}, {"product", tc.a * tc.kprime}};
            chain = {std::move(S)};
        } else {
            H = build_hamiltonian(sys);
            n = H->dim();
            res.report["system"] = system_json("hamiltonian", H->label(), n);
            const auto classes = parse_classes(config, n);
            const double p_max = resolve_p_max(config, sys, &classes);
            const OpticalBounds bounds = estimate_optical_bounds(*H, p_max);
            const Json* dj = find(config, "decompose");
            const Json dempty = Json::object();
            const Json& dec = dj ? *dj : dempty;
            const DecompositionPlan plan =
                decompose(H, bounds, get_num(dec, "safety", 4.0), parse_shooting(config),
                          get_int(dec, "cert_per_axis", 6), get_int(dec, "cert_random", 200));
            res.report["optical_bounds"] = Json{{"C", bounds.C},
                                                {"K", bounds.K},
                                                {"p_max", bounds.p_max},
                                                {"samples", bounds.sample_count}};
            res.report["stint_count"] = plan.N;
            double worst_a = 1e300, worst_prod = 0.0;
            for (const auto& tc : plan.constants) {
                worst_a = std::min(worst_a, tc.a);
                worst_prod = std::max(worst_prod, tc.a * tc.kprime);
            }
            res.report["stint_constants"] = Json{{"min_a", worst_a}, {"max_product", worst_prod}};
            chain = plan.genfuns();
        }

        const auto classes = parse_classes(config, n);
        const int steps_per_unit =
            get_int(find(config, "decompose") ? *find(config, "decompose") : Json::object(),
                    "steps_per_unit", 256);

        bool all_certified = true;
        Json classes_json = Json::array();
        for (const auto& cls : classes) {
            const ActionEvaluator W(chain, cls);
            auto recs = find_critical_points(W, budget, tols);
            const auto cnt = count_report(recs, n);

            Json cj;
            cj["class"] = cls.str();
            cj["m"] = ivec_json(cls.m);
            cj["d"] = cls.d;
            Json counts = count_json(cnt);
            for (auto& [k, v] : counts.items()) cj[k] = v;
            cj["count_certified"] = count_certified(cnt);
            all_certified = all_certified && count_certified(cnt);

            Json orbits = Json::array();
            for (const auto& rec : recs) {
                Json rj = record_json(rec);
                if (H) rj["flow_closure"] = verify_md_point(*H, rec.points.front(), cls,
                                                            steps_per_unit);
                orbits.push_back(std::move(rj));
            }
            cj["orbits"] = std::move(orbits);
            classes_json.push_back(std::move(cj));

            res.files["orbits_" + class_slug(cls) + ".csv"] = orbits_csv(recs, n);
        }
        res.report["classes"] = std::move(classes_json);
        if (!all_certified) res.exit_code = kCertification;
    });
}

RunResult run_decompose(const Json& config) {
    return guarded("decompose", config, [&](RunResult& res) {
        const Json& sys = require_system(config);
        if (system_type(sys) != "hamiltonian")
            throw UsageError("decompose: system must be a hamiltonian");
        HamiltonianPtr H = build_hamiltonian(sys);
        res.report["system"] = system_json("hamiltonian", H->label(), H->dim());

        std::vector<OrbitClass> classes;
        if (find(config, "classes")) classes = parse_classes(config, H->dim());
        const double p_max = resolve_p_max(config, sys, &classes);
        const OpticalBounds bounds = estimate_optical_bounds(*H, p_max);
        res.report["optical_bounds"] = Json{
            {"C", bounds.C}, {"K", bounds.K}, {"p_max", bounds.p_max}, {"samples", bounds.sample_count}};

        const Json* dj = find(config, "decompose");
        const Json dempty = Json::object();
        const Json& dec = dj ? *dj : dempty;
        const ShootingParams params = parse_shooting(config);
        const DecompositionPlan plan =
            decompose(H, bounds, get_num(dec, "safety", 4.0), params,
                      get_int(dec, "cert_per_axis", 6), get_int(dec, "cert_random", 200));
        res.report["stint_count"] = plan.N;

        Json stints = Json::array();
        std::ostringstream csv;
        csv << "k,t_start,epsilon,a,kprime,product\n";
        for (int k = 0; k < plan.N; ++k) {
            const auto& tc = plan.constants[k];
            const double t0 = plan.steps[k]->t_start();
            const double eps = plan.steps[k]->epsilon();
            stints.push_back(Json{{"k", k},
                                  {"t_start", t0},
                                  {"epsilon", eps},
                                  {"a", tc.a},
                                  {"kprime", tc.kprime},
                                  {"product", tc.a * tc.kprime}});
            csv << k << "," << fmt(t0) << "," << fmt(eps) << "," << fmt(tc.a) << ","
                << fmt(tc.kprime) << "," << fmt(tc.a * tc.kprime) << "\n";
        }
        res.report["stints"] = std::move(stints);
        res.files["stints.csv"] = csv.str();

        const MapChain chain = plan.chain();
        UniformSampler rng(get_u64(config, "seed", 2024));
        const int points = get_int(dec, "verify_points", 5);
        double comp_err = 0.0, symp = 0.0;
        for (int s = 0; s < points; ++s) {
            const PhasePoint z(rng.vector(H->dim(), 0.0, 1.0),
                               rng.vector(H->dim(), -0.5 * p_max, 0.5 * p_max));
            const PhasePoint via_chain = chain.forward(z);
            const PhasePoint direct = flow(*H, z, 0.0, 1.0, 2 * params.substeps * plan.N);
            comp_err = std::max(
                comp_err, (via_chain.flat() - direct.flat()).lpNorm<Eigen::Infinity>());
            symp = std::max(symp, check_symplectic(chain.tangent(z)));
        }
        res.report["verification"] = Json{{"points", points},
                                          {"composition_vs_flow", comp_err},
                                          {"symplecticity", symp}};
    });
}

RunResult run_suspend(const Json& config) {
    return guarded("suspend", config, [&](RunResult& res) {
        const Json& sys = require_system(config);
        if (system_type(sys) != "map")
            throw UsageError("suspend: system must be a twist map family");
        GenFunPtr S = build_map_genfun(sys);
        const int n = S->dim();
        res.report["system"] = system_json("map", S->label(), n);

        const ConvexitySampling cs = parse_certification(config);
        const TwistConstants tc = certify_convexity(*S, cs);
        res.report["twist_constants"] =
            Json{{"a", tc.a}, {"kprime", tc.kprime}, {"product", tc.a * tc.kprime}};

        const Json* uj = find(config, "suspend");
        const Json uempty = Json::object();
        const Json& sus_cfg = uj ? *uj : uempty;
        SuspensionParams sp;
        sp.dt = get_num(sus_cfg, "dt", sp.dt);
        sp.richardson = get_int(sus_cfg, "richardson", sp.richardson);
        const int t_samples = get_int(sus_cfg, "t_samples", 8);
        const int grid = get_int(sus_cfg, "grid_per_axis", 3);
        const double p_halfwidth = get_num(sus_cfg, "p_halfwidth", 1.5);
        const int steps = get_int(sus_cfg, "integrator_steps", 1000);
        const double max_error = get_num(sus_cfg, "max_error", 1e-3);

        const Suspension sus(S, tc.a);

        ConvexitySampling family_cs = cs;
        family_cs.per_axis = get_int(sus_cfg, "convexity_per_axis", 8);
        family_cs.random_samples = get_int(sus_cfg, "convexity_random", 200);
        const double margin = suspension_convexity_margin(sus, t_samples, family_cs);
        res.report["convexity_margin"] = margin;
        const bool margin_ok = margin >= tc.a * (1.0 - 1e-9) - 1e-12;
        res.report["margin_certified"] = margin_ok;

        // Transport every grid point along the isotopy and compare with the
        // target map.
        std::vector<PhasePoint> zs;
        std::vector<int> idx(2 * n, 0);
        for (;;) {
            Vec q(n), p(n);
            for (int i = 0; i < n; ++i) q[i] = static_cast<double>(idx[i]) / grid;
            for (int i = 0; i < n; ++i)
                p[i] = grid == 1 ? 0.0
                                 : -p_halfwidth +
                                       2.0 * p_halfwidth * idx[n + i] / (grid - 1);
            zs.emplace_back(q, p);
            int j = 0;
            while (j < 2 * n && ++idx[j] == grid) idx[j++] = 0;
            if (j == 2 * n) break;
        }

        double worst = 0.0;
        std::ostringstream csv;
        csv << "index";
        for (int i = 0; i < n; ++i) csv << ",q" << i + 1;
        for (int i = 0; i < n; ++i) csv << ",p" << i + 1;
        csv << ",roundtrip_error\n";
        for (std::size_t s = 0; s < zs.size(); ++s) {
            const double err = suspension_roundtrip_error(sus, zs[s], steps, sp);
            worst = std::max(worst, err);
            csv << s;
            for (int i = 0; i < n; ++i) csv << "," << fmt(zs[s].q[i]);
            for (int i = 0; i < n; ++i) csv << "," << fmt(zs[s].p[i]);
            csv << "," << fmt(err) << "\n";
        }
        res.files["suspension_grid.csv"] = csv.str();
        res.report["roundtrip"] = Json{{"grid_points", static_cast<int>(zs.size())},
                                       {"integrator_steps", steps},
                                       {"max_error", worst},
                                       {"tolerance", max_error}};

        std::vector<double> times;
        for (int k = 0; k < t_samples; ++k)
            times.push_back((k + 0.5) / static_cast<double>(t_samples));
        std::vector<PhasePoint> field_pts;
        const std::size_t stride = std::max<std::size_t>(1, zs.size() / 9);
        for (std::size_t s = 0; s < zs.size(); s += stride) field_pts.push_back(zs[s]);
        const double mismatch = suspension_field_mismatch(sus, times, field_pts, sp);
        res.report["field_consistency"] =
            Json{{"t_samples", t_samples},
                 {"points", static_cast<int>(field_pts.size())},
                 {"max_mismatch", mismatch}};

        if (worst > max_error || !margin_ok) res.exit_code = kCertification;
    });
}

RunResult run_command(const std::string& command, const Json& config) {
    if (command == "check") return run_check(config);
    if (command == "orbits") return run_orbits(config);
    if (command == "decompose") return run_decompose(config);
    if (command == "suspend") return run_suspend(config);
    RunResult res;
    res.report["schema_version"] = 1;
    res.report["command"] = command;
    res.report["error"] = "unknown command '" + command + "'";
    res.exit_code = kUsage;
    return res;
}

}  // namespace stmap
