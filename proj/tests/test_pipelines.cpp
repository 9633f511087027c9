#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stmap/pipelines.hpp"

#include <cmath>

using namespace stmap;

namespace {

const double kFourPiSq = 4.0 * std::numbers::pi * std::numbers::pi;

Json standard_orbits_config() {
    return Json{{"system", Json{{"family", "standard"}, {"s", 0.8}}},
                {"classes", Json::array({Json{{"m", Json::array({0})}, {"d", 1}}})}};
}

}  // namespace

TEST_CASE("orbit run on the standard map reports both fixed points") {
    const RunResult res = run_orbits(standard_orbits_config());
    CHECK(res.exit_code == kOk);
    CHECK_FALSE(res.report.contains("error"));
    CHECK_FALSE(res.report.contains("timestamp"));
    CHECK(res.report["command"] == "orbits");
    CHECK(res.report["twist_constants"]["a"].get<double>() == doctest::Approx(1.0));

    const Json& cls = res.report["classes"][0];
    CHECK(cls["class"] == "((0),1)");
    CHECK(cls["found"] == 2);
    CHECK(cls["count_certified"] == true);
    CHECK(cls["all_nondegenerate"] == true);

    const double a = 0.8 / kFourPiSq;
    CHECK(cls["orbits"][0]["action"].get<double>() == doctest::Approx(-a).epsilon(1e-10));
    CHECK(cls["orbits"][1]["action"].get<double>() == doctest::Approx(a).epsilon(1e-10));
    CHECK(cls["orbits"][0]["morse_index"] == 0);
    CHECK(cls["orbits"][1]["morse_index"] == 1);

    REQUIRE(res.files.count("orbits_m0_d1.csv") == 1);
    const std::string& csv = res.files.at("orbits_m0_d1.csv");
    CHECK(csv.rfind("orbit,k,q1,p1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("identical configurations give byte identical results") {
    const RunResult a = run_orbits(standard_orbits_config());
    const RunResult b = run_orbits(standard_orbits_config());
    CHECK(a.report.dump(2) == b.report.dump(2));
    REQUIRE(a.files.size() == b.files.size());
    for (const auto& [name, payload] : a.files) {
        REQUIRE(b.files.count(name) == 1);
        CHECK(payload == b.files.at(name));
    }
}

TEST_CASE("thread count changes nothing but the wall clock") {
    Json cfg = standard_orbits_config();
    const RunResult r1 = run_orbits(cfg);
    cfg["threads"] = 4;
    const RunResult r4 = run_orbits(cfg);
    CHECK(r1.report.dump() == r4.report.dump());
    CHECK(r1.files.at("orbits_m0_d1.csv") == r4.files.at("orbits_m0_d1.csv"));
}

TEST_CASE("check run certifies the classical standard map") {
    const Json cfg{{"system", Json{{"family", "standard"}, {"s", 0.8}}}};
    const RunResult res = run_check(cfg);
    CHECK(res.exit_code == kOk);
    CHECK(res.report["twist_constants"]["a"].get<double>() == doctest::Approx(1.0));
    CHECK(res.report["twist_constants"]["product"].get<double>() ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(res.report["lower_bound"]["gamma"].get<double>() == doctest::Approx(0.5));
    CHECK(res.report["lower_bound"]["worst_margin"].get<double>() >= 0.0);
    CHECK(res.report["derivative_check"]["max"].get<double>() < 1e-5);
    CHECK(res.report["periodicity_residual"].get<double>() < 1e-12);
    CHECK(res.report["map_checks"]["roundtrip"].get<double>() < 1e-9);
    CHECK(res.report["map_checks"]["symplecticity"].get<double>() < 1e-9);
}

TEST_CASE("check run sizes the pendulum decomposition") {
    const Json cfg{{"system", Json{{"type", "hamiltonian"}, {"catalog", "pendulum"}}}};
    const RunResult res = run_check(cfg);
    CHECK(res.exit_code == kOk);
    CHECK(res.report["system"]["type"] == "hamiltonian");
    CHECK(res.report["optical_bounds"]["C"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(res.report["optical_bounds"]["K"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.report["stint_count"] == 4);
    CHECK(res.report["tangent_growth"]["max_ratio"].get<double>() < 1.0);
    CHECK(res.report["twist_block"]["admissible"] == true);
}

TEST_CASE("orbit run through the decomposed pendulum flow") {
    const Json cfg{{"system", Json{{"type", "hamiltonian"}, {"catalog", "pendulum"}}},
                   {"classes", Json::array({Json{{"m", Json::array({0})}, {"d", 1}}})},
                   {"budget", Json{{"grid_per_axis", 2}, {"random_starts", 20}}}};
    const RunResult res = run_orbits(cfg);
    CHECK(res.exit_code == kOk);
    CHECK(res.report["stint_count"] == 4);
    CHECK(res.report["stint_constants"]["min_a"].get<double>() > 3.5);
    CHECK(res.report["stint_constants"]["max_product"].get<double>() <= 1.0 + 1e-9);

    const Json& cls = res.report["classes"][0];
    REQUIRE(cls["found"].get<int>() >= 2);
    CHECK(cls["count_certified"] == true);
    const double a = 1.0 / kFourPiSq;
    CHECK(cls["orbits"][0]["action"].get<double>() == doctest::Approx(-a).epsilon(1e-8));
    CHECK(cls["orbits"][0]["morse_index"] == 0);
    CHECK(cls["orbits"][0]["v"][0].get<double>() == doctest::Approx(0.5).epsilon(1e-6));
    bool saw_hyperbolic = false;
    for (const Json& orb : cls["orbits"]) {
        CHECK(orb["flow_closure"].get<double>() < 1e-6);
        if (orb["morse_index"].is_number() && orb["morse_index"] == 1 &&
            std::fabs(orb["action"].get<double>() - a) < 1e-8)
            saw_hyperbolic = true;
    }
    CHECK(saw_hyperbolic);
}

TEST_CASE("decompose run verifies the factorization") {
    const Json cfg{{"system", Json{{"catalog", "pendulum"}}},
                   {"decompose", Json{{"verify_points", 3}}}};
    const RunResult res = run_decompose(cfg);
    CHECK(res.exit_code == kOk);
    CHECK(res.report["stint_count"] == 4);
    REQUIRE(res.report["stints"].size() == 4);
    for (const Json& st : res.report["stints"]) {
        CHECK(st["epsilon"].get<double>() == doctest::Approx(0.25));
        CHECK(st["product"].get<double>() <= 1.0 + 1e-9);
    }
    CHECK(res.report["verification"]["composition_vs_flow"].get<double>() < 1e-7);
    CHECK(res.report["verification"]["symplecticity"].get<double>() < 1e-7);
    REQUIRE(res.files.count("stints.csv") == 1);
    CHECK(std::count(res.files.at("stints.csv").begin(), res.files.at("stints.csv").end(),
                     '\n') == 5);
}

TEST_CASE("suspend run transports a small grid") {
    const Json cfg{{"system", Json{{"family", "integrable"}, {"n", 1}}},
                   {"suspend", Json{{"grid_per_axis", 2},
                                    {"integrator_steps", 400},
                                    {"t_samples", 4},
                                    {"max_error", 1e-4}}}};
    const RunResult res = run_suspend(cfg);
    CHECK(res.exit_code == kOk);
    CHECK(res.report["margin_certified"] == true);
    CHECK(res.report["convexity_margin"].get<double>() >= 1.0 - 1e-9);
    CHECK(res.report["roundtrip"]["max_error"].get<double>() < 1e-4);
    CHECK(res.report["field_consistency"]["max_mismatch"].get<double>() < 1e-4);
    REQUIRE(res.files.count("suspension_grid.csv") == 1);
    CHECK(std::count(res.files.at("suspension_grid.csv").begin(),
                     res.files.at("suspension_grid.csv").end(), '\n') == 5);
}

TEST_CASE("configuration mistakes exit with the usage code") {
    CHECK(run_orbits(Json::object()).exit_code == kUsage);
    CHECK(run_check(Json{{"system", Json{{"family", "unknown"}}}}).exit_code == kUsage);

    Json nonprime = standard_orbits_config();
    nonprime["classes"][0]["d"] = 2;
    const RunResult np = run_orbits(nonprime);
    CHECK(np.exit_code == kUsage);
    CHECK(np.report.contains("error"));

    CHECK(run_command("frobnicate", Json::object()).exit_code == kUsage);
    CHECK(run_check(Json{{"system", Json{{"expression", "p1^2/2 +"}}}}).exit_code == kUsage);
    CHECK(run_check(Json{{"system", Json{{"expression", "p1^2/2 + q1^2"}}}}).exit_code ==
          kUsage);
    CHECK(run_suspend(Json{{"system", Json{{"catalog", "pendulum"}}}}).exit_code == kUsage);
    CHECK(run_decompose(Json{{"system", Json{{"family", "standard"}, {"s", 0.8}}}}).exit_code ==
          kUsage);

    Json badclass = standard_orbits_config();
    badclass["classes"][0]["m"] = Json::array({0, 1});
    CHECK(run_orbits(badclass).exit_code == kUsage);
}

TEST_CASE("failed certification exits with its own code") {
    const Json cfg{{"system",
                    Json{{"family", "integrable"},
                         {"A", Json::array({Json::array({1.0, 0.0}), Json::array({0.0, -1.0})})}}}};
    const RunResult res = run_check(cfg);
    CHECK(res.exit_code == kCertification);
    CHECK(res.report.contains("error"));

    const Json mech{{"system", Json{{"expression", "-p1^2/2 + cos(2*pi*q1)"}}}};
    CHECK(run_check(mech).exit_code == kCertification);
}

TEST_CASE("reports carry the seed that produced them") {
    Json cfg = standard_orbits_config();
    cfg["seed"] = 77;
    const RunResult res = run_orbits(cfg);
    CHECK(res.report["seed"] == 77);
    const auto it = res.report.begin();
    CHECK(it.key() == "schema_version");
}
