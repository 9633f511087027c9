#include "stmap/pipelines.hpp"

#include <CLI11.hpp>

#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int fail_usage(const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    return stmap::kUsage;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"periodic orbits of symplectic twist maps and optical Hamiltonian flows"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int threads = 0;
    std::vector<std::string> tol_overrides;

    const std::pair<const char*, const char*> commands[] = {
        {"check", "certify twist constants, coercivity and derivative consistency"},
        {"orbits", "find and certify (m,d) periodic orbits via the discrete action"},
        {"decompose", "factor an optical time-1 map into convex twist maps"},
        {"suspend", "suspend a convex twist map into a Hamiltonian isotopy"},
    };
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "run configuration (json)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory for report.json and csv files");
        sub->add_option("--seed", seed, "override the configured random seed");
        sub->add_option("--threads", threads, "worker threads (does not change results)");
        sub->add_option("--tol", tol_overrides, "override a tolerance, NAME=VALUE")
            ->take_all();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return stmap::kUsage;
    }

    stmap::Json config;
    try {
        std::ifstream in(config_path);
        config = stmap::Json::parse(in);
    } catch (const std::exception& e) {
        return fail_usage("cannot parse " + config_path + ": " + e.what());
    }
    if (!config.is_object()) return fail_usage(config_path + ": top level must be an object");

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) config["seed"] = seed;
    if (sub->count("--threads")) config["threads"] = threads;
    for (const std::string& ov : tol_overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            return fail_usage("--tol expects NAME=VALUE, got '" + ov + "'");
        try {
            config["tolerances"][ov.substr(0, eq)] = std::stod(ov.substr(eq + 1));
        } catch (const std::exception&) {
            return fail_usage("--tol value in '" + ov + "' is not a number");
        }
    }

    stmap::RunResult result = stmap::run_command(sub->get_name(), config);
    result.report["timestamp"] = timestamp_utc();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) return fail_usage("cannot create output directory " + out_dir);

    const std::string report = result.report.dump(2) + "\n";
    {
        std::ofstream out(std::filesystem::path(out_dir) / "report.json", std::ios::binary);
        if (!out) return fail_usage("cannot write report.json in " + out_dir);
        out << report;
    }
    for (const auto& [name, payload] : result.files) {
        std::ofstream out(std::filesystem::path(out_dir) / name, std::ios::binary);
        if (!out) return fail_usage("cannot write " + name + " in " + out_dir);
        out << payload;
    }

    std::cout << report;
    return result.exit_code;
}
