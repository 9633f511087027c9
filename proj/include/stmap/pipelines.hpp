#ifndef STMAP_PIPELINES_HPP
#define STMAP_PIPELINES_HPP

#include "stmap/hamflow.hpp"
#include "stmap/orbits.hpp"
#include "stmap/suspension.hpp"

#include <json.hpp>

#include <map>
#include <string>

namespace stmap {

using Json = nlohmann::ordered_json;

/// Rejected run configuration (unknown family, malformed class, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kCertification = 2,  // a certified inequality failed on samples
    kNumerical = 3,      // solver divergence, non-finite values
};

/// Everything a run produces. The report carries no clock or machine state,
/// so identical configurations give byte-identical reports.
struct RunResult {
    Json report;
    std::map<std::string, std::string> files;  // filename -> csv payload
    int exit_code = kOk;
};

RunResult run_check(const Json& config);
RunResult run_orbits(const Json& config);
RunResult run_decompose(const Json& config);
RunResult run_suspend(const Json& config);

/// Dispatch by command name; unknown commands report kUsage.
RunResult run_command(const std::string& command, const Json& config);

}  // namespace stmap

#endif
