#ifndef STMAP_ORBITS_HPP
#define STMAP_ORBITS_HPP

#include "stmap/action.hpp"

#include <map>
#include <optional>

namespace stmap {

/// The class (m,d) has a common divisor, so every candidate orbit is a
/// multiple cover of a shorter one and the distinctness counts do not apply.
class NonPrimeClass : public Error {
public:
    using Error::Error;
};

struct SearchBudget {
    int grid_per_axis = 3;
    int random_starts = 200;
    std::uint64_t seed = 101;
    int threads = 1;  // worker threads per batch; does not affect results
};

struct SearchTolerances {
    double residual = 1e-10;        // acceptance threshold on sup |grad W|
    double dedup = 1e-5;            // quotient distance identifying two orbits
    double degeneracy = 1e-7;       // relative spectral cutoff for the Morse index
    double deflation_radius = 0.1;  // radius of the multistart deflation bumps
    int max_newton_iter = 80;
    int max_polish_iter = 60;
};

/// Spectrum of the action Hessian at a critical configuration. The Morse
/// index is reported only when no eigenvalue falls inside the cutoff
/// |lambda| <= degeneracy_tol * max(1, max |lambda|).
struct SpectralData {
    Vec eigenvalues;
    std::optional<int> morse_index;
    double min_abs_eig = 0.0;
};

SpectralData hessian_spectrum(const ActionEvaluator& W, const Configuration& c,
                              double degeneracy_tol);

/// A located critical point of the action: canonical representative, the
/// orbit it generates, and local data.
struct OrbitRecord {
    Configuration config;
    CanonicalForm canonical;
    std::vector<PhasePoint> points;
    double action = 0.0;
    double residual = 0.0;
    SpectralData spectrum;
};

/// Newton-polish a start into a critical configuration. Returns nullopt when
/// the iteration stalls above the residual tolerance.
std::optional<OrbitRecord> refine_critical_point(const ActionEvaluator& W,
                                                 const Configuration& start,
                                                 const SearchTolerances& tol = {});

/// Deflated deterministic multistart search for critical points. Results are
/// sorted by action and deduplicated in quotient distance; they do not depend
/// on the thread count. Throws NonPrimeClass for non-prime (m,d).
std::vector<OrbitRecord> find_critical_points(const ActionEvaluator& W,
                                              const SearchBudget& budget = {},
                                              const SearchTolerances& tol = {});

/// Lowest critical value reachable by multistart descent (the minimum exists
/// because the action is coercive on the quotient).
OrbitRecord minimize_action(const ActionEvaluator& W, const SearchBudget& budget = {},
                            const SearchTolerances& tol = {});

struct OrbitCountReport {
    int found = 0;
    int min_distinct = 0;                // cup-length bound: n + 1
    int min_distinct_nondegenerate = 0;  // Betti number bound: 2^n
    bool all_nondegenerate = false;
    std::map<int, int> index_census;  // Morse index -> count over nondegenerate records
};

OrbitCountReport count_report(const std::vector<OrbitRecord>& records, int n);

}  // namespace stmap

#endif
