#ifndef STMAP_TWIST_MAP_HPP
#define STMAP_TWIST_MAP_HPP

#include "stmap/genfun.hpp"

#include <memory>
#include <vector>

namespace stmap {

class NewtonDivergence : public Error {
public:
    using Error::Error;
};

struct NewtonParams {
    double tol = 1e-12;  // residual tolerance, sup norm
    int max_iter = 50;
};

/// Symplectic twist map induced by a generating function via
/// p = -d1 S(q,Q), P = d2 S(q,Q). Forward and inverse images are found by
/// damped Newton iteration on the generating relations.
class TwistMap {
public:
    explicit TwistMap(GenFunPtr S, NewtonParams params = {});
    virtual ~TwistMap() = default;

    int dim() const { return S_->dim(); }
    const GeneratingFunction& genfun() const { return *S_; }
    const GenFunPtr& genfun_ptr() const { return S_; }
    virtual std::string label() const { return S_->label(); }

    virtual PhasePoint forward(const PhasePoint& z) const;
    virtual PhasePoint inverse(const PhasePoint& z) const;

    /// Jacobian of (q,p) -> (Q,P) at z, assembled from the second derivatives
    /// of S at (q, Q(q,p)); upper-right block equals -(d12 S)^{-1}.
    virtual Mat tangent(const PhasePoint& z) const;

protected:
    GenFunPtr S_;
    NewtonParams params_;
};

using TwistMapPtr = std::shared_ptr<const TwistMap>;

/// Frobenius norm of DF^T J DF - J; zero for exact symplectic Jacobians.
double check_symplectic(const Mat& DF);

/// Ordered product of twist maps sharing one torus dimension; maps are
/// applied first-to-last.
class MapChain {
public:
    explicit MapChain(std::vector<TwistMapPtr> maps);

    int dim() const { return maps_.front()->dim(); }
    int size() const { return static_cast<int>(maps_.size()); }
    const TwistMap& map(int k) const { return *maps_[k]; }
    const std::vector<TwistMapPtr>& maps() const { return maps_; }

    PhasePoint forward(const PhasePoint& z) const;
    Mat tangent(const PhasePoint& z) const;

private:
    std::vector<TwistMapPtr> maps_;
};

MapChain compose(std::vector<TwistMapPtr> maps);

}  // namespace stmap

#endif
