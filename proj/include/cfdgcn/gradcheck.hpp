#pragma once

/**
 * @file gradcheck.hpp
 * @brief Central finite-difference checks of every reverse-mode derivative.
 */

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cfdgcn/mesh.hpp"

namespace cfdgcn::gradcheck {

struct CheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    std::size_t entries = 0;

    bool passed() const { return max_rel_err < tolerance; }
};

struct Options {
    double step = 1e-4;            // initial finite-difference step
    double abs_floor = 1e-8;       // denominators never drop below this ...
    double relative_floor = 1e-6;  // ... nor below this fraction of the largest gradient entry
    double nonlinear_tol = 1e-4;   // solver, upsample positions, end-to-end
    double linear_tol = 1e-6;      // GCN layer and upsample values
    int solver_iters = 2;
    std::uint64_t seed = 0;
};

/// |a - f| / max(|a|, |f|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares `analytic` with central differences of `f` over every entry of `x`
/// (restored afterwards). The step starts at options.step and is refined where the
/// estimate is not stable, i.e. near kinks; differences below the roundoff of the
/// difference quotient count as zero.
CheckResult check_gradient(const std::string& name, Eigen::MatrixXd& x, const Eigen::MatrixXd& analytic,
                           const std::function<double()>& f, double tolerance, const Options& options = {});

/// Runs the solver, GCN, upsampling and end-to-end suites. `coarse` is solved by
/// the embedded solver; `fine` carries predictions (needs an "airfoil" marker).
std::vector<CheckResult> run_all(const Mesh& coarse, const Mesh& fine, const Options& options = {});

}  // namespace cfdgcn::gradcheck
