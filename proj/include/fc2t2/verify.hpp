#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fc2t2/oracle.hpp"

// The self-check suite behind the verify command: every check compares the
// fast path against a slow reference and returns one report per quantity.
namespace fc2t2::verify {

using oracle::OracleReport;

struct Options {
    std::uint64_t seed = 1;
    int threads = 1;
    bool flip_l2l_sign = false;  // mutation hook; every engine built here inherits it
};

// Level 4, alpha 200, 1000 sources and targets: relative L2 error against
// the naive sum with and without least-squares tables, and their ratio.
std::vector<OracleReport> expansion_accuracy(const Options& opt);

// Identities that hold to rounding: line restriction, L2L re-centering,
// linearity in the weights, and the pass tiling of all box pairs.
std::vector<OracleReport> exact_polynomials(const Options& opt);

// Closed-form quartic roots against a bisection scan, and the residual of
// every depth-layer hit.
std::vector<OracleReport> root_finding(const Options& opt);

// Dot-product tests of each layer's backward pass against central
// differences of its forward pass, on at least 20 random directions.
std::vector<OracleReport> adjoints(const Options& opt);

// Line integrals and volumetric renders against dense quadrature, and an
// empty medium showing the background.
std::vector<OracleReport> integrals(const Options& opt);

// FLOP counts per source and target, and finest-grid sizes.
std::vector<OracleReport> cost_model(const Options& opt);

std::vector<OracleReport> run_all(const Options& opt);

// Worst |analytic - fd| relative to max(|fd|, rms of all fd).
double adjoint_error(const std::vector<double>& analytic, const std::vector<double>& fd);

} // namespace fc2t2::verify
