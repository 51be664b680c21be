#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace whitenopt {

// Knobs for the randomized invariant suite. Every check derives its stream
// from `seed`, so two runs with the same options agree bit for bit; changing
// the seed must not flip any verdict (the tolerances carry wide margins).
struct VerifyOptions {
    std::uint64_t seed = 1;
    std::size_t cases = 200;  // instances per randomized invariant
    std::size_t max_dim = 5;  // largest factor dimension for the equivalence checks

    void validate() const;
};

struct InvariantResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct VerifyReport {
    std::vector<InvariantResult> invariants;
    bool all_passed() const;
};

// Runs the numerical invariants the library is built around: the rotated
// and factored whitening directions agreeing with each other and with the
// dense inverse-root oracle, the Kronecker algebra identities, the one-step
// optimizer consistency, Monte-Carlo whitening convergence, and the model
// gradient checks.
VerifyReport run_verify(const VerifyOptions& opts);

// Finite-difference audit of every model kind's analytic gradients at step
// size 1e-5, `rounds` (>= 1) independently seeded models per kind. The
// gradient subset of run_verify, with a configurable round count.
VerifyReport run_grad_check(std::uint64_t seed, std::size_t rounds);

// One line per invariant: name, max observed error, tolerance, PASS/FAIL.
std::string verify_report_text(const VerifyReport& report);

}  // namespace whitenopt
