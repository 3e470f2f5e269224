#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace kvslim {

/// Test-only formula corruptions. `cmd_verify` must go red under each one;
/// they never touch the library implementations themselves.
enum class Mutation {
    none,
    c12_sign_flip,           // flips the off-diagonal sensitivity vector
    drop_dk_factor,          // removes 1/d_k from the Hessian coefficients
    swap_weight_numerators,  // crosses the gradient-free weight numerators
};

struct VerifyOptions {
    int seeds = 20;
    std::vector<std::size_t> seq_lens = {2, 4, 8, 16};
    std::vector<std::size_t> dims = {2, 4, 8};
    Mutation mutation = Mutation::none;
};

struct CheckResult {
    std::string name;
    bool passed = false;
    double worst = 0.0;  // worst observed deviation, check-specific units
};

std::vector<CheckResult> run_verify(const VerifyOptions& opts, std::ostream& out);
bool all_passed(const std::vector<CheckResult>& results);

Mutation parse_mutation(const std::string& name);

}  // namespace kvslim
