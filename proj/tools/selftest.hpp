#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepoformer::selftest {

struct Options {
    std::size_t seeds = 5;
    std::uint64_t base_seed = 1;
    // Entries perturbed per parameter tensor in whole-model checks (0 = all).
    std::size_t model_entries_per_tensor = 48;
    std::size_t oracle_vectors = 1000;
};

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Finite-difference checks of every block, both losses and each model
// architecture under the ML2RE loss (4-record batch, train mode, fixed
// dropout masks), per seed.
std::vector<Check> gradient_checks(const Options& options);

// R^2 / MAE / MRE against scalar-loop oracles on random vectors, plus the
// worked example.
std::vector<Check> metric_checks(const Options& options);

std::vector<Check> run_all(const Options& options);

}  // namespace deepoformer::selftest
