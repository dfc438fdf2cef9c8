#pragma once

// Experiment matrix: (variant x language ablation x demo source x seed)
// cells sharing env/split settings. Cells run as independent workers;
// shared artifacts (demo stores, teachers, initializations) are built once
// under <out>/shared and reused. Completed cells are skipped on resume.

#include <filesystem>
#include <iosfwd>

#include "ldd/config.hpp"
#include "ldd/manifest.hpp"

namespace ldd {

struct MatrixCell {
    Variant variant;
    bool message_on;
    DemoPolicy demo_source;  // expert | random
    uint64_t seed;

    std::string name() const;
};

std::vector<MatrixCell> expand_matrix(const Config& cfg);

struct MatrixResult {
    int completed = 0;
    int skipped = 0;
    int failed = 0;
};

MatrixResult run_matrix(const Config& cfg, const std::filesystem::path& out_root, int jobs, std::ostream& log);

// Runs one cell end-to-end (building shared prerequisites if absent) and
// writes its manifest. Exposed for tests and for the acceptance suite.
TrainResult run_matrix_cell(const Config& base_cfg, const MatrixCell& cell,
                            const std::filesystem::path& out_root, std::ostream& log);

}  // namespace ldd
