#pragma once

#include <stdexcept>
#include <string>

namespace arbcert {

// Shapes or sizes that do not line up.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Values outside the admissible domain of an operation.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Meshes or graphs that are not well formed.
struct StructureError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Too few samples or iterations to form a statistic.
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace arbcert
