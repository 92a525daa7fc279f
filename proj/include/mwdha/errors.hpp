#pragma once

#include <stdexcept>
#include <string>

namespace mwdha {

// Bad input: wrong shapes, non-symmetric matrices, mismatched lattices.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A power or inverse was requested of a matrix whose spectrum hits the floor.
struct SingularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnsupportedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mwdha
