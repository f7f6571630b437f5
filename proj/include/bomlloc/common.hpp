#pragma once

#include <stdexcept>
#include <string>

namespace bomlloc {

// Bad user input: wrong dimensions, empty datasets, out-of-range values.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed files, schema violations, version mismatches.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values encountered during computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace bomlloc
