#pragma once

#include <stdexcept>
#include <string>

namespace fkdiff {

/// Malformed or structurally invalid robot description.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown link, unreachable end link, or an inapplicable model edit.
class ChainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input whose size or layout does not match what an engine expects.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite value encountered in an input or intermediate result.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File that cannot be opened or read.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fkdiff
