#pragma once

#include <stdexcept>
#include <string>

namespace wavehead {

// Error taxonomy shared by the library and the CLI.
// The CLI maps these onto exit codes: validation 1, numeric 2, io 3.

class validation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class dimension_error : public validation_error {
public:
    using validation_error::validation_error;
};

class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Pivot collapsed below working precision during LU factorisation.
class singularity_error : public numeric_error {
public:
    using numeric_error::numeric_error;
};

// A state that should be normalisable has (near-)zero norm.
class degenerate_state_error : public numeric_error {
public:
    using numeric_error::numeric_error;
};

// Every measurement vector is (near-)orthogonal to the state; the Born
// denominator underflowed its floor.
class measurement_collapse_error : public numeric_error {
public:
    using numeric_error::numeric_error;
};

class io_error : public std::runtime_error {
public:
    enum class kind {
        unreadable,      // cannot open / read / write the file
        bad_magic,
        bad_version,
        truncated,       // payload shorter than the header promises
        size_mismatch,   // flags/header inconsistent with payload size
        schema,          // malformed header row, ragged CSV, bad JSON shape
        payload,         // values out of range (labels >= C, non-finite data)
    };

    io_error(kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}

    kind which() const noexcept { return kind_; }

private:
    kind kind_;
};

} // namespace wavehead
