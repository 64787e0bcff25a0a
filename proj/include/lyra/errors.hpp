#pragma once

#include <stdexcept>
#include <string>

namespace lyra {

// Tensor extents disagree with an operation's contract.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A scalar argument is outside its legal range (probability, length, count).
class ValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid run or model configuration. The CLI maps this to exit code 64.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. calling backward() on a non-scalar value.
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient. The CLI maps this to exit code 2.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Metric undefined on the given data (e.g. zero target variance).
class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A token outside the declared alphabet; message names the position.
class EncodingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed CSV row; message carries the line number.
class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { VersionMismatch, ManifestMismatch, Truncated };

    CheckpointError(Kind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

}  // namespace lyra
