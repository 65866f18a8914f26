#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace disent {

// Every error raised by the library carries a short machine-readable kind so
// the CLI and the HTTP layer can map it to exit codes / status codes.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message) : Error("invalid-argument", message) {}
};

class DatasetWriteError : public Error {
public:
    explicit DatasetWriteError(const std::string& message) : Error("dataset-write", message) {}
};

class DatasetIntegrityError : public Error {
public:
    DatasetIntegrityError(std::int64_t index, const std::string& message)
        : Error("dataset-integrity", message), index_(index) {}

    // First offending row, or -1 when the problem is not tied to a row.
    std::int64_t index() const noexcept { return index_; }

private:
    std::int64_t index_;
};

class CheckpointError : public Error {
public:
    explicit CheckpointError(const std::string& message) : Error("checkpoint", message) {}
};

class OracleQualityError : public Error {
public:
    explicit OracleQualityError(const std::string& message) : Error("oracle-quality", message) {}
};

class DivergenceError : public Error {
public:
    DivergenceError(std::int64_t step, const std::string& message)
        : Error("divergence", message), step_(step) {}

    std::int64_t step() const noexcept { return step_; }

private:
    std::int64_t step_;
};

}  // namespace disent
