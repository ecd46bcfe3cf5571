// errors.hpp - exception hierarchy shared by all chainprof modules.
//
// Every error carries a category that maps onto the CLI exit-code contract:
//   spec (1)     - malformed or semantically invalid input documents
//   io (2)       - filesystem problems, bundle integrity failures
//   backend (3)  - deploy/limit/collection failures of an execution backend
#pragma once

#include <stdexcept>
#include <string>

namespace chainprof {

enum class ErrorCategory { spec = 1, io = 2, backend = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
};

// Schema or semantic violation. `path` is a JSON pointer into the offending
// document ("" when not applicable).
class SpecError : public Error {
public:
    SpecError(std::string path, const std::string& message)
        : Error(ErrorCategory::spec, path.empty() ? message : path + ": " + message),
          path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Document could not be tokenized. Line and column are 1-based.
class SyntaxError : public SpecError {
public:
    SyntaxError(std::size_t line, std::size_t column, const std::string& message)
        : SpecError("", "syntax error at line " + std::to_string(line) + ", column " +
                            std::to_string(column) + ": " + message),
          line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::io, message) {}
};

// A bundle on disk (or in memory) whose manifest disagrees with its content.
class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& message)
        : Error(ErrorCategory::io, "integrity error: " + message) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string& message) : Error(ErrorCategory::backend, message) {}
};

class DeployError : public BackendError {
public:
    DeployError(std::string node, const std::string& message)
        : BackendError("deploy failure" + (node.empty() ? std::string() : " (" + node + ")") +
                       ": " + message),
          node_(std::move(node)) {}

    const std::string& node() const noexcept { return node_; }

private:
    std::string node_;
};

class LimitError : public BackendError {
public:
    LimitError(std::string node, const std::string& message)
        : BackendError("limit-application failure (" + node + "): " + message),
          node_(std::move(node)) {}

    const std::string& node() const noexcept { return node_; }

private:
    std::string node_;
};

class CollectionTimeout : public BackendError {
public:
    explicit CollectionTimeout(const std::string& message)
        : BackendError("collection timeout: " + message) {}
};

// Metric extraction failures. Kept distinct so callers can tell a missing
// node apart from a missing file, key, or a garbage value.
class ExtractionError : public Error {
public:
    enum class Kind { missing_node, missing_file, missing_key, non_numeric, non_finite, node_failed };

    ExtractionError(Kind kind, const std::string& message)
        : Error(ErrorCategory::spec, message), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Statistics preconditions.
class InsufficientSamples : public Error {
public:
    explicit InsufficientSamples(std::size_t n)
        : Error(ErrorCategory::spec, "insufficient samples: need at least 2, got " + std::to_string(n)) {}
};

class NonFinite : public Error {
public:
    explicit NonFinite(const std::string& what) : Error(ErrorCategory::spec, "non-finite value: " + what) {}
};

// No tested allocation meets the requested service-level target.
class Unreachable : public Error {
public:
    explicit Unreachable(const std::string& message) : Error(ErrorCategory::spec, "unreachable: " + message) {}
};

}  // namespace chainprof
