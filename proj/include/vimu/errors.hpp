#pragma once

#include <stdexcept>
#include <string>

namespace vimu {

/// Base for every error the library raises. The CLI maps the category to
/// its exit code.
class Error : public std::runtime_error {
public:
    enum class Category { usage, data, divergence };
    Error(Category c, const std::string& what) : std::runtime_error(what), category_(c) {}
    Category category() const { return category_; }

private:
    Category category_;
};

struct UsageError : Error {
    explicit UsageError(const std::string& w) : Error(Category::usage, w) {}
};

struct DataError : Error {
    explicit DataError(const std::string& w) : Error(Category::data, w) {}
};

struct DivergenceError : Error {
    DivergenceError(const std::string& w, int epoch) : Error(Category::divergence, w), epoch(epoch) {}
    int epoch;
};

// Finer-grained data errors, so callers and tests can tell them apart.
struct ModalityError : DataError { using DataError::DataError; };
struct InvalidArgument : DataError { using DataError::DataError; };
struct DimensionError : DataError { using DataError::DataError; };
struct StateError : DataError { using DataError::DataError; };
struct LabelError : DataError { using DataError::DataError; };
struct FormatError : DataError { using DataError::DataError; };
struct TruncatedError : FormatError { using FormatError::FormatError; };
struct ChecksumError : FormatError { using FormatError::FormatError; };
struct StatsMismatch : DataError { using DataError::DataError; };
struct ConfigError : UsageError { using UsageError::UsageError; };
struct LeakageError : DataError { using DataError::DataError; };
struct InsufficientData : DataError { using DataError::DataError; };

}  // namespace vimu
