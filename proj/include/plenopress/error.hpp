#pragma once

#include <stdexcept>
#include <string>

namespace plenopress {

/// Base of every error thrown by the library. The category maps onto the
/// CLI exit code, so callers can report failures without string matching.
class Error : public std::runtime_error {
public:
    enum class Category { Usage = 2, Contract = 3, Io = 4 };

    Error(Category category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    Category category() const noexcept { return category_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    Category category_;
};

/// A precondition or data contract of an operation was violated.
class ContractError : public Error {
public:
    explicit ContractError(const std::string& what) : Error(Category::Contract, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(Category::Io, what) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(Category::Usage, what) {}
};

}  // namespace plenopress
