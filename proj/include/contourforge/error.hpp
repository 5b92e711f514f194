#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace contourforge {

/// Violated precondition or an input the operation cannot handle
/// (empty mask, degenerate polygon, out-of-range coordinate, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed file or wire payload. Carries the byte offset at which
/// parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace contourforge
