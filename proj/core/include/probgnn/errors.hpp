#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace probgnn {

/// All library failures carry a stable machine-readable kind tag
/// ("ShapeMismatch", "DomainError", ...) plus a human message.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

[[noreturn]] inline void fail(std::string kind, const std::string& message) {
    throw Error(std::move(kind), message);
}

inline void require(bool cond, std::string_view kind, const std::string& message) {
    if (!cond) fail(std::string(kind), message);
}

}  // namespace probgnn
