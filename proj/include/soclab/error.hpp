#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace soclab {

enum class ErrorKind {
    terminal_context,
    token_out_of_range,
    non_terminal,
    invalid_parameter,
    cap_exceeded,
    empty_demos,
    reward_not_one,
    coverage,
    invalid_trajectory,
    io,
    parse,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::terminal_context: return "terminal-context";
    case ErrorKind::token_out_of_range: return "token-out-of-range";
    case ErrorKind::non_terminal: return "non-terminal";
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::cap_exceeded: return "cap-exceeded";
    case ErrorKind::empty_demos: return "empty-demos";
    case ErrorKind::reward_not_one: return "reward-not-one";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::invalid_trajectory: return "invalid-trajectory";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    }
    return "unknown";
}

/// Every failure raised by the library carries a kind so callers and tests
/// can branch on the category rather than on message text.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace soclab
