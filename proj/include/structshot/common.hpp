#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace structshot {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Error in a line-oriented input, carrying the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Collects non-fatal conditions (degenerate features, repaired tags,
/// transition mass folding, decoder fallbacks). Operations accept an
/// optional pointer; passing nullptr discards warnings.
struct Warnings {
    std::vector<std::string> messages;

    void add(std::string msg) { messages.push_back(std::move(msg)); }
    bool empty() const noexcept { return messages.empty(); }
    std::size_t size() const noexcept { return messages.size(); }
};

inline void warn(Warnings* sink, std::string msg) {
    if (sink != nullptr) sink->add(std::move(msg));
}

}  // namespace structshot
