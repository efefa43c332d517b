#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace adllab {

// Error with a stable machine-greppable code ("shape-mismatch",
// "config-invalid", ...). The CLI prints these on the diagnostic stream as
// "adllab: error [<code>]: <message>" and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

}  // namespace adllab
