#pragma once

// Internal invariant checks that stay on in release builds. A failed check is
// a bug in the simulation (capacity overrun, double delivery, ...) and must
// never be silently ignored; it throws so the harness can exit nonzero.

#include <stdexcept>
#include <string>

namespace delaysched {

class InvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

[[noreturn]] inline void invariant_failure(const char* expr, const char* file, int line) {
    throw InvariantViolation(std::string("invariant violated: ") + expr + " at " + file + ":" +
                             std::to_string(line));
}

}  // namespace delaysched

#define DS_CHECK(expr) \
    do { \
        if (!(expr)) ::delaysched::invariant_failure(#expr, __FILE__, __LINE__); \
    } while (0)
