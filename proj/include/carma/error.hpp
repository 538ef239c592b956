#ifndef CARMA_ERROR_HPP
#define CARMA_ERROR_HPP

#include <stdexcept>
#include <string>

namespace carma {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorCode : int {
    model = 1,           // schema, shape, or parameter violation
    cone_violation = 2,  // a state entry fell below the clipping floor
    convergence = 3,     // numerical routine did not reach its tolerance
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void model_error(const std::string& what) {
    throw Error(ErrorCode::model, what);
}

inline void require(bool cond, const std::string& what) {
    if (!cond) model_error(what);
}

}  // namespace carma

#endif
