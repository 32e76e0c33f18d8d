#pragma once

#include <stdexcept>
#include <string>

namespace agg {

/// Error categories used across the library. The CLI maps these to exit
/// codes and one-line diagnostics; tests match on them.
enum class ErrorKind {
    Config,        // bad shapes, bad hyperparameters, unknown config keys
    Data,          // malformed input files, out-of-vocabulary categories
    PipelineOrder, // operations applied out of contract order (e.g. future node as input)
    InvalidMask,   // attention row with no attendable keys
    Divergence,    // non-finite loss or gradients during training
    Io,            // file system failures
    Incompatible,  // checkpoint magic/version mismatch
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::PipelineOrder: return "pipeline-order";
    case ErrorKind::InvalidMask: return "invalid-mask";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
    case ErrorKind::Incompatible: return "incompatible";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace agg
