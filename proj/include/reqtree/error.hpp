#pragma once

#include <stdexcept>
#include <string>

namespace reqtree {

enum class ErrorKind {
    UnknownParent,
    DuplicateId,
    UnknownNode,
    InvalidValue,
    ParseError,
    UnknownActLabel,
    InvalidGoalTree,
    EmptyTrainingData,
    UnknownState,
    UnknownUser,
    UnknownLabel,
    DegenerateCorpus,
    OrderMismatch,
    SessionFinished,
    MissingModel,
    InvalidSpec,
    Io,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` lets callers map failures
/// onto exit codes or tests without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace reqtree
