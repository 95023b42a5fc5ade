#pragma once

#include <stdexcept>
#include <string>

namespace evetac {

// Error categories map onto CLI exit codes: usage/schema problems are
// InvalidInput (exit 2), everything else is an internal failure (exit 1).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

class DecodeError : public Error {
public:
    explicit DecodeError(const std::string& msg) : Error(msg) {}
};

class InvalidScene : public Error {
public:
    explicit InvalidScene(const std::string& msg) : Error(msg) {}
};

class NoPeak : public Error {
public:
    explicit NoPeak(const std::string& msg) : Error(msg) {}
};

class FitError : public Error {
public:
    explicit FitError(const std::string& msg) : Error(msg) {}
};

class TrainingError : public Error {
public:
    explicit TrainingError(const std::string& msg) : Error(msg) {}
};

class LabelingError : public Error {
public:
    explicit LabelingError(const std::string& msg) : Error(msg) {}
};

} // namespace evetac
