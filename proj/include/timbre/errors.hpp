#pragma once

#include <stdexcept>
#include <string>

namespace timbre {

struct SilentStemError : std::runtime_error {
    explicit SilentStemError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SilentInputError : std::runtime_error {
    explicit SilentInputError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace timbre
