#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pbrak {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Lexical or grammatical failure; offset is the byte position in the input.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")"), offset(offset) {}
    std::size_t offset;
};

// log of a non-positive value, division by zero, and similar.
struct DomainEvalError : Error {
    using Error::Error;
};

// Trajectory left the representable range; time_reached is where it blew up.
struct IntegrationError : Error {
    IntegrationError(const std::string& msg, double time_reached)
        : Error(msg + " (at t = " + std::to_string(time_reached) + ")"),
          time_reached(time_reached) {}
    double time_reached;
};

struct InvalidArgument : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace pbrak
