#include "kinship/error.hpp"

namespace kinship {

Error::Error(std::string_view kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

ParseError::ParseError(const std::string& location, const std::string& message)
    : Error("parse", location + ": " + message), location_(location) {}

}  // namespace kinship
