#include "assist/error.hpp"

#include <utility>

namespace assist {

namespace {

std::string located(const std::string& what, std::size_t line, std::size_t column,
                    const std::string& field) {
    std::string out = what;
    if (line > 0) {
        out += " (line " + std::to_string(line);
        if (column > 0) out += ", column " + std::to_string(column);
        out += ")";
    }
    if (!field.empty()) out += " [" + field + "]";
    return out;
}

}  // namespace

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t column,
                       std::string field)
    : Error(located(what, line, column, field)),
      line_(line),
      column_(column),
      field_(std::move(field)) {}

}  // namespace assist
