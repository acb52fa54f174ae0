#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

#include "pchase/isa.hpp"

namespace pchase {

class AsmError : public std::runtime_error {
 public:
  AsmError(std::size_t line, std::size_t column, const std::string& msg)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Parses assembly text. One instruction per line, `#` starts a comment,
/// `name:` defines a label for the next instruction. Operands are `cur_ptr`,
/// `sp[n]` (or `scratch_pad[n]`), `data[n]` and decimal/hex immediates.
/// MOVE/STORE accept a width suffix (`MOVE.1`), COMPARE accepts `.s`.
Program assemble(std::string_view text);

/// Inverse of assemble(); jump targets get synthetic `L<index>` labels.
std::string disassemble(const Program& program);

}  // namespace pchase
