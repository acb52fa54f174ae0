#pragma once

#include <cstdint>
#include <string_view>

namespace pchase {

// Carried in the packet header flags of RESPONSE_FAULT.
enum class FaultKind : std::uint16_t {
  None = 0,
  DivByZero = 1,
  OperandBounds = 2,
  Permission = 3,
  Straddle = 4,
  InvalidProgram = 5,
  StoreUnmapped = 6,
  ScratchTooLarge = 7,
};

inline std::string_view fault_name(FaultKind k) {
  switch (k) {
    case FaultKind::None: return "none";
    case FaultKind::DivByZero: return "div-by-zero";
    case FaultKind::OperandBounds: return "operand-bounds";
    case FaultKind::Permission: return "permission";
    case FaultKind::Straddle: return "straddle";
    case FaultKind::InvalidProgram: return "invalid-program";
    case FaultKind::StoreUnmapped: return "store-unmapped";
    case FaultKind::ScratchTooLarge: return "scratch-too-large";
  }
  return "unknown";
}

}  // namespace pchase
