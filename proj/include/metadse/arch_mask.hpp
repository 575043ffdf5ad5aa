#pragma once

#include <cstddef>

#include "metadse/matrix.hpp"

namespace metadse {

// P×P gate on attention between parameter tokens. Entries live in [0, 1].
struct ArchMask {
  Matrix m;
  bool learnable = false;

  static ArchMask ones(std::size_t p);

  std::size_t dims() const noexcept { return m.rows(); }
  // Throws ShapeError for a non-square matrix, ContractError for entries
  // outside [0, 1], DegenerateMask for an all-zero row.
  void validate() const;
  // Clamps entries into [0, 1]. Rows that end up all zero are reset to 1/P;
  // returns how many rows were reset.
  std::size_t clamp();

  friend bool operator==(const ArchMask&, const ArchMask&) = default;
};

}  // namespace metadse
