#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bmode/grid.hpp"

namespace bmode {

enum class MatClass { kDouble, kSingle, kInt16 };

// A 2-D numeric MAT variable. Values are converted to double; `source_class`
// records the on-disk class. Storage is row-major (transposed from MATLAB's
// column-major layout on read).
struct MatArray {
  MatClass source_class = MatClass::kDouble;
  Grid<double> values;
};

struct Mat5File {
  std::map<std::string, MatArray> arrays;
  std::vector<std::string> warnings;  // skipped elements, one line each
  std::map<std::string, std::string> skipped;  // variable name -> reason

  // Throws ErrorKind::kInvalidInput naming the variable if it is absent or was
  // skipped as unsupported.
  const MatArray& get(const std::string& name) const;
};

// Parses the supported MAT-v5 subset: top-level miMATRIX elements (plain or
// inside miCOMPRESSED) holding real 2-D double/single/int16 arrays. Anything
// else is skipped with a warning. Never reads out of bounds; malformed input
// raises bmode::Error.
Mat5File parse_mat5(std::span<const std::uint8_t> bytes);

}  // namespace bmode
