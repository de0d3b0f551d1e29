#pragma once

#include <map>
#include <string>
#include <vector>

#include "csem/builders.hpp"

namespace csem {

/// A parsed model script: composite declarations, the structural model, and
/// `set key = value` options.
struct ModelProgram {
  std::vector<CompositeBlock> blocks;
  StructuralSpec structural;
  std::map<std::string, std::string> options;

  bool operator==(const ModelProgram&) const = default;
};

struct Diagnostic {
  int line = 0;  // 1-based
  int col = 0;   // 1-based
  std::string message;
};

struct ParseResult {
  ModelProgram program;
  std::vector<Diagnostic> diagnostics;
  bool ok() const { return diagnostics.empty(); }
};

/// Total parse: never throws on bad input; malformed lines are reported and
/// skipped so several diagnostics can surface in one run.
ParseResult parse(const std::string& source);

/// Canonical text form; parse(render(p)) is structurally equal to p.
std::string render(const ModelProgram& program);

}  // namespace csem
