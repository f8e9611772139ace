#pragma once

#include <string>

#include "infrel/errors.hpp"

namespace infrel {

// The three inference models. The iMMM and LFRM baselines are the metadata-
// free reductions of InfMM and InfLF (phi all-ones, eta frozen at alpha^{1/F})
// and are configured, not separately implemented.
enum class Model { InfMM, CInfMM, InfLF };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::InfMM: return "infmm";
    case Model::CInfMM: return "cinfmm";
    default: return "inflf";
  }
}

inline Model model_from_string(const std::string& s) {
  if (s == "infmm") return Model::InfMM;
  if (s == "cinfmm") return Model::CInfMM;
  if (s == "inflf") return Model::InfLF;
  throw DataError("unknown model: " + s);
}

}  // namespace infrel
