#include "rfgen/treatment.hpp"

#include <cmath>

#include "rfgen/errors.hpp"

namespace rfgen {

std::string_view to_string(Chemo c) {
  switch (c) {
    case Chemo::None: return "none";
    case Chemo::AdjuvantTMZ: return "adjuvant_tmz";
    case Chemo::ReRT_TMZ: return "rert_tmz";
  }
  throw ArgumentError("invalid chemo code");
}

Chemo chemo_from_string(std::string_view s) {
  if (s == "none") return Chemo::None;
  if (s == "adjuvant_tmz") return Chemo::AdjuvantTMZ;
  if (s == "rert_tmz") return Chemo::ReRT_TMZ;
  throw ArgumentError("unknown chemo code '" + std::string(s) + "' (expected none|adjuvant_tmz|rert_tmz)");
}

void TreatmentContext::validate() const {
  if (days_since_baseline < 0) throw ArgumentError("days_since_baseline must be >= 0");
  if (!(dose_scale > 0.0) || !std::isfinite(dose_scale)) throw ArgumentError("dose_scale must be a positive finite number");
  const int c = static_cast<int>(chemo);
  if (c < 0 || c >= kChemoCount) throw ArgumentError("invalid chemo code");
}

}  // namespace rfgen
