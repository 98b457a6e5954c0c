#pragma once

#include <string>
#include <string_view>

namespace rfgen {

enum class Chemo { None = 0, AdjuvantTMZ = 1, ReRT_TMZ = 2 };
inline constexpr int kChemoCount = 3;

std::string_view to_string(Chemo c);
Chemo chemo_from_string(std::string_view s);

/// The modifiable counterfactual knobs.
struct TreatmentContext {
  int days_since_baseline = 0;
  Chemo chemo = Chemo::AdjuvantTMZ;
  double dose_scale = 1.0;

  void validate() const;
  bool operator==(const TreatmentContext&) const = default;
};

/// Standard-of-care context used as the evaluation reference: adjuvant TMZ at
/// the prescribed dose.
inline TreatmentContext reference_context(int days) { return {days, Chemo::AdjuvantTMZ, 1.0}; }

}  // namespace rfgen
