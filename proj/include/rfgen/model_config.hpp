#pragma once

#include <array>
#include <vector>

#include <json.hpp>

namespace rfgen {

inline constexpr double kMaxDays = 720.0;

/// Architecture and conditioning of the velocity network. Time and the
/// baseline image are always conditioned on; dose and chemo are the two
/// ablation flags.
struct ModelConfig {
  int image_width = 32;
  int image_height = 32;
  std::array<int, 3> widths{32, 64, 64};
  std::vector<int> attention_levels{1, 2};
  int heads = 2;
  int context_dim = 64;
  int time_embed_dim = 32;     // sinusoidal features of the flow time
  int time_hidden_dim = 64;    // width of the time MLP
  int context_embed_dim = 32;  // sinusoidal features of days / max_days
  bool use_dose = true;
  bool use_chemo = true;

  int spatial_channels() const { return 3 + (use_dose ? 1 : 0); }
  int input_channels() const { return 3 + spatial_channels(); }
  bool has_attention(int level) const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Smallest configuration used for float64 gradient verification.
ModelConfig tiny_config();

}  // namespace rfgen
