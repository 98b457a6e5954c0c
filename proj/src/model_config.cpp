#include "rfgen/model_config.hpp"

#include <algorithm>

#include "rfgen/errors.hpp"

namespace rfgen {

bool ModelConfig::has_attention(int level) const {
  return std::find(attention_levels.begin(), attention_levels.end(), level) != attention_levels.end();
}

void ModelConfig::validate() const {
  if (image_width < 4 || image_height < 4 || image_width % 4 != 0 || image_height % 4 != 0) {
    throw ConfigError("image size must be a positive multiple of 4 (two downsampling levels)");
  }
  for (int w : widths)
    if (w <= 0) throw ConfigError("level widths must be positive");
  for (int l : attention_levels) {
    if (l < 0 || l > 2) throw ConfigError("attention level out of range (levels are 0..2)");
    if (widths[static_cast<std::size_t>(l)] % heads != 0) throw ConfigError("attention width not divisible by heads");
  }
  if (heads < 1 || context_dim < 1 || time_hidden_dim < 1) throw ConfigError("dimensions must be positive");
  if (time_embed_dim < 2 || time_embed_dim % 2 || context_embed_dim < 2 || context_embed_dim % 2) {
    throw ConfigError("embedding dimensions must be even and >= 2");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"image_width", c.image_width},
          {"image_height", c.image_height},
          {"widths", c.widths},
          {"attention_levels", c.attention_levels},
          {"heads", c.heads},
          {"context_dim", c.context_dim},
          {"time_embed_dim", c.time_embed_dim},
          {"time_hidden_dim", c.time_hidden_dim},
          {"context_embed_dim", c.context_embed_dim},
          {"use_dose", c.use_dose},
          {"use_chemo", c.use_chemo}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.image_width = j.value("image_width", c.image_width);
    c.image_height = j.value("image_height", c.image_height);
    if (j.contains("widths")) c.widths = j.at("widths").get<std::array<int, 3>>();
    if (j.contains("attention_levels")) c.attention_levels = j.at("attention_levels").get<std::vector<int>>();
    c.heads = j.value("heads", c.heads);
    c.context_dim = j.value("context_dim", c.context_dim);
    c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
    c.time_hidden_dim = j.value("time_hidden_dim", c.time_hidden_dim);
    c.context_embed_dim = j.value("context_embed_dim", c.context_embed_dim);
    c.use_dose = j.value("use_dose", c.use_dose);
    c.use_chemo = j.value("use_chemo", c.use_chemo);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_width = 8;
  c.image_height = 8;
  c.widths = {1, 1, 2};
  c.attention_levels = {1, 2};
  c.heads = 1;
  c.context_dim = 2;
  c.time_embed_dim = 2;
  c.time_hidden_dim = 2;
  c.context_embed_dim = 2;
  return c;
}

}  // namespace rfgen
