#pragma once

#include <string>
#include <variant>

#include "fieldseg/nn.hpp"

namespace fieldseg::io {

/// Model configuration document: {"arch":"unet3d"|"fusion", ...}.
using ModelConfig = std::variant<nn::UNet3DConfig, nn::FusionConfig>;

std::string to_json(const nn::UNet3DConfig& cfg);
std::string to_json(const nn::FusionConfig& cfg);
ModelConfig parse_model_config(const std::string& json_text);
ModelConfig read_model_config(const std::string& path);
void write_model_config(const ModelConfig& cfg, const std::string& path);

} // namespace fieldseg::io
