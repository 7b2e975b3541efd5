#pragma once

#include <string>

#include "fieldseg/nn.hpp"

namespace fieldseg::io {

/// Weights file: one line of JSON manifest (name/shape/init_rule/seed/offset
/// per tensor) followed by a single little-endian IEEE-754 float64 blob.
/// Round-trips bit-exactly.
void write_weights(const nn::ModelWeights& w, const std::string& path);
nn::ModelWeights read_weights(const std::string& path);

} // namespace fieldseg::io
