#pragma once

#include <filesystem>

#include "fetalpose/hourglass.hpp"

namespace fetalpose {

/// `<base>.ckpt.json` manifest {"config":{...},"dtype":"f32","params":[{"name","shape","offset","len"}]}
/// plus `<base>.ckpt.bin`, the little-endian concatenation of all parameters.
void save_checkpoint(const std::filesystem::path& base, const Hourglass<float>& model);
Hourglass<float> load_checkpoint(const std::filesystem::path& base);

std::filesystem::path checkpoint_base(const std::filesystem::path& p);

}  // namespace fetalpose
