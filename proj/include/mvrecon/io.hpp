#pragma once

#include <map>
#include <string>
#include <vector>

#include "mvrecon/geometry.hpp"
#include "mvrecon/tensor.hpp"

namespace mvr {

// On-disk container: manifest.json plus little-endian float32 / uint8 blobs,
// row-major. Round-trips are bit-exact at the file level.
void save_bundle(const SceneBundle& bundle, const std::string& dir);
SceneBundle load_bundle(const std::string& dir);

// Named-tensor checkpoint in the same container style.
void save_tensors(const std::map<std::string, Tensor>& tensors, const std::string& dir);
std::map<std::string, Tensor> load_tensors(const std::string& dir);

void write_f32_blob(const std::string& path, const std::vector<double>& data);
std::vector<double> read_f32_blob(const std::string& path, std::size_t expected);
void write_u8_blob(const std::string& path, const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> read_u8_blob(const std::string& path, std::size_t expected);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace mvr
