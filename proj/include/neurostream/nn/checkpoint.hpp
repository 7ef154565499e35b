#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "neurostream/nn/layers.hpp"

// Parameter checkpoint container: magic "NSAE" + version 1, a manifest of
// (dotted tensor name, shape, byte offset), then one blob of raw
// little-endian 32-bit floats. Field-by-field layout in docs/FORMATS.md.

namespace neurostream::nn {

struct CorruptCheckpoint : Error {
  using Error::Error;
};

struct TensorRecord {
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

using CheckpointMap = std::map<std::string, TensorRecord>;

void checkpoint_write(const std::string& path,
                      const std::vector<std::pair<std::string, TensorRecord>>& tensors);
CheckpointMap checkpoint_read(const std::string& path);

template <typename T>
void checkpoint_save(const std::string& path, const std::vector<StateRef<T>>& state) {
  std::vector<std::pair<std::string, TensorRecord>> tensors;
  tensors.reserve(state.size());
  for (const auto& s : state) {
    TensorRecord rec;
    rec.shape = s.value->shape();
    rec.data.resize(s.value->numel());
    const T* p = s.value->ptr();
    for (std::size_t i = 0; i < rec.data.size(); ++i)
      rec.data[i] = static_cast<float>(p[i]);
    tensors.emplace_back(s.name, std::move(rec));
  }
  checkpoint_write(path, tensors);
}

// Strict load: every expected tensor present with the exact shape, and no
// unknown tensors left over. Errors name the offending tensor.
template <typename T>
void checkpoint_load(const std::string& path, const std::vector<StateRef<T>>& state) {
  CheckpointMap map = checkpoint_read(path);
  // Validate every tensor before touching the model.
  std::size_t matched = 0;
  for (const auto& s : state) {
    auto it = map.find(s.name);
    if (it == map.end())
      throw CorruptCheckpoint("checkpoint " + path + " is missing tensor '" + s.name + "'");
    // a well-formed file for a different architecture is a shape problem,
    // not corruption
    if (it->second.shape != s.value->shape())
      throw ShapeMismatch("checkpoint tensor '" + s.name + "' has shape " +
                          shape_str(it->second.shape) + ", model expects " +
                          shape_str(s.value->shape()));
    ++matched;
  }
  if (matched != map.size())
    for (const auto& [name, rec] : map) {
      bool known = false;
      for (const auto& s : state) known = known || s.name == name;
      if (!known)
        throw CorruptCheckpoint("checkpoint " + path + " contains unknown tensor '" +
                                name + "'");
    }
  for (const auto& s : state) {
    const TensorRecord& rec = map.at(s.name);
    T* p = s.value->ptr();
    for (std::size_t i = 0; i < rec.data.size(); ++i) p[i] = static_cast<T>(rec.data[i]);
  }
}

}  // namespace neurostream::nn
