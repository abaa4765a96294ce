#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gapccot/network.hpp"

namespace gapccot {

/// GCOT1 checkpoint layout (little-endian):
///   "GCOT1" | u32 record count
///   per record: u32 name length | name | u32 rank | u64 dims[rank] | f32 values
///   u64 manifest length | manifest (JSON architecture description)
/// Records appear in parameter-name order.
template <typename T>
std::string encode_checkpoint(const GapCcotNet<T>& net);

/// Loads values into `net`. Every record name and shape must match the
/// network's parameters exactly, otherwise FormatError.
template <typename T>
void decode_checkpoint(std::string_view bytes, GapCcotNet<T>& net);

/// Architecture stored in a checkpoint's manifest.
GapCcotConfig checkpoint_config(std::string_view bytes);

template <typename T>
void save_checkpoint(const GapCcotNet<T>& net, const std::filesystem::path& path);

template <typename T>
void load_checkpoint(const std::filesystem::path& path, GapCcotNet<T>& net);

/// Builds a float network from the manifest and loads its weights.
GapCcotNet<float> load_network(const std::filesystem::path& path);

}  // namespace gapccot
