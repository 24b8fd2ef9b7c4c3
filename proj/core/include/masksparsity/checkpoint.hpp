#pragma once

#include <filesystem>
#include <string>

#include "masksparsity/data.hpp"
#include "masksparsity/graph.hpp"

namespace masksparsity {

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& data);

/// Container file: 8-byte magic, little-endian u64 manifest length, JSON
/// manifest (layer table, tensor shapes, dtypes, byte offsets, per-tensor
/// SHA-256 checksums, format version), then the raw little-endian tensor
/// blobs. Offsets are relative to the start of the data section.
void save_checkpoint(const ModelGraph& graph, const std::filesystem::path& path);
ModelGraph load_checkpoint(const std::filesystem::path& path);

/// Digest over every tensor in the model (parameters and running statistics);
/// equal digests mean equal state.
std::string model_state_digest(const ModelGraph& graph);

/// Datasets share the container format (images f32, labels i32).
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::string dataset_digest(const Dataset& dataset);

}  // namespace masksparsity
