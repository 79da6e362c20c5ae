#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gatgpt/backbone.hpp"
#include "gatgpt/dataset.hpp"

namespace gatgpt {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Container layout: an 8-byte little-endian header length, a UTF-8 JSON
/// header mapping each tensor name to {shape, dtype:"f32", offset, frozen},
/// then little-endian float32 payloads at those offsets (relative to the end
/// of the header). The reserved "__metadata__" entry carries the model
/// config and, optionally, normalization statistics as strings.
std::string serialize_checkpoint(const ModelParams& params, const std::optional<NormStats>& stats = std::nullopt);

/// Parses a container. Shapes are validated against the schema implied by
/// the stored config, or by `expected` when given.
ModelParams parse_checkpoint(std::string_view bytes, NormStats* stats = nullptr,
                             const std::optional<ModelConfig>& expected = std::nullopt);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path,
                     const std::optional<NormStats>& stats = std::nullopt);
ModelParams load_checkpoint(const std::filesystem::path& path, NormStats* stats = nullptr,
                            const std::optional<ModelConfig>& expected = std::nullopt);

} // namespace gatgpt
