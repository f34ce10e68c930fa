#pragma once

#include <string>

#include "splashlab/nn.hpp"

namespace splashlab {

/// Checkpoint layout: 8-byte magic, little-endian u64 header length, JSON
/// header (architecture, activation, init scheme, provenance), then every
/// registry tensor's doubles, little-endian, in registry order.
void save_checkpoint(const Model& model, const ModelConfig& config, const std::string& path,
                     const std::string& provenance_json = "{}");

struct LoadedModel {
    Model model;
    ModelConfig config;
    std::string header_json;
};

LoadedModel load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

std::string activation_to_json(const ActivationKind& kind);
ActivationKind activation_from_json(const std::string& text);

} // namespace splashlab
