#pragma once

#include "scanfer/data.hpp"
#include "scanfer/model.hpp"
#include "scanfer/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace scanfer {

enum class RebalanceChoice { none, oversample, undersample };

/// Everything a training run needs. Serialized as flat `key = value` lines.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string preset = "desk";  // desk | paper
    ModelConfig model;
    SgdConfig sgd;
    int epochs = 20;
    std::size_t batch_size = 64;
    AugmentPolicy augment;
    bool balanced_sampler = true;
    RebalanceChoice rebalance = RebalanceChoice::none;
    std::optional<Index> rebalance_cap;
    std::filesystem::path train_manifest;
    std::filesystem::path val_manifest;
    std::filesystem::path out_dir = "run";

    void validate() const;
    [[nodiscard]] FitOptions fit_options() const;
};

/// Parses `key = value` lines with `#` comments. Unknown keys, repeated keys
/// and out-of-range values raise ParseError naming the line. Relative paths
/// resolve against `base_dir`.
RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& config);

}  // namespace scanfer
