#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>

namespace scanfer {

/// Command entry points behind the `scanfer` tool. Each returns a process
/// exit code and reports errors on `err` instead of throwing.

/// `seed`, when given, overrides the config's seed.
int cmd_train(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed, std::ostream& out,
              std::ostream& err);

/// Writes the report to `report_path`, or next to the checkpoint when empty.
int cmd_eval(const std::filesystem::path& ckpt, const std::filesystem::path& manifest,
             const std::filesystem::path& report_path, std::ostream& out, std::ostream& err);

int cmd_gradcam(const std::filesystem::path& ckpt, const std::filesystem::path& image,
                std::optional<int> target_class, const std::filesystem::path& out_dir, std::ostream& out,
                std::ostream& err);

int cmd_synth_data(const std::filesystem::path& out_dir, long per_class, std::uint64_t seed, long size,
                   std::ostream& out, std::ostream& err);

/// Full-model finite-difference audit on a batch of two synthetic images.
/// Nonzero exit when any checked coordinate reaches relative error 1e-4.
int cmd_check_grad(const std::optional<std::filesystem::path>& config_path, std::optional<std::uint64_t> seed,
                   std::ostream& out, std::ostream& err);

}  // namespace scanfer
