#pragma once

#include "scanfer/config.hpp"
#include "scanfer/image.hpp"
#include "scanfer/rng.hpp"

#include <filesystem>
#include <optional>

namespace scanfer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerSnapshot {
    int epoch = 0;
    std::map<std::string, Tensor> velocity;

    friend bool operator==(const OptimizerSnapshot&, const OptimizerSnapshot&) = default;
};

/// Layout, all integers and reals little-endian:
///   "SCFR" | u32 version | u32 n + config text | 4 x u64 rng state |
///   u32 count | count x (u32 n + name | u32 rank | rank x u64 dims | f64 data) |
///   u8 has_optimizer [| i32 epoch | u32 count | velocity records]
struct Checkpoint {
    RunConfig config;
    StateDict tensors;  // parameters and batch-norm running statistics
    Rng::State rng{};
    std::optional<OptimizerSnapshot> optimizer;
};

Bytes encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic, unknown version, truncation or trailing bytes.
Checkpoint decode_checkpoint(const Bytes& bytes);

Checkpoint make_checkpoint(const FerModel& model, const RunConfig& config, const Rng::State& rng,
                           const SgdState* optimizer = nullptr);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model described by the checkpoint's config and loads its tensors.
FerModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace scanfer
