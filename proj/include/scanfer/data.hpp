#pragma once

#include "scanfer/image.hpp"
#include "scanfer/rng.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scanfer {

inline constexpr std::array<std::string_view, 7> kExpressionNames{
    "neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise"};

std::string_view expression_name(int label);

struct ManifestRecord {
    std::string path;  // as written in the manifest
    int label;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    std::array<Index, 7> class_counts{};
    std::filesystem::path base_dir;  // relative paths resolve against this

    void recount();
    [[nodiscard]] std::filesystem::path resolve(const ManifestRecord& r) const;
};

/// Lines of `path,label`, no header. Errors name the 1-based line.
DatasetManifest parse_manifest(std::string_view text, std::filesystem::path base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);

struct Sample {
    Tensor pixels;  // 3 x S x S in [0, 1]
    int label;
};

/// Decoded, resized images held in memory.
struct ImageSet {
    std::vector<Tensor> images;
    std::vector<int> labels;

    [[nodiscard]] std::size_t size() const { return images.size(); }
    /// Stacks the given indices into an N x 3 x S x S batch.
    [[nodiscard]] Tensor batch(std::span<const std::size_t> indices) const;
};

ImageSet load_images(const DatasetManifest& manifest, Index size);

struct AugmentPolicy {
    bool enabled = true;
    double flip_prob = 0.5;
    double brightness = 0.4;
    double contrast = 0.3;
    double saturation = 0.25;
    double hue = 0.05;
};

/// Concrete draw of the random augmentation parameters.
struct JitterFactors {
    bool flip = false;
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue_shift = 0.0;  // fraction of a full turn
};

JitterFactors draw_jitter(Rng& rng, const AugmentPolicy& policy);

/// Flip, then brightness -> contrast -> saturation -> hue, clamping to [0, 1]
/// after each step. Unit factors with no flip leave the image bit-identical.
Tensor apply_jitter(const Tensor& image, const JitterFactors& factors);
Tensor flip_horizontal(const Tensor& image);

Sample augment(const Sample& sample, Rng& rng, const AugmentPolicy& policy);

/// Draws with replacement, P(j) proportional to 1 / count(label_j).
class ImbalancedSampler {
public:
    ImbalancedSampler(std::span<const int> labels, std::uint64_t seed);

    std::vector<std::size_t> next(std::size_t n);

    [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }
    [[nodiscard]] Rng& rng() noexcept { return rng_; }

private:
    std::vector<double> weights_;
    std::vector<double> cumulative_;
    Rng rng_;
};

enum class RebalanceMode { oversample, undersample };

/// Oversampling cycles each short class's records in file order up to the
/// target (largest class, or `cap`); classes above the target are cut after
/// a seeded shuffle. Undersampling cuts every class to the smallest count
/// (or `cap`, if lower). Output is grouped by class.
DatasetManifest rebalance(const DatasetManifest& manifest, RebalanceMode mode,
                          std::optional<Index> cap = std::nullopt, std::uint64_t seed = 0);

/// Writes per_class class-separable P6 images per expression plus
/// `manifest.csv` into `out_dir`.
DatasetManifest synth_dataset(const std::filesystem::path& out_dir, Index per_class, Index size,
                              std::uint64_t seed);

/// The in-memory image behind synth_dataset for one sample.
Tensor synth_image(int label, Index size, Rng& rng);

}  // namespace scanfer
