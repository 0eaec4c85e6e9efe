#include "scanfer/data.hpp"

#include "scanfer/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scanfer {

std::string_view expression_name(int label) {
    if (label < 0 || label >= static_cast<int>(kExpressionNames.size()))
        throw std::out_of_range("expression label " + std::to_string(label) + " outside [0, 6]");
    return kExpressionNames[static_cast<std::size_t>(label)];
}

void DatasetManifest::recount() {
    class_counts.fill(0);
    for (const auto& r : records) ++class_counts[static_cast<std::size_t>(r.label)];
}

std::filesystem::path DatasetManifest::resolve(const ManifestRecord& r) const {
    const std::filesystem::path p(r.path);
    return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest parse_manifest(std::string_view text, std::filesystem::path base_dir) {
    DatasetManifest m;
    m.base_dir = std::move(base_dir);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const std::size_t comma = line.rfind(',');
        if (comma == std::string_view::npos || comma == 0)
            throw ParseError("expected 'path,label' but got '" + std::string(line) + "'", line_no);
        const std::string_view label_text = line.substr(comma + 1);
        int label = -1;
        const auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
        if (ec != std::errc{} || ptr != label_text.data() + label_text.size())
            throw ParseError("label '" + std::string(label_text) + "' is not an integer", line_no);
        if (label < 0 || label > 6)
            throw ParseError("label " + std::to_string(label) + " outside [0, 6] in '" + std::string(line) + "'",
                             line_no);
        m.records.push_back({std::string(line.substr(0, comma)), label});
    }
    m.recount();
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_manifest(ss.str(), path.parent_path());
}

std::string format_manifest(const DatasetManifest& manifest) {
    std::string out;
    for (const auto& r : manifest.records) out += r.path + "," + std::to_string(r.label) + "\n";
    return out;
}

Tensor ImageSet::batch(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw std::invalid_argument("ImageSet::batch: no indices");
    const Tensor& first = images.at(indices.front());
    Shape shape{static_cast<Index>(indices.size())};
    shape.insert(shape.end(), first.shape().begin(), first.shape().end());
    Tensor out(shape);
    const Index stride = first.size();
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.data().segment(static_cast<Index>(i) * stride, stride) = images.at(indices[i]).data();
    return out;
}

ImageSet load_images(const DatasetManifest& manifest, Index size) {
    ImageSet set;
    for (const auto& r : manifest.records) {
        set.images.push_back(resize_bilinear(decode_ppm(read_file(manifest.resolve(r))), size));
        set.labels.push_back(r.label);
    }
    return set;
}

JitterFactors draw_jitter(Rng& rng, const AugmentPolicy& p) {
    JitterFactors f;
    if (!p.enabled) return f;
    f.flip = rng.uniform() < p.flip_prob;
    f.brightness = rng.uniform(1.0 - p.brightness, 1.0 + p.brightness);
    f.contrast = rng.uniform(1.0 - p.contrast, 1.0 + p.contrast);
    f.saturation = rng.uniform(1.0 - p.saturation, 1.0 + p.saturation);
    f.hue_shift = rng.uniform(-p.hue, p.hue);
    return f;
}

Tensor flip_horizontal(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("flip_horizontal: expected C x H x W");
    const Index rows = image.dim(0) * image.dim(1), w = image.dim(2);
    Tensor out(image.shape());
    out.matrix(rows, w) = image.matrix(rows, w).rowwise().reverse();
    return out;
}

namespace {

constexpr double kLuma[3] = {0.299, 0.587, 0.114};

void clamp01(Tensor& t) { t.data() = t.data().cwiseMax(0.0).cwiseMin(1.0); }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0.0 ? d / mx : 0.0;
    if (d <= 0.0) {
        h = 0.0;
    } else if (mx == r) {
        h = std::fmod((g - b) / d + 6.0, 6.0) / 6.0;
    } else if (mx == g) {
        h = ((b - r) / d + 2.0) / 6.0;
    } else {
        h = ((r - g) / d + 4.0) / 6.0;
    }
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double h6 = h * 6.0;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
}

}  // namespace

Tensor apply_jitter(const Tensor& image, const JitterFactors& f) {
    if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("apply_jitter: expected 3 x H x W");
    Tensor out = f.flip ? flip_horizontal(image) : image;
    const Index n = image.dim(1) * image.dim(2);
    auto plane = [&](Index c) { return out.data().segment(c * n, n); };

    if (f.brightness != 1.0) {
        out.data() *= f.brightness;
        clamp01(out);
    }
    if (f.contrast != 1.0) {
        double mean = 0.0;
        for (Index c = 0; c < 3; ++c) mean += kLuma[c] * plane(c).sum();
        mean /= static_cast<double>(n);
        out.data() = (f.contrast * out.data().array() + (1.0 - f.contrast) * mean).matrix();
        clamp01(out);
    }
    if (f.saturation != 1.0) {
        const Eigen::VectorXd luma = kLuma[0] * plane(0) + kLuma[1] * plane(1) + kLuma[2] * plane(2);
        for (Index c = 0; c < 3; ++c) plane(c) = f.saturation * plane(c) + (1.0 - f.saturation) * luma;
        clamp01(out);
    }
    if (f.hue_shift != 0.0) {
        for (Index p = 0; p < n; ++p) {
            double h, s, v;
            rgb_to_hsv(out[p], out[n + p], out[2 * n + p], h, s, v);
            h = h + f.hue_shift;
            h -= std::floor(h);
            hsv_to_rgb(h, s, v, out[p], out[n + p], out[2 * n + p]);
        }
        clamp01(out);
    }
    return out;
}

Sample augment(const Sample& sample, Rng& rng, const AugmentPolicy& policy) {
    if (!policy.enabled) return sample;
    return {apply_jitter(sample.pixels, draw_jitter(rng, policy)), sample.label};
}

ImbalancedSampler::ImbalancedSampler(std::span<const int> labels, std::uint64_t seed) : rng_(seed) {
    if (labels.empty()) throw std::invalid_argument("sampler: empty dataset");
    std::array<Index, 7> counts{};
    for (int y : labels) {
        if (y < 0 || y > 6) throw std::out_of_range("sampler: label outside [0, 6]");
        ++counts[static_cast<std::size_t>(y)];
    }
    double acc = 0.0;
    for (int y : labels) {
        const double w = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(y)]);
        weights_.push_back(w);
        acc += w;
        cumulative_.push_back(acc);
    }
}

std::vector<std::size_t> ImbalancedSampler::next(std::size_t n) {
    std::vector<std::size_t> out;
    out.reserve(n);
    const double total = cumulative_.back();
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng_.uniform() * total;
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        out.push_back(static_cast<std::size_t>(it - cumulative_.begin()));
    }
    return out;
}

DatasetManifest rebalance(const DatasetManifest& manifest, RebalanceMode mode, std::optional<Index> cap,
                          std::uint64_t seed) {
    if (manifest.records.empty()) throw std::invalid_argument("rebalance: empty manifest");
    if (cap && *cap < 1) throw std::invalid_argument("rebalance: cap must be at least 1");
    std::array<std::vector<ManifestRecord>, 7> by_class;
    for (const auto& r : manifest.records) by_class[static_cast<std::size_t>(r.label)].push_back(r);

    Index largest = 0, smallest = std::numeric_limits<Index>::max();
    for (const auto& v : by_class) {
        if (v.empty()) continue;
        largest = std::max(largest, static_cast<Index>(v.size()));
        smallest = std::min(smallest, static_cast<Index>(v.size()));
    }
    Index target = mode == RebalanceMode::oversample ? largest : smallest;
    if (cap) target = mode == RebalanceMode::oversample ? *cap : std::min(target, *cap);

    Rng rng(seed);
    DatasetManifest out;
    out.base_dir = manifest.base_dir;
    for (auto& recs : by_class) {
        const auto count = static_cast<Index>(recs.size());
        if (count == 0) continue;
        if (count > target) {
            for (Index i = count - 1; i > 0; --i)
                std::swap(recs[static_cast<std::size_t>(i)],
                          recs[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
            recs.resize(static_cast<std::size_t>(target));
            out.records.insert(out.records.end(), recs.begin(), recs.end());
        } else {
            for (Index i = 0; i < target; ++i) out.records.push_back(recs[static_cast<std::size_t>(i % count)]);
        }
    }
    out.recount();
    return out;
}

namespace {

constexpr double kPalette[7][3] = {
    {0.60, 0.60, 0.60}, {0.90, 0.20, 0.20}, {0.30, 0.80, 0.20}, {0.60, 0.30, 0.80},
    {0.95, 0.85, 0.20}, {0.20, 0.35, 0.90}, {0.20, 0.85, 0.85},
};

double pattern(int label, double u, double v, double phase, double cu, double cv) {
    constexpr double two_pi = 6.283185307179586;
    const double r = std::hypot(u - cu, v - cv);
    switch (label) {
        case 0: return 0.5 + 0.5 * std::sin(two_pi * (3.0 * v + phase));
        case 1: return 0.5 + 0.5 * std::sin(two_pi * (3.0 * u + phase));
        case 2: return static_cast<double>((static_cast<int>(std::floor(4.0 * u + phase)) +
                                            static_cast<int>(std::floor(4.0 * v + phase))) % 2);
        case 3: return r < 0.3 ? 1.0 : 0.0;
        case 4: return 0.5 + 0.5 * std::sin(two_pi * (3.0 * (u + v) + phase));
        case 5: return std::abs(r - 0.3) < 0.08 ? 1.0 : 0.0;
        default: return (std::abs(u - cu) < 0.1 || std::abs(v - cv) < 0.1) ? 1.0 : 0.0;
    }
}

}  // namespace

Tensor synth_image(int label, Index size, Rng& rng) {
    if (label < 0 || label > 6) throw std::out_of_range("synth_image: label outside [0, 6]");
    const double phase = rng.uniform();
    const double cu = 0.5 + rng.uniform(-0.05, 0.05);
    const double cv = 0.5 + rng.uniform(-0.05, 0.05);
    Tensor img({3, size, size});
    const Index n = size * size;
    for (Index y = 0; y < size; ++y)
        for (Index x = 0; x < size; ++x) {
            const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(size);
            const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(size);
            const double p = pattern(label, u, v, phase, cu, cv);
            for (Index c = 0; c < 3; ++c) {
                const double value = kPalette[label][c] * (0.35 + 0.65 * p) + 0.05 * rng.normal();
                img[c * n + y * size + x] = std::clamp(value, 0.0, 1.0);
            }
        }
    return img;
}

DatasetManifest synth_dataset(const std::filesystem::path& out_dir, Index per_class, Index size,
                              std::uint64_t seed) {
    if (per_class < 1) throw std::invalid_argument("synth_dataset: per_class must be at least 1");
    if (size < 1) throw std::invalid_argument("synth_dataset: size must be positive");
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw std::runtime_error("cannot create '" + (out_dir / "images").string() + "': " + ec.message());
    Rng rng(seed);
    DatasetManifest m;
    m.base_dir = out_dir;
    for (int label = 0; label < 7; ++label) {
        for (Index i = 0; i < per_class; ++i) {
            const std::string rel = "images/" + std::to_string(label) + "_" + std::string(kExpressionNames[static_cast<std::size_t>(label)]) +
                                    "_" + std::to_string(i) + ".ppm";
            write_file(out_dir / rel, encode_ppm(synth_image(label, size, rng)));
            m.records.push_back({rel, label});
        }
    }
    m.recount();
    const std::string text = format_manifest(m);
    write_file(out_dir / "manifest.csv", Bytes(text.begin(), text.end()));
    return m;
}

}  // namespace scanfer
