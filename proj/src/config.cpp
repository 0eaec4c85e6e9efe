#include "scanfer/config.hpp"

#include "scanfer/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace scanfer {

void RunConfig::validate() const {
    model.validate();
    sgd.validate();
    if (preset != "desk" && preset != "paper") throw std::invalid_argument("config: preset must be desk or paper");
    if (epochs < 0) throw std::invalid_argument("config: epochs must be non-negative");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be positive");
    if (rebalance_cap && *rebalance_cap < 1) throw std::invalid_argument("config: rebalance_cap must be at least 1");
    const auto& a = augment;
    if (!(a.flip_prob >= 0 && a.flip_prob <= 1)) throw std::invalid_argument("config: flip_prob must lie in [0, 1]");
    if (!(a.brightness >= 0 && a.brightness <= 1) || !(a.contrast >= 0 && a.contrast <= 1) ||
        !(a.saturation >= 0 && a.saturation <= 1))
        throw std::invalid_argument("config: jitter magnitudes must lie in [0, 1]");
    if (!(a.hue >= 0 && a.hue <= 0.5)) throw std::invalid_argument("config: hue must lie in [0, 0.5]");
}

FitOptions RunConfig::fit_options() const {
    FitOptions opts;
    opts.epochs = epochs;
    opts.seed = seed;
    opts.balanced_sampler = balanced_sampler;
    opts.train.batch_size = batch_size;
    opts.train.augment = augment;
    opts.sgd = sgd;
    return opts;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

struct Entry {
    std::string value;
    std::size_t line;
};

template <typename T>
T parse_number(const Entry& e, const std::string& key) {
    T v{};
    const char* begin = e.value.data();
    const char* end = begin + e.value.size();
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw ParseError("invalid value '" + e.value + "' for key '" + key + "'", e.line);
    return v;
}

double parse_real(const Entry& e, const std::string& key) {
    const double v = parse_number<double>(e, key);
    if (!std::isfinite(v)) throw ParseError("non-finite value for key '" + key + "'", e.line);
    return v;
}

bool parse_bool(const Entry& e, const std::string& key) {
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    throw ParseError("invalid boolean '" + e.value + "' for key '" + key + "'", e.line);
}

std::vector<Index> parse_list(const Entry& e, const std::string& key) {
    std::vector<Index> out;
    std::string_view rest = e.value;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item(trim(rest.substr(0, comma)));
        out.push_back(parse_number<Index>({item, e.line}, key));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    if (out.empty()) throw ParseError("empty list for key '" + key + "'", e.line);
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    std::map<std::string, Entry> entries;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ParseError("empty key", line_no);
        if (!entries.emplace(key, Entry{value, line_no}).second)
            throw ParseError("duplicate key '" + key + "'", line_no);
    }

    RunConfig c;
    auto take = [&](const std::string& key) -> const Entry* {
        const auto it = entries.find(key);
        return it == entries.end() ? nullptr : &it->second;
    };
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
    };

    if (const Entry* e = take("preset")) {
        if (e->value == "paper") {
            c.model.backbone = BackboneConfig::paper();
        } else if (e->value != "desk") {
            throw ParseError("preset must be 'desk' or 'paper'", e->line);
        }
        c.preset = e->value;
    }

    using Setter = std::function<void(const Entry&, const std::string&)>;
    const std::map<std::string, Setter> setters{
        {"preset", [](const Entry&, const std::string&) {}},
        {"seed", [&](const Entry& e, const std::string& k) { c.seed = parse_number<std::uint64_t>(e, k); }},
        {"input_size", [&](const Entry& e, const std::string& k) { c.model.backbone.input_size = parse_number<Index>(e, k); }},
        {"stage_channels", [&](const Entry& e, const std::string& k) { c.model.backbone.channels = parse_list(e, k); }},
        {"tap_u", [&](const Entry& e, const std::string& k) { c.model.backbone.tap_u = parse_number<Index>(e, k); }},
        {"tap_l", [&](const Entry& e, const std::string& k) { c.model.backbone.tap_l = parse_number<Index>(e, k); }},
        {"grid_rows", [&](const Entry& e, const std::string& k) { c.model.grid_rows = parse_number<Index>(e, k); }},
        {"grid_cols", [&](const Entry& e, const std::string& k) { c.model.grid_cols = parse_number<Index>(e, k); }},
        {"cci_rows", [&](const Entry& e, const std::string& k) { c.model.cci_rows = parse_number<Index>(e, k); }},
        {"cci_cols", [&](const Entry& e, const std::string& k) { c.model.cci_cols = parse_number<Index>(e, k); }},
        {"cci_hidden", [&](const Entry& e, const std::string& k) { c.model.cci_hidden = parse_number<Index>(e, k); }},
        {"lambda", [&](const Entry& e, const std::string& k) { c.model.lambda = parse_real(e, k); }},
        {"eca_kernel", [&](const Entry& e, const std::string& k) { c.model.eca_kernel = parse_number<int>(e, k); }},
        {"lr_backbone", [&](const Entry& e, const std::string& k) { c.sgd.lr_backbone = parse_real(e, k); }},
        {"lr_heads", [&](const Entry& e, const std::string& k) { c.sgd.lr_heads = parse_real(e, k); }},
        {"momentum", [&](const Entry& e, const std::string& k) { c.sgd.momentum = parse_real(e, k); }},
        {"weight_decay", [&](const Entry& e, const std::string& k) { c.sgd.weight_decay = parse_real(e, k); }},
        {"lr_decay", [&](const Entry& e, const std::string& k) { c.sgd.decay_factor = parse_real(e, k); }},
        {"epochs", [&](const Entry& e, const std::string& k) { c.epochs = parse_number<int>(e, k); }},
        {"batch_size", [&](const Entry& e, const std::string& k) { c.batch_size = parse_number<std::size_t>(e, k); }},
        {"augment", [&](const Entry& e, const std::string& k) { c.augment.enabled = parse_bool(e, k); }},
        {"flip_prob", [&](const Entry& e, const std::string& k) { c.augment.flip_prob = parse_real(e, k); }},
        {"brightness", [&](const Entry& e, const std::string& k) { c.augment.brightness = parse_real(e, k); }},
        {"contrast", [&](const Entry& e, const std::string& k) { c.augment.contrast = parse_real(e, k); }},
        {"saturation", [&](const Entry& e, const std::string& k) { c.augment.saturation = parse_real(e, k); }},
        {"hue", [&](const Entry& e, const std::string& k) { c.augment.hue = parse_real(e, k); }},
        {"sampler",
         [&](const Entry& e, const std::string&) {
             if (e.value == "balanced") c.balanced_sampler = true;
             else if (e.value == "uniform") c.balanced_sampler = false;
             else throw ParseError("sampler must be 'balanced' or 'uniform'", e.line);
         }},
        {"rebalance",
         [&](const Entry& e, const std::string&) {
             if (e.value == "none") c.rebalance = RebalanceChoice::none;
             else if (e.value == "oversample") c.rebalance = RebalanceChoice::oversample;
             else if (e.value == "undersample") c.rebalance = RebalanceChoice::undersample;
             else throw ParseError("rebalance must be 'none', 'oversample' or 'undersample'", e.line);
         }},
        {"rebalance_cap", [&](const Entry& e, const std::string& k) { c.rebalance_cap = parse_number<Index>(e, k); }},
        {"train_manifest", [&](const Entry& e, const std::string&) { c.train_manifest = resolve(e.value); }},
        {"val_manifest", [&](const Entry& e, const std::string&) { c.val_manifest = resolve(e.value); }},
        {"out_dir", [&](const Entry& e, const std::string&) { c.out_dir = resolve(e.value); }},
    };

    for (const auto& [key, entry] : entries) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ParseError("unknown key '" + key + "'", entry.line);
        it->second(entry, key);
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& ex) {
        throw ParseError(ex.what(), 0);
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::string format_config(const RunConfig& c) {
    std::string out;
    auto put = [&](const std::string& key, const std::string& value) { out += key + " = " + value + "\n"; };
    std::string channels;
    for (std::size_t i = 0; i < c.model.backbone.channels.size(); ++i) {
        if (i) channels += ",";
        channels += std::to_string(c.model.backbone.channels[i]);
    }
    put("seed", std::to_string(c.seed));
    put("preset", c.preset);
    put("input_size", std::to_string(c.model.backbone.input_size));
    put("stage_channels", channels);
    put("tap_u", std::to_string(c.model.backbone.tap_u));
    put("tap_l", std::to_string(c.model.backbone.tap_l));
    put("grid_rows", std::to_string(c.model.grid_rows));
    put("grid_cols", std::to_string(c.model.grid_cols));
    put("cci_rows", std::to_string(c.model.cci_rows));
    put("cci_cols", std::to_string(c.model.cci_cols));
    put("cci_hidden", std::to_string(c.model.cci_hidden));
    put("lambda", num(c.model.lambda));
    put("eca_kernel", std::to_string(c.model.eca_kernel));
    put("lr_backbone", num(c.sgd.lr_backbone));
    put("lr_heads", num(c.sgd.lr_heads));
    put("momentum", num(c.sgd.momentum));
    put("weight_decay", num(c.sgd.weight_decay));
    put("lr_decay", num(c.sgd.decay_factor));
    put("epochs", std::to_string(c.epochs));
    put("batch_size", std::to_string(c.batch_size));
    put("augment", c.augment.enabled ? "true" : "false");
    put("flip_prob", num(c.augment.flip_prob));
    put("brightness", num(c.augment.brightness));
    put("contrast", num(c.augment.contrast));
    put("saturation", num(c.augment.saturation));
    put("hue", num(c.augment.hue));
    put("sampler", c.balanced_sampler ? "balanced" : "uniform");
    put("rebalance", c.rebalance == RebalanceChoice::none         ? "none"
                     : c.rebalance == RebalanceChoice::oversample ? "oversample"
                                                                  : "undersample");
    if (c.rebalance_cap) put("rebalance_cap", std::to_string(*c.rebalance_cap));
    if (!c.train_manifest.empty()) put("train_manifest", c.train_manifest.string());
    if (!c.val_manifest.empty()) put("val_manifest", c.val_manifest.string());
    put("out_dir", c.out_dir.string());
    return out;
}

}  // namespace scanfer
