#include "scanfer/checkpoint.hpp"

#include "scanfer/errors.hpp"

#include <bit>
#include <cstring>

namespace scanfer {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'F', 'R'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    void tensor(const std::string& name, const Tensor& t) {
        str(name);
        u32(static_cast<std::uint32_t>(t.rank()));
        for (Index d : t.shape()) u64(static_cast<std::uint64_t>(d));
        for (double v : t.values()) f64(v);
    }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class Reader {
public:
    explicit Reader(const Bytes& in) : in_(in) {}

    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::uint8_t u8() {
        need(1);
        return in_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::pair<std::string, Tensor> tensor() {
        std::string name = str();
        const std::uint32_t rank = u32();
        if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank " + std::to_string(rank));
        Shape shape;
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::uint64_t d = u64();
            if (d == 0 || d > (1ULL << 32)) throw FormatError("tensor '" + name + "' has an invalid dimension");
            count *= d;
            if (count > (1ULL << 34)) throw FormatError("tensor '" + name + "' is implausibly large");
            shape.push_back(static_cast<Index>(d));
        }
        need(count * 8);
        Tensor t(shape);
        for (Index i = 0; i < t.size(); ++i) t[i] = f64();
        return {std::move(name), std::move(t)};
    }
    [[nodiscard]] bool done() const { return pos_ == in_.size(); }

private:
    const Bytes& in_;
    std::size_t pos_ = 0;
};

}  // namespace

Bytes encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kCheckpointVersion);
    w.str(format_config(ckpt.config));
    for (std::uint64_t s : ckpt.rng) w.u64(s);
    w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) w.tensor(name, t);
    w.u8(ckpt.optimizer ? 1 : 0);
    if (ckpt.optimizer) {
        w.u32(static_cast<std::uint32_t>(ckpt.optimizer->epoch));
        w.u32(static_cast<std::uint32_t>(ckpt.optimizer->velocity.size()));
        for (const auto& [name, t] : ckpt.optimizer->velocity) w.tensor(name, t);
    }
    return w.take();
}

Checkpoint decode_checkpoint(const Bytes& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("not a checkpoint: bad magic (expected \"SCFR\")");
    Reader r(bytes);
    for (int i = 0; i < 4; ++i) r.u8();
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
    Checkpoint ckpt;
    try {
        ckpt.config = parse_config(r.str());
    } catch (const ParseError& e) {
        throw FormatError(std::string("checkpoint config snapshot: ") + e.what());
    }
    for (auto& s : ckpt.rng) s = r.u64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) ckpt.tensors.push_back(r.tensor());
    const std::uint8_t has_opt = r.u8();
    if (has_opt > 1) throw FormatError("corrupt optimizer flag");
    if (has_opt) {
        OptimizerSnapshot opt;
        opt.epoch = static_cast<int>(r.u32());
        const std::uint32_t n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) opt.velocity.insert(r.tensor());
        ckpt.optimizer = std::move(opt);
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
    return ckpt;
}

Checkpoint make_checkpoint(const FerModel& model, const RunConfig& config, const Rng::State& rng,
                           const SgdState* optimizer) {
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.tensors = model.snapshot();
    ckpt.rng = rng;
    if (optimizer) ckpt.optimizer = OptimizerSnapshot{optimizer->epoch, optimizer->velocity};
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

FerModel model_from_checkpoint(const Checkpoint& ckpt) {
    FerModel model = FerModel::create(ckpt.config.model, ckpt.config.seed);
    model.restore(ckpt.tensors);
    return model;
}

}  // namespace scanfer
