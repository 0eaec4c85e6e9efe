#include "scanfer/image.hpp"

#include "scanfer/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace scanfer {

namespace {

struct NetpbmHeader {
    Index width;
    Index height;
    std::size_t data_offset;
};

NetpbmHeader parse_header(const Bytes& bytes, const char* magic) {
    if (bytes.size() < 2 || bytes[0] != static_cast<std::uint8_t>(magic[0]) ||
        bytes[1] != static_cast<std::uint8_t>(magic[1]))
        throw FormatError(std::string("bad magic: expected ") + magic);
    std::size_t pos = 2;
    auto read_number = [&]() -> long {
        for (;;) {
            while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("truncated or malformed header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 1'000'000) throw FormatError("header value out of range");
            ++pos;
        }
        return v;
    };
    const long w = read_number();
    const long h = read_number();
    const long maxval = read_number();
    if (w < 1 || h < 1) throw FormatError("image dimensions must be positive");
    if (maxval != 255) throw FormatError("only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("truncated header");
    ++pos;
    return {w, h, pos};
}

std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Exact when both endpoints agree, so constant images stay constant.
double lerp(double a, double b, double t) { return a + (b - a) * t; }

Bytes header(const char* magic, Index w, Index h) {
    const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    return Bytes(s.begin(), s.end());
}

}  // namespace

Tensor decode_ppm(const Bytes& bytes) {
    const auto hd = parse_header(bytes, "P6");
    const Index n = hd.width * hd.height;
    if (bytes.size() - hd.data_offset < static_cast<std::size_t>(3 * n)) throw FormatError("truncated PPM payload");
    Tensor img({3, hd.height, hd.width});
    for (Index p = 0; p < n; ++p)
        for (Index c = 0; c < 3; ++c)
            img[c * n + p] = bytes[hd.data_offset + static_cast<std::size_t>(3 * p + c)] / 255.0;
    return img;
}

Bytes encode_ppm(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("encode_ppm: expected 3 x H x W");
    const Index h = image.dim(1), w = image.dim(2), n = h * w;
    Bytes out = header("P6", w, h);
    out.reserve(out.size() + static_cast<std::size_t>(3 * n));
    for (Index p = 0; p < n; ++p)
        for (Index c = 0; c < 3; ++c) out.push_back(quantize(image[c * n + p]));
    return out;
}

Tensor decode_pgm(const Bytes& bytes) {
    const auto hd = parse_header(bytes, "P5");
    const Index n = hd.width * hd.height;
    if (bytes.size() - hd.data_offset < static_cast<std::size_t>(n)) throw FormatError("truncated PGM payload");
    Tensor img({hd.height, hd.width});
    for (Index p = 0; p < n; ++p) img[p] = bytes[hd.data_offset + static_cast<std::size_t>(p)] / 255.0;
    return img;
}

Bytes encode_pgm(const Tensor& gray) {
    if (gray.rank() != 2) throw ShapeError("encode_pgm: expected H x W");
    Bytes out = header("P5", gray.dim(1), gray.dim(0));
    for (Index p = 0; p < gray.size(); ++p) out.push_back(quantize(gray[p]));
    return out;
}

Tensor resize_bilinear(const Tensor& image, Index size) {
    if (image.rank() != 3) throw ShapeError("resize_bilinear: expected C x H x W");
    if (size < 1) throw std::invalid_argument("resize_bilinear: size must be positive");
    const Index c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (h == size && w == size) return image;

    struct Tap {
        Index i0, i1;
        double frac;
    };
    auto taps = [size](Index in) {
        std::vector<Tap> t(static_cast<std::size_t>(size));
        const double ratio = static_cast<double>(in) / static_cast<double>(size);
        for (Index o = 0; o < size; ++o) {
            const double src = std::clamp((static_cast<double>(o) + 0.5) * ratio - 0.5, 0.0,
                                          static_cast<double>(in - 1));
            const auto i0 = static_cast<Index>(std::floor(src));
            t[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
        }
        return t;
    };
    const auto ty = taps(h);
    const auto tx = taps(w);
    Tensor out({c, size, size});
    for (Index ch = 0; ch < c; ++ch) {
        const double* src = image.data().data() + ch * h * w;
        for (Index oy = 0; oy < size; ++oy) {
            const auto& a = ty[static_cast<std::size_t>(oy)];
            for (Index ox = 0; ox < size; ++ox) {
                const auto& b = tx[static_cast<std::size_t>(ox)];
                const double top = lerp(src[a.i0 * w + b.i0], src[a.i0 * w + b.i1], b.frac);
                const double bot = lerp(src[a.i1 * w + b.i0], src[a.i1 * w + b.i1], b.frac);
                out[(ch * size + oy) * size + ox] = lerp(top, bot, a.frac);
            }
        }
    }
    return out;
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace scanfer
