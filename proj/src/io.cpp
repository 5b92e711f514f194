#include "contourforge/io.hpp"

#include "contourforge/error.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace contourforge::io {

namespace {

// Whitespace/comment-aware tokenizer for PNM-style headers.
class HeaderReader {
public:
    explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t pos() const noexcept { return pos_; }

    void expect_magic(std::string_view magic) {
        if (bytes_.substr(0, magic.size()) != magic) {
            throw FormatError("bad magic, expected '" + std::string(magic) + "'", 0);
        }
        pos_ = magic.size();
    }

    long next_int(const char* what, bool allow_comments) {
        skip_space(allow_comments);
        const std::size_t start = pos_;
        long value = 0;
        const char* first = bytes_.data() + pos_;
        const char* last = bytes_.data() + bytes_.size();
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr == first) {
            throw FormatError(std::string("expected integer ") + what, start);
        }
        pos_ += static_cast<std::size_t>(ptr - first);
        return value;
    }

    // Exactly one whitespace byte separates the header from the payload.
    void single_space() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
            throw FormatError("expected whitespace before payload", pos_);
        }
        ++pos_;
    }

    void expect_char(char c) {
        if (pos_ >= bytes_.size() || bytes_[pos_] != c) {
            throw FormatError(std::string("expected '") + (c == '\n' ? "\\n" : std::string(1, c)) + "'",
                              pos_);
        }
        ++pos_;
    }

private:
    static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

    void skip_space(bool allow_comments) {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (allow_comments && bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

struct PnmHeader {
    int width = 0;
    int height = 0;
    int maxval = 0;
    std::size_t payload = 0;
};

PnmHeader read_pnm_header(std::string_view bytes, std::string_view magic, int samples) {
    HeaderReader r(bytes);
    r.expect_magic(magic);
    PnmHeader h;
    const std::size_t wpos = r.pos();
    const long w = r.next_int("width", true);
    const long hh = r.next_int("height", true);
    const std::size_t mpos = r.pos();
    const long maxval = r.next_int("maxval", true);
    if (w <= 0 || hh <= 0 || w > 1 << 16 || hh > 1 << 16) throw FormatError("invalid dimensions", wpos);
    if (maxval <= 0 || maxval > 255) throw FormatError("unsupported maxval (8-bit only)", mpos);
    r.single_space();
    h.width = static_cast<int>(w);
    h.height = static_cast<int>(hh);
    h.maxval = static_cast<int>(maxval);
    h.payload = r.pos();
    const std::size_t need = static_cast<std::size_t>(w) * hh * samples;
    if (bytes.size() - h.payload < need) {
        throw FormatError("truncated pixel data: need " + std::to_string(need) + " bytes", bytes.size());
    }
    return h;
}

float load_f32_le(const char* p) {
    std::uint32_t u = 0;
    std::memcpy(&u, p, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    return std::bit_cast<float>(u);
}

void store_f32_le(char* p, float f) {
    auto u = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(p, &u, 4);
}

}  // namespace

std::string encode_pgm(const BinaryMask& mask) {
    std::string out = "P5\n" + std::to_string(mask.width()) + " " + std::to_string(mask.height()) + "\n255\n";
    const std::size_t header = out.size();
    out.resize(header + mask.size());
    auto bits = mask.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) out[header + i] = static_cast<char>(bits[i] ? 255 : 0);
    return out;
}

BinaryMask decode_pgm_mask(std::string_view bytes) {
    const auto h = read_pnm_header(bytes, "P5", 1);
    BinaryMask mask(h.width, h.height);
    auto bits = mask.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) {
        bits[i] = static_cast<unsigned char>(bytes[h.payload + i]) >= 128 ? 1 : 0;
    }
    return mask;
}

ScalarField decode_pgm_field(std::string_view bytes) {
    const auto h = read_pnm_header(bytes, "P5", 1);
    ScalarField f(h.width, h.height, 1);
    auto v = f.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<unsigned char>(bytes[h.payload + i]) / static_cast<double>(h.maxval);
    }
    return f;
}

RgbImage decode_ppm(std::string_view bytes) {
    const auto h = read_pnm_header(bytes, "P6", 3);
    RgbImage img;
    img.width = h.width;
    img.height = h.height;
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload),
                   bytes.begin() + static_cast<std::ptrdiff_t>(h.payload + 3ull * h.width * h.height));
    return img;
}

std::string encode_fpm(const ScalarField& field) {
    std::string out = "FPM1\n" + std::to_string(field.width()) + " " + std::to_string(field.height()) +
                      " " + std::to_string(field.channels()) + "\n";
    const std::size_t header = out.size();
    out.resize(header + 4 * field.size());
    auto v = field.values();
    for (std::size_t i = 0; i < v.size(); ++i) store_f32_le(out.data() + header + 4 * i, static_cast<float>(v[i]));
    return out;
}

ScalarField decode_fpm(std::string_view bytes) {
    HeaderReader r(bytes);
    r.expect_magic("FPM1");
    r.expect_char('\n');
    const std::size_t wpos = r.pos();
    const long w = r.next_int("width", false);
    r.expect_char(' ');
    const long h = r.next_int("height", false);
    r.expect_char(' ');
    const long c = r.next_int("channels", false);
    r.expect_char('\n');
    if (w <= 0 || h <= 0 || c <= 0 || w > 1 << 16 || h > 1 << 16 || c > 64) {
        throw FormatError("invalid FPM1 shape", wpos);
    }
    const std::size_t payload = r.pos();
    const std::size_t count = static_cast<std::size_t>(w) * h * c;
    if (bytes.size() - payload < 4 * count) {
        throw FormatError("truncated FPM1 payload: need " + std::to_string(4 * count) + " bytes", bytes.size());
    }
    if (bytes.size() - payload > 4 * count) {
        throw FormatError("trailing bytes after FPM1 payload", payload + 4 * count);
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const float f = load_f32_le(bytes.data() + payload + 4 * i);
        if (!std::isfinite(f)) throw FormatError("non-finite value in FPM1 payload", payload + 4 * i);
        values[i] = f;
    }
    return ScalarField(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(values));
}

RasterKind sniff(std::string_view bytes) noexcept {
    if (bytes.substr(0, 4) == "FPM1") return RasterKind::Fpm;
    if (bytes.substr(0, 2) == "P5") return RasterKind::Pgm;
    if (bytes.substr(0, 2) == "P6") return RasterKind::Ppm;
    return RasterKind::Unknown;
}

nlohmann::json polygon_to_json(const Polygon& poly) {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : poly.vertices) verts.push_back({v.x, v.y});
    return {{"closed", poly.closed}, {"vertices", std::move(verts)}};
}

Polygon polygon_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("vertices") || !j["vertices"].is_array()) {
        throw DomainError("polygon JSON must be an object with a 'vertices' array");
    }
    Polygon p;
    p.closed = j.value("closed", true);
    for (const auto& v : j["vertices"]) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw DomainError("polygon vertex must be [x, y]");
        }
        p.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    return p;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

BinaryMask read_mask(const std::filesystem::path& path) { return decode_pgm_mask(read_file(path)); }

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    write_file(path, encode_pgm(mask));
}

ScalarField read_field(const std::filesystem::path& path) { return decode_fpm(read_file(path)); }

void write_field(const std::filesystem::path& path, const ScalarField& field) {
    write_file(path, encode_fpm(field));
}

ScalarField read_field_any(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    switch (sniff(bytes)) {
        case RasterKind::Fpm: return decode_fpm(bytes);
        case RasterKind::Pgm: return decode_pgm_field(bytes);
        default: throw FormatError("unrecognized raster format in " + path.string(), 0);
    }
}

Polygon read_polygon(const std::filesystem::path& path) {
    const auto text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("invalid polygon JSON: ") + e.what(), e.byte);
    }
    return polygon_from_json(j);
}

}  // namespace contourforge::io
