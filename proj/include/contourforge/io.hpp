#pragma once

#include "contourforge/raster.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace contourforge::io {

// Binary PGM (P5). Writes 0/255; on read any byte >= 128 is true.
std::string encode_pgm(const BinaryMask& mask);
BinaryMask decode_pgm_mask(std::string_view bytes);
/// Gray PGM as a single-channel field in [0, 1] (value / maxval).
ScalarField decode_pgm_field(std::string_view bytes);

/// "FPM1\n<w> <h> <c>\n" followed by c*h*w little-endian float32,
/// channel-major then row-major.
std::string encode_fpm(const ScalarField& field);
ScalarField decode_fpm(std::string_view bytes);

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;
};
/// Raw RGB PPM (P6), maxval 255.
RgbImage decode_ppm(std::string_view bytes);

enum class RasterKind { Fpm, Pgm, Ppm, Unknown };
RasterKind sniff(std::string_view bytes) noexcept;

nlohmann::json polygon_to_json(const Polygon& poly);
Polygon polygon_from_json(const nlohmann::json& j);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);
ScalarField read_field(const std::filesystem::path& path);
void write_field(const std::filesystem::path& path, const ScalarField& field);
/// FPM1 or PGM, chosen by content.
ScalarField read_field_any(const std::filesystem::path& path);
Polygon read_polygon(const std::filesystem::path& path);

}  // namespace contourforge::io
