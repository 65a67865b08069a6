#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "masscade/annotation.hpp"
#include "masscade/image.hpp"

namespace masscade {

// On-disk case layout, one directory per case:
//
//   <dir>/<case_id>/image.png        16-bit grayscale PNG
//   <dir>/<case_id>/breast_mask.png  8-bit grayscale PNG, nonzero = breast
//   <dir>/<case_id>/masses.json      [{"id": "...", "polygon": [[x, y], ...]}, ...]
//   <dir>/<case_id>/meta.json        {"pixel_spacing_um": 70.0, ...}
//
// Polygon coordinates are in pixels with pixel centers on integer coordinates.

/// Writes a 16-bit grayscale PNG. Throws DataError on I/O failure.
void write_png16(const std::filesystem::path& path, const GrayImage16& image);

/// Reads an 8- or 16-bit grayscale PNG; 8-bit samples are widened (v * 257).
GrayImage16 read_png16(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG from raw samples (size = width * height).
void write_png8(const std::filesystem::path& path, int width, int height,
                const std::vector<std::uint8_t>& samples);

/// Writes an 8-bit RGB PNG (samples interleaved, size = 3 * width * height).
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   const std::vector<std::uint8_t>& samples);

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::filesystem::path& path);

void save_case(const MammogramCase& c, const std::filesystem::path& directory);
MammogramCase load_case(const std::filesystem::path& directory, const std::string& case_id);

/// Annotations of one case, rasterized at the width/height recorded in meta.json.
std::vector<MassAnnotation> load_case_masses(const std::filesystem::path& directory,
                                             const std::string& case_id);

/// Case ids present under a dataset directory (subdirectories holding meta.json), sorted.
std::vector<std::string> list_cases(const std::filesystem::path& directory);

}  // namespace masscade
