#pragma once

#include <vector>

#include "masscade/annotation.hpp"
#include "masscade/image.hpp"

namespace masscade {

struct PreprocessConfig {
  int downsample_factor = 4;
  /// Multiple of the uniform bin height (tile in-mask count / bins). At 1.00
  /// every tile histogram is flattened to at most the uniform height before
  /// redistribution, which is a strong equalization.
  double clahe_clip_limit = 1.00;
  int clahe_tile_rows = 4;
  int clahe_tile_cols = 4;
  int clahe_bins = 1024;

  void validate() const;
  bool operator==(const PreprocessConfig&) const = default;
};

/// Zeroes pixels outside the mask and stretches the in-mask range linearly to
/// [0, 65535]. A constant in-mask region maps to 0. Throws on an empty mask.
GrayImage16 rescale_contrast(const GrayImage16& image, const BinaryMask& mask);

/// Block-mean downsampling; output dims are ceil(dims / factor) and partial
/// edge blocks average only the pixels they contain.
GrayImage16 downsample(const GrayImage16& image, int factor);

/// A block is inside when at least half of its available pixels are.
BinaryMask downsample_mask(const BinaryMask& mask, int factor);

/// Maps polygon vertices onto the downsampled grid (pixel centers stay centered).
std::vector<MassAnnotation> downsample_masses(const std::vector<MassAnnotation>& masses,
                                              int factor, int out_width, int out_height);

/// One tile's intensity lookup, indexed by histogram bin.
using TileMapping = std::vector<std::uint16_t>;

/// Clipped, redistributed and integrated histogram of the in-mask pixels of one
/// tile. Returns an empty mapping when the tile has no in-mask pixels.
TileMapping clahe_tile_mapping(const GrayImage16& image, const BinaryMask& mask, int x0, int y0,
                               int x1, int y1, double clip_limit, int bins);

/// Contrast-limited adaptive histogram equalization restricted to the mask.
/// Tiles are cfg.clahe_tile_rows x cfg.clahe_tile_cols real-sized cells;
/// pixels are remapped by bilinear interpolation between tile-center mappings.
/// Tiles without in-mask pixels borrow the mapping of the nearest non-empty tile.
GrayImage16 clahe(const GrayImage16& image, const BinaryMask& mask, const PreprocessConfig& cfg);

/// Full front end: rescale -> downsample -> CLAHE. The returned case lives on
/// the downsampled grid with its masks, annotations and spacing adjusted.
MammogramCase preprocess_case(const MammogramCase& c, const PreprocessConfig& cfg);

}  // namespace masscade
