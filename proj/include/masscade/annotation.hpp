#pragma once

#include <string>
#include <vector>

#include "masscade/image.hpp"

namespace masscade {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Even-odd polygon fill sampled at pixel centers; pixel (x, y) has its center
/// at integer coordinates (x, y).
BinaryMask rasterize_polygon(const std::vector<Point2>& polygon, int width, int height);

struct MassAnnotation {
  std::string id;
  std::vector<Point2> polygon;
  BinaryMask rasterized;

  /// Builds the annotation and its raster; throws InvalidArgument on fewer than
  /// three vertices or an empty raster.
  static MassAnnotation from_polygon(std::string id, std::vector<Point2> polygon, int width,
                                     int height);

  bool operator==(const MassAnnotation&) const = default;
};

struct MammogramCase {
  std::string case_id;
  GrayImage16 image;
  BinaryMask breast_mask;
  double pixel_spacing_um = 70.0;
  std::vector<MassAnnotation> masses;

  /// Throws InvalidArgument when dimensions disagree or spacing is not positive.
  void validate() const;

  bool operator==(const MammogramCase&) const = default;
};

}  // namespace masscade
