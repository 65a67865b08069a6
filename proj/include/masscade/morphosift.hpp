#pragma once

#include <map>
#include <vector>

#include "masscade/image.hpp"

namespace masscade {

struct Offset {
  int dx = 0;
  int dy = 0;
  bool operator==(const Offset&) const = default;
  auto operator<=>(const Offset&) const = default;
};

/// Digital line segment centered at the origin.
struct LineSE {
  int length = 0;
  double angle = 0.0;
  std::vector<Offset> offsets;  // ordered from one end to the other, size == length
};

/// Bresenham segment of `length` pixels (odd, >= 3) through the origin along
/// direction (cos angle, sin angle) in image coordinates (y down). The half
/// from the origin to the end point is traced and mirrored, so the offset set
/// is symmetric under negation. Throws InvalidArgument otherwise.
LineSE make_line_se(int length, double angle);

/// Grayscale erosion / dilation by an arbitrary offset set; the structuring
/// element is clipped to the image support (no padding value).
GrayImage16 erode(const GrayImage16& image, const std::vector<Offset>& se);
GrayImage16 dilate(const GrayImage16& image, const std::vector<Offset>& se);
GrayImage16 open(const GrayImage16& image, const std::vector<Offset>& se);

/// Pixelwise maximum of the openings by make_line_se(length, k*pi/n), k = 0..n-1.
GrayImage16 sup_opening(const GrayImage16& image, int length, int n_orientations);

struct ScaleBand {
  int index = 1;  // 1-based
  int d_min = 0;
  int d_max = 0;
  bool operator==(const ScaleBand&) const = default;
};

/// Diameters 43..429 px at full resolution become 11..108 px after x4
/// downsampling; split geometrically into four contiguous bands.
std::vector<ScaleBand> default_bands();

/// Smallest odd integer >= d.
int odd_ceil(int d);

/// sup_opening(odd(d_min)) - sup_opening(odd(d_max)), clamped at 0.
GrayImage16 sift_scale(const GrayImage16& image, const ScaleBand& band, int n_orientations);

struct SiftedStack {
  std::vector<ScaleBand> bands;
  std::vector<GrayImage16> images;
};

/// Throws InvalidArgument when bands are empty, invalid or not contiguous.
void validate_bands(const std::vector<ScaleBand>& bands);

/// One sift_scale image per band. Openings are shared between adjacent bands.
SiftedStack sift_multiscale(const GrayImage16& image, const std::vector<ScaleBand>& bands,
                            int n_orientations);

}  // namespace masscade
