#include "masscade/annotation.hpp"

#include <algorithm>
#include <cmath>

#include "masscade/error.hpp"

namespace masscade {

BinaryMask rasterize_polygon(const std::vector<Point2>& polygon, int width, int height) {
  BinaryMask mask(width, height);
  const std::size_t n = polygon.size();
  if (n < 3) return mask;

  // Scanline form of the crossing-number test with a ray cast towards +x:
  // pixel x is inside iff an odd number of crossings satisfy c > x, i.e. iff
  // c[2k] <= x < c[2k+1] for sorted crossings c.
  std::vector<double> crossings;
  for (int y = 0; y < height; ++y) {
    const double py = y;
    crossings.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point2& a = polygon[i];
      const Point2& b = polygon[j];
      if ((a.y > py) != (b.y > py)) {
        crossings.push_back(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(crossings[k])));
      const double hi = crossings[k + 1];
      int x1 = static_cast<int>(std::ceil(hi)) - 1;
      x1 = std::min(x1, width - 1);
      for (int x = x0; x <= x1; ++x) mask.set(x, y);
    }
  }
  return mask;
}

MassAnnotation MassAnnotation::from_polygon(std::string id, std::vector<Point2> polygon,
                                            int width, int height) {
  if (polygon.size() < 3) {
    throw InvalidArgument("mass '" + id + "': polygon needs at least 3 vertices");
  }
  MassAnnotation m;
  m.rasterized = rasterize_polygon(polygon, width, height);
  if (m.rasterized.count() == 0) {
    throw InvalidArgument("mass '" + id + "': polygon covers no pixel centers");
  }
  m.id = std::move(id);
  m.polygon = std::move(polygon);
  return m;
}

void MammogramCase::validate() const {
  if (!(pixel_spacing_um > 0.0)) {
    throw InvalidArgument("case '" + case_id + "': pixel spacing must be positive");
  }
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw InvalidArgument("case '" + case_id + "': malformed image");
  }
  if (breast_mask.width != image.width || breast_mask.height != image.height) {
    throw InvalidArgument("case '" + case_id + "': breast mask dimensions differ from image");
  }
  for (const auto& m : masses) {
    if (m.rasterized.width != image.width || m.rasterized.height != image.height) {
      throw InvalidArgument("case '" + case_id + "': mass '" + m.id +
                            "' raster dimensions differ from image");
    }
  }
}

}  // namespace masscade
