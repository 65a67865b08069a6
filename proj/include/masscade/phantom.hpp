#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "masscade/annotation.hpp"

namespace masscade {

/// Parameters of one synthetic mammogram.
struct PhantomSpec {
  int width = 512;
  int height = 512;
  int n_masses = 1;                                  // 0..4
  std::pair<double, double> mass_diameter_range_px{20.0, 80.0};
  double mass_contrast = 0.35;                       // relative lift over local tissue, 0..1
  bool spiculation = false;
  double noise_level = 0.3;                          // 0..1
  std::uint64_t seed = 0;
  /// Phantoms are synthesized directly on the processing grid: 280 um is a
  /// 70 um detector after x4 downsampling.
  double pixel_spacing_um = 280.0;
  std::string case_id = "phantom";

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;
};

/// Deterministic synthetic case: half-ellipse breast, multi-octave parenchymal
/// texture with intensity-dependent noise, and n_masses blurred elliptical
/// densities (optionally spiculated) whose outlines are recorded as annotations.
/// Throws PipelineError when the masses cannot be placed inside the breast.
MammogramCase generate_phantom(const PhantomSpec& spec);

/// Spec of case `index` in a seeded suite: 0..max_masses masses per case,
/// diameters drawn from the given range, alternating spiculation.
PhantomSpec suite_case_spec(std::uint64_t suite_seed, int index, int width, int height,
                            int max_masses, std::pair<double, double> diameter_range);

}  // namespace masscade
