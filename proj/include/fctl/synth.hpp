#pragma once

#include <cstdint>

#include "fctl/dataset.hpp"

namespace fctl {

// Context-dependent synthetic land cover.
//
// Classes: 0 and 1 are two terrains (distinct colours, blobs of size
// ~cue_scale); 2 and 3 are "compounds" (large uniform squares) whose class is
// the terrain surrounding them; 4 (when num_classes == 5) is road strips,
// independent of terrain. Compound interiors render identically on either
// terrain, so the class of a compound pixel is decided only by terrain that
// lies outside a patch-sized view.
struct SynthConfig {
  Index image_size = 256;
  Index num_images = 4;
  Index num_classes = 5;
  std::uint64_t seed = 0;
  Index cue_scale = 128;
  Index patch = 64;
  Index compound_min = 72;
  Index compound_max = 104;
  Index compounds_per_image = 4;
  Index roads_per_image = 2;

  void validate() const;
};

Dataset synth_dataset(const SynthConfig& config);

/// One image of uniform terrain `terrain` (0 or 1) with a single centred
/// compound of side `side`; pixel noise depends only on (seed, position).
Sample synth_compound_probe(const SynthConfig& config, int terrain, Index side);

}  // namespace fctl
