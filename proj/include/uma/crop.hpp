#pragma once

#include <array>
#include <cstddef>

#include "uma/bbox.hpp"
#include "uma/image.hpp"
#include "uma/network.hpp"

namespace uma {

/// A square patch cut around a target.
///
/// The crop scale is fixed by the target size: the tracking search region,
/// search_scale * sqrt(w * h) image pixels wide, maps onto the tracking
/// instance patch. Exemplar and training-instance patches use the same scale.
struct TargetCrop {
  Tensor patch;
  /// Image pixels per patch pixel.
  double scale = 1.0;
  /// Target centre and size in patch pixels.
  double cx = 0, cy = 0, w = 0, h = 0;
};

double crop_scale(const NetworkConfig& config, double search_scale, const BBox& box);

/// Patch of side `patch_side` centred at the box centre moved by
/// (shift_x, shift_y) image pixels. The target then sits at the patch centre
/// minus the shift.
TargetCrop crop_target(const Image& image, const BBox& box, std::size_t patch_side, const NetworkConfig& config,
                       double search_scale, const std::array<double, 3>& fill, double shift_x = 0.0,
                       double shift_y = 0.0);

/// Features of a target cropped as an exemplar: the backbone output, its
/// SOT-attended version (the correlation kernel) and the AFF embedding.
struct ExemplarFeatures {
  Tensor f;
  Tensor z_sot;
  Tensor w;
};

ExemplarFeatures exemplar_features(const TargetCrop& crop, const NetworkConfig& config, const NetworkParams& params);

}  // namespace uma
