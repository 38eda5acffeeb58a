#include "uma/crop.hpp"

#include <cmath>

#include "uma/errors.hpp"

namespace uma {

double crop_scale(const NetworkConfig& config, double search_scale, const BBox& box) {
  if (!(box.w > 0) || !(box.h > 0)) throw ContractError("crop_scale: box must have positive size");
  return search_scale * std::sqrt(box.w * box.h) / static_cast<double>(config.track_instance_size());
}

TargetCrop crop_target(const Image& image, const BBox& box, std::size_t patch_side, const NetworkConfig& config,
                       double search_scale, const std::array<double, 3>& fill, double shift_x, double shift_y) {
  TargetCrop crop;
  crop.scale = crop_scale(config, search_scale, box);
  const double side = static_cast<double>(patch_side);
  crop.patch = crop_patch(image, box.cx() + shift_x, box.cy() + shift_y, side * crop.scale, patch_side, fill);
  crop.cx = 0.5 * side - shift_x / crop.scale;
  crop.cy = 0.5 * side - shift_y / crop.scale;
  crop.w = box.w / crop.scale;
  crop.h = box.h / crop.scale;
  return crop;
}

ExemplarFeatures exemplar_features(const TargetCrop& crop, const NetworkConfig& config, const NetworkParams& params) {
  ExemplarFeatures out;
  out.f = backbone_forward(crop.patch, config, params);
  out.z_sot = tsa_attention(out.f, Task::Sot, params);
  const Tensor f_aff = tsa_attention(out.f, Task::Aff, params);
  out.w = roi_embedding(f_aff, patch_roi(config, crop.cx, crop.cy, crop.w, crop.h), config);
  return out;
}

}  // namespace uma
