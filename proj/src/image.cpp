#include "warpforge/image.hpp"

#include "warpforge/warp_kernel.hpp"

namespace warpforge {

Image warp_bilinear(const Image& moving, const DisplacementField& field) {
  if (moving.height != field.height || moving.width != field.width)
    fail_shape("warp_bilinear: field size does not match image");
  Image out(moving.height, moving.width);
  warp_bilinear_kernel(moving.values.data(), moving.height, moving.width, field.data.data(),
                       field.data.data() + field.plane(), out.values.data());
  return out;
}

LabelMap warp_nearest(const LabelMap& labels, const DisplacementField& field) {
  if (labels.height != field.height || labels.width != field.width)
    fail_shape("warp_nearest: field size does not match label map");
  LabelMap out(labels.height, labels.width);
  warp_nearest_kernel(labels.labels.data(), labels.height, labels.width, field.data.data(),
                      field.data.data() + field.plane(), out.labels.data());
  return out;
}

}  // namespace warpforge
