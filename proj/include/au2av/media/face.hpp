#pragma once

#include "au2av/media/video.hpp"
#include "au2av/providers.hpp"

namespace au2av::media {

/// Lower (mouth) half of a frame: rows [H/2, H), all columns.
struct FaceRegion {
  Image image;
  bool is_lower_half = true;
};

/// Appends a copy of the last row when the height is odd.
Image pad_to_even_height(const Image& frame);
FaceRegion crop_lower_half(const Image& frame);
Image crop_upper_half(const Image& frame);
/// Stacks `top` over `bottom`; widths must agree.
Image stack_vertical(const Image& top, const Image& bottom);

/// Index of the frame minimising |yaw| + |pitch| + |roll|; earliest wins ties.
int select_aligned_frame_index(const TalkingClip& clip, const PoseProvider& poses);
Image select_aligned_identity_frame(const TalkingClip& clip, const PoseProvider& poses);

}  // namespace au2av::media
