#pragma once

// Conversions between interleaved rasters (images, flows) and planar
// N x C x H x W tensors.

#include <vector>

#include "starnet/flow.hpp"
#include "starnet/image.hpp"
#include "starnet/tensor.hpp"

namespace starnet {

namespace detail {

template <typename T, typename V>
void interleaved_to_planar(const std::vector<V>& src, int h, int w, int channels, T* dst) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < channels; ++c) dst[c * plane + i] = static_cast<T>(src[i * channels + c]);
}

template <typename T, typename V>
void planar_to_interleaved(const T* src, int h, int w, int channels, std::vector<V>& dst) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < channels; ++c) dst[i * channels + c] = static_cast<V>(src[c * plane + i]);
}

}  // namespace detail

template <typename T = float>
BasicTensor<T> images_to_tensor(const std::vector<ImageRGB>& images) {
  STARNET_EXPECT(!images.empty(), "images_to_tensor: empty batch");
  const int h = images[0].height(), w = images[0].width();
  auto t = BasicTensor<T>::zeros({static_cast<int>(images.size()), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    STARNET_EXPECT(images[n].height() == h && images[n].width() == w, "images_to_tensor: images differ in size");
    detail::interleaved_to_planar(images[n].pixels(), h, w, 3, t.data().data() + n * 3 * h * w);
  }
  return t;
}

template <typename T = float>
BasicTensor<T> image_to_tensor(const ImageRGB& img) {
  return images_to_tensor<T>({img});
}

template <typename T = float>
BasicTensor<T> flows_to_tensor(const std::vector<FlowField>& flows) {
  STARNET_EXPECT(!flows.empty(), "flows_to_tensor: empty batch");
  const int h = flows[0].height(), w = flows[0].width();
  auto t = BasicTensor<T>::zeros({static_cast<int>(flows.size()), 2, h, w});
  for (std::size_t n = 0; n < flows.size(); ++n) {
    STARNET_EXPECT(flows[n].height() == h && flows[n].width() == w, "flows_to_tensor: flows differ in size");
    detail::interleaved_to_planar(flows[n].vectors(), h, w, 2, t.data().data() + n * 2 * h * w);
  }
  return t;
}

template <typename T = float>
BasicTensor<T> flow_to_tensor(const FlowField& f) {
  return flows_to_tensor<T>({f});
}

// Sample `n` of a N x 3 x H x W tensor. Values are clamped to [0,1] when `clamp` is set.
template <typename T>
ImageRGB tensor_to_image(const BasicTensor<T>& t, int n = 0, bool clamp = true) {
  STARNET_EXPECT(t.rank() == 4 && t.dim(1) == 3, "tensor_to_image: expected N x 3 x H x W, got " + shape_str(t.shape()));
  const int h = t.dim(2), w = t.dim(3);
  ImageRGB img(h, w);
  detail::planar_to_interleaved(t.data().data() + static_cast<std::size_t>(n) * 3 * h * w, h, w, 3, img.pixels());
  if (clamp) img.clamp();
  return img;
}

template <typename T>
FlowField tensor_to_flow(const BasicTensor<T>& t, int n = 0) {
  STARNET_EXPECT(t.rank() == 4 && t.dim(1) == 2, "tensor_to_flow: expected N x 2 x H x W, got " + shape_str(t.shape()));
  const int h = t.dim(2), w = t.dim(3);
  FlowField f(h, w);
  detail::planar_to_interleaved(t.data().data() + static_cast<std::size_t>(n) * 2 * h * w, h, w, 2, f.vectors());
  return f;
}

}  // namespace starnet
