#pragma once

#include "itstyler/archive.hpp"
#include "itstyler/image.hpp"

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace itstyler::backbones {

/// One 3x3 convolution of a VGG-style stack. `pool_before` inserts a 2x2
/// max-pool ahead of the convolution; `tap` names the ReLU output to expose.
struct VggConvSpec {
    std::string name;
    int64_t in_channels;
    int64_t out_channels;
    bool pool_before = false;
    std::string tap;
};

enum class Padding { Zeros, Reflect };

/// Frozen VGG-style convolution stack loaded from a named-tensor archive.
/// Shared by the style encoder (VGG-19 up to relu4_1) and the LPIPS
/// backbone (VGG-16 up to relu5_3).
class VggStack {
public:
    VggStack(std::vector<VggConvSpec> specs, const TensorArchive& archive);

    /// `images` is (N,3,H,W) in [0,1]. Returns the requested taps in stack
    /// order; stops after the deepest requested tap.
    std::vector<torch::Tensor> forward(const torch::Tensor& images, const std::vector<std::string>& taps) const;

    const std::vector<VggConvSpec>& specs() const { return specs_; }
    std::vector<std::string> tap_names() const;
    std::uint64_t checksum() const;

private:
    std::vector<VggConvSpec> specs_;
    std::vector<torch::Tensor> weights_;
    std::vector<torch::Tensor> biases_;
    torch::Tensor mean_; // (1,3,1,1)
    torch::Tensor std_;
    Padding padding_ = Padding::Zeros;
};

std::vector<VggConvSpec> vgg19_relu4_1_specs();
std::vector<VggConvSpec> vgg16_relu5_3_specs();

enum class VggLayer { Relu1_1 = 0, Relu2_1 = 1, Relu3_1 = 2, Relu4_1 = 3 };

inline constexpr std::array<VggLayer, 4> kAllStyleLayers = {VggLayer::Relu1_1, VggLayer::Relu2_1, VggLayer::Relu3_1,
                                                           VggLayer::Relu4_1};
inline constexpr std::array<int64_t, 4> kStyleTapChannels = {64, 128, 256, 512};

std::string_view layer_name(VggLayer layer);

/// ImageNet-pretrained VGG-19 slice exposing relu1_1..relu4_1.
class VggEncoder {
public:
    explicit VggEncoder(const TensorArchive& archive);

    /// Batched forward on (N,3,H,W) tensors in [0,1] whose sides are
    /// multiples of 8. Gradients flow to `images` when it requires grad.
    std::map<VggLayer, torch::Tensor> features(const torch::Tensor& images, std::span<const VggLayer> taps) const;
    std::array<torch::Tensor, 4> all_features(const torch::Tensor& images) const;
    torch::Tensor relu4_1(const torch::Tensor& images) const;

    std::uint64_t checksum() const { return stack_.checksum(); }
    std::string source() const { return source_; }

private:
    VggStack stack_;
    std::string source_;
};

/// Throws MissingTensor, ShapeMismatch or UnreadableArchive.
VggEncoder load_vgg(const std::filesystem::path& weights_path);

/// Single-image forward for arbitrary sizes >= 16x16. Sides that are not
/// multiples of 8 are reflection-padded and every tap is cropped back to
/// ceil(side / stride). Throws Error(ImageTooSmall).
std::map<VggLayer, torch::Tensor> vgg_features(const VggEncoder& encoder, const Image& image,
                                               std::span<const VggLayer> taps);

/// Reflection-pads (N,3,H,W) so both sides are multiples of `multiple`.
torch::Tensor pad_to_multiple(const torch::Tensor& images, int64_t multiple);

} // namespace itstyler::backbones
