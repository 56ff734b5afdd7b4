#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace itstyler {

/// Decoded RGB raster. Stored planar as a (3, H, W) f32 tensor; pixel values
/// are nominally in [0, 1] (decoder output may leave that range until it is
/// serialized).
class Image {
public:
    Image() = default;
    /// Accepts (3, H, W) or (1, 3, H, W).
    explicit Image(torch::Tensor chw);

    static Image zeros(int64_t height, int64_t width);

    int64_t height() const { return data_.size(1); }
    int64_t width() const { return data_.size(2); }
    bool empty() const { return !data_.defined(); }

    const torch::Tensor& tensor() const { return data_; }
    /// (1, 3, H, W) view.
    torch::Tensor batch() const { return data_.unsqueeze(0); }

    /// Clamps to [0, 1].
    Image clamped() const;

    bool bitwise_equal(const Image& other) const;

private:
    torch::Tensor data_;
};

/// Throws Error(UndecodableImage) if the file cannot be decoded.
Image load_image(const std::filesystem::path& path);

/// Clamps to [0,1] and quantizes to 8 bits; the format follows the extension.
void save_image(const Image& image, const std::filesystem::path& path);

std::vector<unsigned char> encode_png(const Image& image);
Image decode_image_bytes(const std::string& bytes);

enum class Interp { Auto, Bicubic };

/// Resize to an exact size. `Auto` uses area averaging when shrinking and
/// bilinear when enlarging.
Image resize(const Image& image, int64_t height, int64_t width, Interp interp = Interp::Auto);

/// Rescales so the shorter side equals `short_side`, keeping the aspect ratio.
Image resize_short_side(const Image& image, int64_t short_side, Interp interp = Interp::Auto);

Image crop(const Image& image, int64_t top, int64_t left, int64_t height, int64_t width);

Image center_crop(const Image& image, int64_t height, int64_t width);

/// Stacks equally sized images into (N, 3, H, W).
torch::Tensor stack_images(const std::vector<Image>& images);

} // namespace itstyler
