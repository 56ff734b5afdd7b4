#include "itstyler/image.hpp"

#include "itstyler/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <cstring>

namespace itstyler {

namespace {

// (3,H,W) f32 RGB -> HxWx3 f32 RGB Mat (deep copy).
cv::Mat to_mat(const torch::Tensor& chw) {
    auto hwc = chw.permute({1, 2, 0}).contiguous();
    cv::Mat view(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_32FC3, hwc.data_ptr<float>());
    return view.clone();
}

torch::Tensor from_mat(const cv::Mat& mat) {
    cv::Mat f = mat.isContinuous() ? mat : mat.clone();
    auto hwc = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32);
    return hwc.permute({2, 0, 1}).contiguous().clone();
}

Image from_bgr8(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    return Image(from_mat(f));
}

cv::Mat to_bgr8(const Image& image) {
    cv::Mat f = to_mat(image.clamped().tensor());
    cv::Mat u8;
    f.convertTo(u8, CV_8UC3, 255.0);
    cv::Mat bgr;
    cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

cv::Mat normalize_channels(const cv::Mat& raw) {
    cv::Mat m = raw;
    if (m.depth() == CV_16U) {
        m.convertTo(m, CV_8U, 1.0 / 257.0);
    }
    if (m.channels() == 1) {
        cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
    } else if (m.channels() == 4) {
        cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
    }
    return m;
}

} // namespace

Image::Image(torch::Tensor chw) {
    if (chw.dim() == 4 && chw.size(0) == 1) {
        chw = chw.squeeze(0);
    }
    TORCH_CHECK(chw.dim() == 3 && chw.size(0) == 3, "Image expects a (3,H,W) tensor, got ", chw.sizes());
    data_ = chw.to(torch::kFloat32).contiguous();
}

Image Image::zeros(int64_t height, int64_t width) { return Image(torch::zeros({3, height, width})); }

Image Image::clamped() const { return Image(data_.clamp(0.0, 1.0)); }

bool Image::bitwise_equal(const Image& other) const {
    if (data_.sizes() != other.data_.sizes()) {
        return false;
    }
    return std::memcmp(data_.data_ptr(), other.data_.data_ptr(), data_.nbytes()) == 0;
}

Image load_image(const std::filesystem::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw Error(Errc::UndecodableImage, path.string());
    }
    return from_bgr8(normalize_channels(raw));
}

void save_image(const Image& image, const std::filesystem::path& path) {
    if (!cv::imwrite(path.string(), to_bgr8(image))) {
        throw Error(Errc::Io, "cannot write image " + path.string());
    }
}

std::vector<unsigned char> encode_png(const Image& image) {
    std::vector<unsigned char> out;
    cv::imencode(".png", to_bgr8(image), out);
    return out;
}

Image decode_image_bytes(const std::string& bytes) {
    std::vector<unsigned char> buf(bytes.begin(), bytes.end());
    cv::Mat raw = buf.empty() ? cv::Mat() : cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw Error(Errc::UndecodableImage, "request body image");
    }
    return from_bgr8(normalize_channels(raw));
}

Image resize(const Image& image, int64_t height, int64_t width, Interp interp) {
    if (height == image.height() && width == image.width()) {
        return image;
    }
    int flag = cv::INTER_CUBIC;
    if (interp == Interp::Auto) {
        flag = (height < image.height() || width < image.width()) ? cv::INTER_AREA : cv::INTER_LINEAR;
    }
    cv::Mat out;
    cv::resize(to_mat(image.tensor()), out, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, flag);
    return Image(from_mat(out));
}

Image resize_short_side(const Image& image, int64_t short_side, Interp interp) {
    const auto h = image.height();
    const auto w = image.width();
    if (h <= w) {
        const auto new_w = static_cast<int64_t>(std::llround(static_cast<double>(w) * short_side / h));
        return resize(image, short_side, new_w, interp);
    }
    const auto new_h = static_cast<int64_t>(std::llround(static_cast<double>(h) * short_side / w));
    return resize(image, new_h, short_side, interp);
}

Image crop(const Image& image, int64_t top, int64_t left, int64_t height, int64_t width) {
    TORCH_CHECK(top >= 0 && left >= 0 && top + height <= image.height() && left + width <= image.width(),
                "crop window out of bounds");
    return Image(image.tensor().slice(1, top, top + height).slice(2, left, left + width).contiguous());
}

Image center_crop(const Image& image, int64_t height, int64_t width) {
    return crop(image, (image.height() - height) / 2, (image.width() - width) / 2, height, width);
}

torch::Tensor stack_images(const std::vector<Image>& images) {
    if (images.empty()) {
        throw Error(Errc::EmptyBatch, "no images to stack");
    }
    std::vector<torch::Tensor> parts;
    parts.reserve(images.size());
    for (const auto& img : images) {
        parts.push_back(img.tensor());
    }
    return torch::stack(parts);
}

} // namespace itstyler
