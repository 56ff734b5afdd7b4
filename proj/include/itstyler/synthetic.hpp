#pragma once

#include "itstyler/archive.hpp"
#include "itstyler/image.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

/// Deterministic stand-ins for pretrained weights and datasets.
///
/// Every value comes from a counter-based hash (splitmix64 keyed by the
/// tensor name), so tools/python/synthetic.py regenerates bit-identical
/// tensors and reference implementations can be run on exactly the same
/// weights.
namespace itstyler::synthetic {

uint64_t splitmix64(uint64_t x);

/// Uniform values in [-bound, bound), element i of the stream keyed by
/// (name, seed).
torch::Tensor hashed_uniform(const std::string& name, c10::IntArrayRef shape, double bound, uint64_t seed);

/// Values in [0, 1) keyed by name; (3,H,W).
Image hashed_image(const std::string& name, int64_t height, int64_t width, uint64_t seed);

/// He-uniform VGG-19 up to conv4_1 with ImageNet preprocessing constants.
TensorArchive vgg19_archive(uint64_t seed);

/// VGG-16 up to conv5_3 plus non-negative `lin0..lin4` LPIPS calibration.
TensorArchive lpips_vgg16_archive(uint64_t seed);

struct ClipGeometry {
    int64_t vision_width = 768;
    int64_t vision_layers = 12;
    int64_t vision_heads = 12;
    int64_t text_width = 512;
    int64_t text_layers = 12;
    int64_t text_heads = 8;
    int64_t patch = 32;
    int64_t image_size = 224;
};

/// ViT-B/32 geometry by default. `merges` defines the vocabulary.
TensorArchive clip_archive(const ClipGeometry& geometry, const std::vector<std::string>& merges, uint64_t seed);

/// Learns up to `max_merges` BPE merges from a built-in art-vocabulary corpus.
std::vector<std::string> default_merges(std::size_t max_merges = 400);

/// Greedy BPE learner over whitespace-separated words (ties broken
/// lexicographically).
std::vector<std::string> learn_merges(const std::vector<std::string>& words, std::size_t max_merges);

/// Procedural photo-like content image (gradients plus shapes).
Image content_image(uint64_t seed, int64_t height, int64_t width);

/// Procedural painting-like style image (palette + texture family).
Image style_image(uint64_t seed, int64_t height, int64_t width);

/// Writes `count` PNGs named 0000.png, 0001.png, ... into `dir`.
void write_dataset(const std::filesystem::path& dir, bool style, std::size_t count, int64_t height, int64_t width,
                   uint64_t seed);

/// Smoothly panning frames over one content image (video stand-in).
void write_frames(const std::filesystem::path& dir, std::size_t count, int64_t height, int64_t width, uint64_t seed);

} // namespace itstyler::synthetic
