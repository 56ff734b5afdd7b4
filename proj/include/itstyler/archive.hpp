#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace itstyler {

/// Named-tensor archive used for backbone weights, LPIPS calibration and
/// training checkpoints.
///
/// On-disk layout (all integers little-endian):
///
///     "ITSNTA01"                      8-byte magic
///     u64 manifest_size
///     manifest.json                   manifest_size bytes of UTF-8 JSON
///     zero padding to a 64-byte boundary
///     data section                    one flat f32 blob per tensor
///
/// The manifest is `{"format": "itstyler-nta", "version": 1, "meta": {...},
/// "tensors": [{"name", "dtype": "f32", "shape", "offset", "nbytes",
/// "byte_order": "little-endian"}]}` with offsets relative to the data section.
class TensorArchive {
public:
    static constexpr std::string_view kMagic = "ITSNTA01";

    TensorArchive() = default;

    /// Throws Error(UnreadableArchive) on any structural problem.
    static TensorArchive read(const std::filesystem::path& path);

    /// Writes to `path.tmp` and renames over `path`, so a failed write never
    /// clobbers an existing archive.
    void write(const std::filesystem::path& path) const;

    /// Stores a contiguous f32 CPU copy of `tensor`.
    void put(const std::string& name, const torch::Tensor& tensor);

    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

    /// Throws Error(MissingTensor).
    const torch::Tensor& get(const std::string& name) const;

    /// Throws Error(MissingTensor) or Error(ShapeMismatch).
    const torch::Tensor& get(const std::string& name, c10::IntArrayRef expected_shape) const;

    std::vector<std::string> names() const;
    std::vector<std::string> names_with_prefix(std::string_view prefix) const;
    std::size_t size() const { return tensors_.size(); }

    nlohmann::json& meta() { return meta_; }
    const nlohmann::json& meta() const { return meta_; }

    /// Order-independent checksum over all names and tensor bytes.
    std::uint64_t checksum() const;

private:
    std::map<std::string, torch::Tensor> tensors_;
    nlohmann::json meta_ = nlohmann::json::object();
};

std::string shape_string(c10::IntArrayRef shape);

/// FNV-1a over raw bytes; used for parameter checksums and cache keys.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t tensor_checksum(const torch::Tensor& tensor, std::uint64_t seed = 0xcbf29ce484222325ULL);

} // namespace itstyler
