#pragma once

#include "itstyler/archive.hpp"
#include "itstyler/image.hpp"
#include "itstyler/service.hpp"
#include "itstyler/vgg.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace itstyler::evaluation {

/// LPIPS over a VGG-16 trunk: channel-normalized relu1_2..relu5_3 features,
/// squared differences weighted by non-negative `lin<k>.weight` (1,C,1,1),
/// spatially averaged and summed over layers.
class Lpips {
public:
    /// Throws MissingCalibration when any `lin<k>.weight` is absent.
    explicit Lpips(const TensorArchive& archive);

    /// Throws DimensionMismatch unless both images have the same size.
    double distance(const Image& a, const Image& b) const;
    /// (N,3,H,W) pairs in [0,1] -> (N) distances.
    torch::Tensor distance_batch(const torch::Tensor& a, const torch::Tensor& b) const;

    /// Backbone and calibration provenance for reports.
    const nlohmann::json& provenance() const { return provenance_; }

private:
    backbones::VggStack stack_;
    std::vector<torch::Tensor> lin_;
    nlohmann::json provenance_;
};

Lpips load_lpips(const std::filesystem::path& path);

struct ConsistencyReport {
    std::vector<double> distances; ///< pair i = (frame i, frame i+1)
    double mean = 0.0;
    std::size_t frame_count = 0;
    std::string method;
    nlohmann::json lpips;
};

nlohmann::json to_json(const ConsistencyReport& r);

/// Throws TooFewFrames below two frames.
ConsistencyReport consistency_of_frames(const std::vector<Image>& frames, const Lpips& lpips, const std::string& method);

using FrameStylizer = std::function<std::vector<Image>(const std::vector<Image>&)>;

/// Reads frames in index order, stylizes the whole sequence and scores
/// adjacent pairs.
ConsistencyReport video_consistency(const std::filesystem::path& frames_dir, const FrameStylizer& stylizer,
                                    const Lpips& lpips, const std::string& method);

enum class SpeedMode { Standard, Fast };

std::string to_string(SpeedMode mode);
SpeedMode speed_mode_from_string(const std::string& s);

struct SpeedReport {
    int64_t size = 0;
    std::vector<double> seconds;
    double mean_seconds = 0.0;
    SpeedMode mode = SpeedMode::Standard;
    int64_t warmups = 5;
    int64_t runs = 0;
    std::string protocol;
};

nlohmann::json to_json(const SpeedReport& r);

inline constexpr int64_t kWarmupRuns = 5;

/// Times `runs` stylize calls on size x size inputs, cycling over `contents`.
/// Standard mode encodes the style source on every call (cache bypassed);
/// fast mode reuses a code resolved before timing starts.
SpeedReport speed_benchmark(service::Engine& engine, const std::vector<Image>& contents,
                            const service::StyleSource& src, int64_t runs, SpeedMode mode,
                            int64_t warmups = kWarmupRuns);

} // namespace itstyler::evaluation
