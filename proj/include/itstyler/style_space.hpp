#pragma once

#include <torch/torch.h>

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace itstyler::style {

/// Variance floor inside every standard deviation of the style space.
inline constexpr double kStatsEps = 1e-5;
/// Lower clamp applied to externally produced sigma (mapper output).
inline constexpr double kSigmaFloor = 1e-6;
inline constexpr int64_t kStyleChannels = 512;
inline constexpr std::size_t kMaxStyles = 8;

/// A point (sigma, mu) of the style space: per-channel std and mean of
/// relu4_1 features. Tensors are (C) for a single code or (N, C) for a batch.
class StyleCode {
public:
    StyleCode() = default;
    /// Throws Error(DimensionMismatch) on shape disagreement and
    /// Error(InvalidConfig) if any sigma is negative or non-finite.
    StyleCode(torch::Tensor sigma, torch::Tensor mu);

    /// Skips validation; for statistics computed in-library.
    static StyleCode unchecked(torch::Tensor sigma, torch::Tensor mu);

    const torch::Tensor& sigma() const { return sigma_; }
    const torch::Tensor& mu() const { return mu_; }
    int64_t channels() const { return sigma_.size(-1); }

    /// sigma || mu as one vector (2C).
    torch::Tensor concatenated() const { return torch::cat({sigma_, mu_}, -1); }

    bool bitwise_equal(const StyleCode& other) const;

private:
    torch::Tensor sigma_;
    torch::Tensor mu_;
};

/// Where a code came from; carried through JSON export.
struct LabeledStyleCode {
    StyleCode code;
    std::string source; // "text" | "image"
    std::string label;
};

nlohmann::json to_json(const LabeledStyleCode& code);
/// Throws Error(DimensionMismatch) when vector lengths are not 512.
LabeledStyleCode labeled_code_from_json(const nlohmann::json& j);

/// Per-channel spatial mean and sqrt(population variance + eps) of a
/// (N,C,H,W) or (C,H,W) map. Returns tensors shaped like the leading dims.
/// Throws Error(EmptyFeatureMap).
StyleCode channel_stats(const torch::Tensor& features);

/// sigma(y) * (x - mu(x)) / sigma(x) + mu(y). Throws Error(ChannelMismatch).
torch::Tensor adain(const torch::Tensor& content, const torch::Tensor& style);

/// Replaces the channel statistics of `content` with an explicit code.
/// Throws Error(ChannelMismatch).
torch::Tensor t_adain(const torch::Tensor& content, const StyleCode& code);
torch::Tensor t_adain(const torch::Tensor& content, const torch::Tensor& sigma, const torch::Tensor& mu);

/// K styles and convex weights.
class InterpolationSpec {
public:
    /// Throws TooManyStyles (K > 8 or K == 0) or WeightsNotNormalized
    /// (negative weight, or sum off by more than 1e-6).
    InterpolationSpec(std::vector<StyleCode> codes, std::vector<double> weights);

    const std::vector<StyleCode>& codes() const { return codes_; }
    const std::vector<double>& weights() const { return weights_; }

private:
    std::vector<StyleCode> codes_;
    std::vector<double> weights_;
};

/// Validates a weight vector without building a spec.
void validate_weights(const std::vector<double>& weights);

/// sum_k w_k * t_adain(x, code_k), accumulated in order on feature maps.
torch::Tensor interpolate_features(const torch::Tensor& content, const InterpolationSpec& spec);

} // namespace itstyler::style
