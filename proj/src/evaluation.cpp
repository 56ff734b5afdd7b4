#include "itstyler/evaluation.hpp"

#include "itstyler/error.hpp"

#include <chrono>
#include <numeric>

namespace itstyler::evaluation {

namespace {

torch::Tensor unit_normalize(const torch::Tensor& f) {
    const auto norm = torch::sqrt((f * f).sum(1, true));
    return f / (norm + 1e-10);
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

Lpips::Lpips(const TensorArchive& archive)
    : stack_([&] {
          for (int k = 0; k < 5; ++k) {
              if (!archive.contains("lin" + std::to_string(k) + ".weight")) {
                  throw Error(Errc::MissingCalibration, "lin" + std::to_string(k) + ".weight");
              }
          }
          return backbones::VggStack(backbones::vgg16_relu5_3_specs(), archive);
      }()) {
    const auto taps = stack_.specs();
    int k = 0;
    for (const auto& s : taps) {
        if (s.tap.empty()) continue;
        const auto name = "lin" + std::to_string(k++) + ".weight";
        lin_.push_back(archive.get(name, {1, s.out_channels, 1, 1}));
    }
    provenance_ = archive.meta().value("lpips", nlohmann::json::object());
    provenance_["backbone"] = archive.meta().value("architecture", "vgg16");
    provenance_["source"] = archive.meta().value("source", "unknown");
}

torch::Tensor Lpips::distance_batch(const torch::Tensor& a, const torch::Tensor& b) const {
    if (a.sizes() != b.sizes()) {
        throw Error(Errc::DimensionMismatch, shape_string(a.sizes()) + " vs " + shape_string(b.sizes()));
    }
    torch::NoGradGuard no_grad;
    const auto n = a.size(0);
    const auto feats = stack_.forward(torch::cat({a, b}, 0), stack_.tap_names());
    torch::Tensor total;
    for (std::size_t k = 0; k < feats.size(); ++k) {
        const auto fa = unit_normalize(feats[k].slice(0, 0, n));
        const auto fb = unit_normalize(feats[k].slice(0, n, 2 * n));
        const auto d = ((fa - fb).pow(2) * lin_[k].to(fa.scalar_type())).sum(1).mean({1, 2});
        total = total.defined() ? total + d : d;
    }
    return total;
}

double Lpips::distance(const Image& a, const Image& b) const {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw Error(Errc::DimensionMismatch, std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " +
                                                 std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
    if (a.bitwise_equal(b)) {
        return 0.0;
    }
    return distance_batch(a.batch(), b.batch()).item<double>();
}

Lpips load_lpips(const std::filesystem::path& path) { return Lpips(TensorArchive::read(path)); }

nlohmann::json to_json(const ConsistencyReport& r) {
    return {{"distances", r.distances},
            {"mean", r.mean},
            {"frame_count", r.frame_count},
            {"method", r.method},
            {"lpips", r.lpips}};
}

ConsistencyReport consistency_of_frames(const std::vector<Image>& frames, const Lpips& lpips,
                                        const std::string& method) {
    if (frames.size() < 2) {
        throw Error(Errc::TooFewFrames, std::to_string(frames.size()) + " frame(s)");
    }
    ConsistencyReport r;
    r.frame_count = frames.size();
    r.method = method;
    r.lpips = lpips.provenance();
    for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
        r.distances.push_back(lpips.distance(frames[i].clamped(), frames[i + 1].clamped()));
    }
    r.mean = mean_of(r.distances);
    return r;
}

ConsistencyReport video_consistency(const std::filesystem::path& frames_dir, const FrameStylizer& stylizer,
                                    const Lpips& lpips, const std::string& method) {
    const auto paths = service::list_frames(frames_dir);
    if (paths.size() < 2) {
        throw Error(Errc::TooFewFrames, frames_dir.string() + " holds " + std::to_string(paths.size()) + " frame(s)");
    }
    std::vector<Image> frames;
    for (const auto& p : paths) frames.push_back(load_image(p));
    return consistency_of_frames(stylizer(frames), lpips, method);
}

std::string to_string(SpeedMode mode) { return mode == SpeedMode::Fast ? "fast" : "standard"; }

SpeedMode speed_mode_from_string(const std::string& s) {
    if (s == "fast") return SpeedMode::Fast;
    if (s == "standard") return SpeedMode::Standard;
    throw Error(Errc::InvalidConfig, "mode must be 'standard' or 'fast', got '" + s + "'");
}

nlohmann::json to_json(const SpeedReport& r) {
    return {{"size", r.size},         {"seconds", r.seconds}, {"mean_seconds", r.mean_seconds},
            {"mode", to_string(r.mode)}, {"warmups", r.warmups}, {"runs", r.runs},
            {"protocol", r.protocol}};
}

SpeedReport speed_benchmark(service::Engine& engine, const std::vector<Image>& contents,
                            const service::StyleSource& src, int64_t runs, SpeedMode mode, int64_t warmups) {
    if (runs < 1) {
        throw Error(Errc::InvalidConfig, "runs must be >= 1");
    }
    if (contents.empty()) {
        throw Error(Errc::EmptyDataset, "no benchmark images");
    }
    SpeedReport r;
    r.size = contents.front().height();
    r.mode = mode;
    r.warmups = warmups;
    r.runs = runs;
    r.protocol = "single context; " + std::to_string(warmups) +
                 " untimed warm-up calls; wall clock around the stylize call only; images cycled in order";

    const auto prefetched = engine.resolve_style(src);
    auto call = [&](const Image& content) {
        if (mode == SpeedMode::Fast) {
            return engine.stylize_with_code(content, prefetched);
        }
        return engine.stylize_with_code(content, engine.compute_style(src).code);
    };
    for (int64_t i = 0; i < warmups; ++i) {
        call(contents[static_cast<std::size_t>(i) % contents.size()]);
    }
    for (int64_t i = 0; i < runs; ++i) {
        const auto& content = contents[static_cast<std::size_t>(i) % contents.size()];
        const auto start = std::chrono::steady_clock::now();
        const auto out = call(content);
        const auto stop = std::chrono::steady_clock::now();
        r.seconds.push_back(std::chrono::duration<double>(stop - start).count());
    }
    r.mean_seconds = mean_of(r.seconds);
    return r;
}

} // namespace itstyler::evaluation
