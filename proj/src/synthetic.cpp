#include "itstyler/synthetic.hpp"

#include "itstyler/error.hpp"
#include "itstyler/tokenizer.hpp"
#include "itstyler/vgg.hpp"

#include <opencv2/imgproc.hpp>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace itstyler::synthetic {

namespace {

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

uint64_t stream_key(const std::string& name, uint64_t seed) {
    return fnv1a64(name.data(), name.size()) ^ (seed * 0x9E3779B97F4A7C15ULL);
}

double unit(uint64_t key, uint64_t i) {
    return static_cast<double>(splitmix64(key ^ (i * 0xD1B54A32D192ED03ULL)) >> 11) * kTwoPow53Inv;
}

void put_conv_stack(TensorArchive& archive, const std::vector<backbones::VggConvSpec>& specs, uint64_t seed) {
    for (const auto& s : specs) {
        const double fan_in = static_cast<double>(s.in_channels * 9);
        archive.put(s.name + ".weight",
                    hashed_uniform(s.name + ".weight", {s.out_channels, s.in_channels, 3, 3}, std::sqrt(6.0 / fan_in), seed));
        archive.put(s.name + ".bias", hashed_uniform(s.name + ".bias", {s.out_channels}, 0.05, seed));
    }
}

void put_imagenet_meta(TensorArchive& archive, const std::string& arch) {
    archive.meta()["source"] = "synthetic-hash";
    archive.meta()["architecture"] = arch;
    archive.meta()["padding"] = "zeros";
    archive.meta()["preprocess"] = {{"mean", {0.485, 0.456, 0.406}}, {"std", {0.229, 0.224, 0.225}}, {"input_range", "0-1"}};
}

void put_blocks(TensorArchive& archive, const std::string& prefix, int64_t width, int64_t layers, uint64_t seed) {
    const double attn_std = 1.0 / std::sqrt(static_cast<double>(width));
    const double proj_std = attn_std / std::sqrt(2.0 * static_cast<double>(layers));
    const double fc_std = 1.0 / std::sqrt(2.0 * static_cast<double>(width));
    const double sqrt3 = std::sqrt(3.0);
    auto put = [&](const std::string& name, c10::IntArrayRef shape, double bound) {
        archive.put(name, hashed_uniform(name, shape, bound, seed));
    };
    auto put_ln = [&](const std::string& name) {
        archive.put(name + ".weight", hashed_uniform(name + ".weight", {width}, 0.1, seed) + 1.0);
        put(name + ".bias", {width}, 0.1);
    };
    for (int64_t i = 0; i < layers; ++i) {
        const auto p = prefix + std::to_string(i) + ".";
        put_ln(p + "ln_1");
        put(p + "attn.in_proj_weight", {3 * width, width}, attn_std * sqrt3);
        put(p + "attn.in_proj_bias", {3 * width}, 0.02);
        put(p + "attn.out_proj.weight", {width, width}, proj_std * sqrt3);
        put(p + "attn.out_proj.bias", {width}, 0.02);
        put_ln(p + "ln_2");
        put(p + "mlp.c_fc.weight", {4 * width, width}, fc_std * sqrt3);
        put(p + "mlp.c_fc.bias", {4 * width}, 0.02);
        put(p + "mlp.c_proj.weight", {width, 4 * width}, proj_std * sqrt3);
        put(p + "mlp.c_proj.bias", {width}, 0.02);
    }
}

cv::Scalar random_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return cv::Scalar(u(rng), u(rng), u(rng));
}

Image from_mat_rgb(const cv::Mat& m) {
    cv::Mat f = m.isContinuous() ? m : m.clone();
    auto hwc = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32);
    return Image(hwc.permute({2, 0, 1}).contiguous().clone().clamp(0.0, 1.0));
}

const char* kCorpus =
    "oil painting watercolor impressionism expressionism cubism abstract art pop art ukiyo-e woodblock print "
    "stained glass mosaic charcoal sketch pencil drawing ink wash pastel gouache acrylic fresco tempera "
    "vibrant colorful warm cold calm calming dark bright golden blue green orange red purple yellow pink "
    "starry night sunset sunrise ocean waves fire flame ice water forest autumn winter summer spring "
    "brush strokes thick impasto dots pointillism geometric shapes lines swirls flowing texture canvas "
    "painting of flowers landscape portrait still life cityscape scenery waterside wonderful summer "
    "the orange blue and green are all very light in color very warm and inviting make me want to go "
    "to this place baroque renaissance romantic gothic minimalism surrealism futurism art nouveau "
    "a painting in the style of an artwork with a soft gentle dreamy mood hazy misty rainy stormy";

} // namespace

uint64_t splitmix64(uint64_t x) {
    uint64_t z = x + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

torch::Tensor hashed_uniform(const std::string& name, c10::IntArrayRef shape, double bound, uint64_t seed) {
    auto out = torch::empty(shape, torch::kFloat32);
    const uint64_t key = stream_key(name, seed);
    auto* data = out.data_ptr<float>();
    const auto n = static_cast<uint64_t>(out.numel());
    for (uint64_t i = 0; i < n; ++i) {
        data[i] = static_cast<float>((2.0 * unit(key, i) - 1.0) * bound);
    }
    return out;
}

Image hashed_image(const std::string& name, int64_t height, int64_t width, uint64_t seed) {
    auto out = torch::empty({3, height, width}, torch::kFloat32);
    const uint64_t key = stream_key(name, seed);
    auto* data = out.data_ptr<float>();
    const auto n = static_cast<uint64_t>(out.numel());
    for (uint64_t i = 0; i < n; ++i) {
        data[i] = static_cast<float>(unit(key, i));
    }
    return Image(out);
}

TensorArchive vgg19_archive(uint64_t seed) {
    TensorArchive archive;
    put_conv_stack(archive, backbones::vgg19_relu4_1_specs(), seed);
    put_imagenet_meta(archive, "vgg19-relu4_1");
    return archive;
}

TensorArchive lpips_vgg16_archive(uint64_t seed) {
    TensorArchive archive;
    const auto specs = backbones::vgg16_relu5_3_specs();
    put_conv_stack(archive, specs, seed);
    put_imagenet_meta(archive, "vgg16-relu5_3");
    int lin = 0;
    for (const auto& s : specs) {
        if (!s.tap.empty()) {
            const auto name = "lin" + std::to_string(lin++) + ".weight";
            archive.put(name, hashed_uniform(name, {1, s.out_channels, 1, 1}, 0.1, seed).abs());
        }
    }
    archive.meta()["lpips"] = {{"version", "0.1"}, {"net", "vgg"}, {"calibration", "synthetic-hash"}};
    return archive;
}

TensorArchive clip_archive(const ClipGeometry& g, const std::vector<std::string>& merges, uint64_t seed) {
    TensorArchive archive;
    const auto vocab = backbones::ClipTokenizer(merges).vocab_size();
    const double sqrt3 = std::sqrt(3.0);
    auto put = [&](const std::string& name, c10::IntArrayRef shape, double bound) {
        archive.put(name, hashed_uniform(name, shape, bound, seed));
    };
    auto put_ln = [&](const std::string& name, int64_t width) {
        archive.put(name + ".weight", hashed_uniform(name + ".weight", {width}, 0.1, seed) + 1.0);
        put(name + ".bias", {width}, 0.1);
    };

    put("token_embedding.weight", {vocab, g.text_width}, 0.02 * sqrt3);
    put("positional_embedding", {backbones::ClipTokenizer::kContextLength, g.text_width}, 0.01 * sqrt3);
    put_blocks(archive, "transformer.resblocks.", g.text_width, g.text_layers, seed);
    put_ln("ln_final", g.text_width);
    put("text_projection", {g.text_width, 512}, sqrt3 / std::sqrt(static_cast<double>(g.text_width)));

    const double vscale = 1.0 / std::sqrt(static_cast<double>(g.vision_width));
    const auto grid = g.image_size / g.patch;
    put("visual.conv1.weight", {g.vision_width, 3, g.patch, g.patch}, 1.0 / std::sqrt(3.0 * g.patch * g.patch));
    put("visual.class_embedding", {g.vision_width}, vscale * sqrt3);
    put("visual.positional_embedding", {grid * grid + 1, g.vision_width}, vscale * sqrt3);
    put_ln("visual.ln_pre", g.vision_width);
    put_blocks(archive, "visual.transformer.resblocks.", g.vision_width, g.vision_layers, seed);
    put_ln("visual.ln_post", g.vision_width);
    put("visual.proj", {g.vision_width, 512}, vscale * sqrt3);

    archive.meta()["source"] = "synthetic-hash";
    archive.meta()["model"] = "ViT-B/32";
    archive.meta()["text_heads"] = g.text_heads;
    archive.meta()["vision_heads"] = g.vision_heads;
    archive.meta()["image_size"] = g.image_size;
    archive.meta()["tokenizer"] = {{"merges", merges}};
    return archive;
}

std::vector<std::string> learn_merges(const std::vector<std::string>& words, std::size_t max_merges) {
    const auto byte_enc = backbones::bytes_to_unicode();
    std::map<std::vector<std::string>, int> vocab;
    for (const auto& w : words) {
        std::vector<std::string> symbols;
        for (unsigned char c : w) symbols.push_back(byte_enc[c]);
        if (symbols.empty()) continue;
        symbols.back() += "</w>";
        ++vocab[symbols];
    }
    std::vector<std::string> merges;
    while (merges.size() < max_merges) {
        std::map<std::pair<std::string, std::string>, int> pairs;
        for (const auto& [symbols, count] : vocab) {
            for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += count;
        }
        const std::pair<std::string, std::string>* best = nullptr;
        int best_count = 1;
        for (const auto& [pair, count] : pairs) {
            if (count > best_count) {
                best = &pair;
                best_count = count;
            }
        }
        if (best == nullptr) break;
        const auto [left, right] = *best;
        merges.push_back(left + " " + right);
        std::map<std::vector<std::string>, int> next;
        for (const auto& [symbols, count] : vocab) {
            std::vector<std::string> merged;
            for (std::size_t i = 0; i < symbols.size(); ++i) {
                if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
                    merged.push_back(left + right);
                    ++i;
                } else {
                    merged.push_back(symbols[i]);
                }
            }
            next[merged] += count;
        }
        vocab = std::move(next);
    }
    return merges;
}

std::vector<std::string> default_merges(std::size_t max_merges) {
    std::istringstream in(kCorpus);
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    return learn_merges(words, max_merges);
}

Image content_image(uint64_t seed, int64_t height, int64_t width) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int h = static_cast<int>(height);
    const int w = static_cast<int>(width);
    cv::Mat img(h, w, CV_32FC3);
    const auto top = random_color(rng);
    const auto bottom = random_color(rng);
    for (int y = 0; y < h; ++y) {
        const double t = static_cast<double>(y) / std::max(1, h - 1);
        const cv::Scalar c = top * (1.0 - t) + bottom * t;
        img.row(y).setTo(cv::Vec3f(static_cast<float>(c[0]), static_cast<float>(c[1]), static_cast<float>(c[2])));
    }
    const int shapes = 3 + static_cast<int>(rng() % 5);
    for (int i = 0; i < shapes; ++i) {
        const cv::Point center(static_cast<int>(u(rng) * w), static_cast<int>(u(rng) * h));
        const int r = static_cast<int>((0.08 + 0.25 * u(rng)) * std::min(h, w));
        if (rng() % 2 == 0) {
            cv::circle(img, center, r, random_color(rng), cv::FILLED, cv::LINE_AA);
        } else {
            cv::rectangle(img, cv::Rect(center.x - r, center.y - r / 2, 2 * r, r), random_color(rng), cv::FILLED);
        }
    }
    cv::GaussianBlur(img, img, cv::Size(0, 0), 0.6 + 0.01 * std::min(h, w));
    return from_mat_rgb(img);
}

Image style_image(uint64_t seed, int64_t height, int64_t width) {
    std::mt19937_64 rng(seed ^ 0x5151515151515151ULL);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int h = static_cast<int>(height);
    const int w = static_cast<int>(width);
    std::vector<cv::Scalar> palette;
    for (int i = 0; i < 3; ++i) palette.push_back(random_color(rng));
    cv::Mat img(h, w, CV_32FC3, palette[0]);
    const int family = static_cast<int>(rng() % 4);
    const double freq = 2.0 + 14.0 * u(rng);
    const double angle = u(rng) * 3.14159265358979;
    if (family == 0) { // stripes
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double p = (x * std::cos(angle) + y * std::sin(angle)) / std::max(h, w) * freq;
                const double t = 0.5 + 0.5 * std::sin(6.28318530718 * p);
                const cv::Scalar c = palette[1] * t + palette[2] * (1.0 - t);
                img.at<cv::Vec3f>(y, x) = cv::Vec3f(static_cast<float>(c[0]), static_cast<float>(c[1]), static_cast<float>(c[2]));
            }
        }
    } else if (family == 1) { // strokes
        const int strokes = 40 + static_cast<int>(rng() % 120);
        for (int i = 0; i < strokes; ++i) {
            const cv::Point a(static_cast<int>(u(rng) * w), static_cast<int>(u(rng) * h));
            const double len = (0.05 + 0.2 * u(rng)) * std::max(h, w);
            const double theta = angle + 0.6 * (u(rng) - 0.5);
            const cv::Point b(a.x + static_cast<int>(len * std::cos(theta)), a.y + static_cast<int>(len * std::sin(theta)));
            cv::line(img, a, b, palette[1 + rng() % 2] * (0.7 + 0.3 * u(rng)), 1 + static_cast<int>(rng() % 6), cv::LINE_AA);
        }
    } else if (family == 2) { // dots
        const int dots = 100 + static_cast<int>(rng() % 400);
        const int radius = 1 + static_cast<int>(freq / 3);
        for (int i = 0; i < dots; ++i) {
            const cv::Point c(static_cast<int>(u(rng) * w), static_cast<int>(u(rng) * h));
            cv::circle(img, c, radius, palette[1 + rng() % 2], cv::FILLED, cv::LINE_AA);
        }
    } else { // blocky mosaic
        const int cell = std::max(2, static_cast<int>(std::min(h, w) / freq));
        for (int y = 0; y < h; y += cell) {
            for (int x = 0; x < w; x += cell) {
                const cv::Scalar c = palette[rng() % 3] * (0.75 + 0.25 * u(rng));
                cv::rectangle(img, cv::Rect(x, y, cell, cell), c, cv::FILLED);
                cv::rectangle(img, cv::Rect(x, y, cell, cell), cv::Scalar(0.05, 0.05, 0.05), 1);
            }
        }
    }
    cv::Mat noise(h, w, CV_32FC3);
    cv::RNG cvrng(seed);
    cvrng.fill(noise, cv::RNG::NORMAL, cv::Scalar::all(0.0), cv::Scalar::all(0.02 + 0.08 * u(rng)));
    img += noise;
    return from_mat_rgb(img);
}

void write_dataset(const std::filesystem::path& dir, bool style, std::size_t count, int64_t height, int64_t width,
                   uint64_t seed) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.png", i);
        const uint64_t s = splitmix64(seed + i);
        save_image(style ? style_image(s, height, width) : content_image(s, height, width), dir / name);
    }
}

void write_frames(const std::filesystem::path& dir, std::size_t count, int64_t height, int64_t width, uint64_t seed) {
    std::filesystem::create_directories(dir);
    const auto canvas = content_image(seed, height + static_cast<int64_t>(count), width + static_cast<int64_t>(count));
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.png", i);
        const auto off = static_cast<int64_t>(i);
        save_image(crop(canvas, off / 2, off, height, width), dir / name);
    }
}

} // namespace itstyler::synthetic
