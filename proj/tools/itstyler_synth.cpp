// Generates hash-derived stand-in weights and procedural datasets for
// offline runs and tests.

#include "itstyler/synthetic.hpp"
#include "itstyler/tokenizer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace itstyler;

int main(int argc, char** argv) {
    CLI::App app{"itstyler-synth: synthetic backbones and datasets", "itstyler-synth"};
    app.require_subcommand(1);

    auto* weights = app.add_subcommand("backbones", "Write vgg19.nta, clip.nta and lpips.nta");
    std::string w_out;
    uint64_t w_seed = 0;
    std::string w_geometry = "vit-b32";
    weights->add_option("--out", w_out)->required();
    weights->add_option("--seed", w_seed);
    weights->add_option("--clip-geometry", w_geometry)->check(CLI::IsMember({"vit-b32", "tiny"}));

    auto* data = app.add_subcommand("dataset", "Write procedural content or style images");
    std::string d_out, d_kind = "content";
    std::size_t d_count = 100;
    int64_t d_height = 160, d_width = 192;
    uint64_t d_seed = 0;
    data->add_option("--out", d_out)->required();
    data->add_option("--kind", d_kind)->check(CLI::IsMember({"content", "style"}));
    data->add_option("--count", d_count);
    data->add_option("--height", d_height);
    data->add_option("--width", d_width);
    data->add_option("--seed", d_seed);

    auto* frames = app.add_subcommand("frames", "Write a panning frame sequence");
    std::string f_out;
    std::size_t f_count = 50;
    int64_t f_height = 128, f_width = 128;
    uint64_t f_seed = 0;
    frames->add_option("--out", f_out)->required();
    frames->add_option("--count", f_count);
    frames->add_option("--height", f_height);
    frames->add_option("--width", f_width);
    frames->add_option("--seed", f_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*weights) {
            fs::create_directories(w_out);
            synthetic::vgg19_archive(w_seed).write(fs::path(w_out) / "vgg19.nta");
            synthetic::lpips_vgg16_archive(w_seed).write(fs::path(w_out) / "lpips.nta");
            synthetic::ClipGeometry g;
            if (w_geometry == "tiny") {
                g = {64, 2, 2, 64, 2, 2, 32, 224};
            }
            synthetic::clip_archive(g, synthetic::default_merges(), w_seed).write(fs::path(w_out) / "clip.nta");
            std::cout << w_out << '\n';
        } else if (*data) {
            synthetic::write_dataset(d_out, d_kind == "style", d_count, d_height, d_width, d_seed);
        } else if (*frames) {
            synthetic::write_frames(f_out, f_count, f_height, f_width, f_seed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
