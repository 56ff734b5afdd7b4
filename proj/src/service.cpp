#include "itstyler/service.hpp"

#include "itstyler/archive.hpp"
#include "itstyler/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>

namespace itstyler::service {

namespace fs = std::filesystem;

namespace {

std::string hex_id(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t hash_string(const std::string& s, std::uint64_t seed) { return fnv1a64(s.data(), s.size(), seed); }

} // namespace

StyleSource StyleSource::from_text(std::string prompt) {
    StyleSource s;
    s.kind = SourceKind::Text;
    s.text = std::move(prompt);
    return s;
}

StyleSource StyleSource::from_image(itstyler::Image image) {
    StyleSource s;
    s.kind = SourceKind::Image;
    s.image = std::move(image);
    return s;
}

StyleSource StyleSource::from_code(std::string code_id) {
    StyleSource s;
    s.kind = SourceKind::StoredCode;
    s.text = std::move(code_id);
    return s;
}

std::string to_string(SourceKind kind) {
    switch (kind) {
    case SourceKind::Text: return "text";
    case SourceKind::Image: return "image";
    case SourceKind::StoredCode: return "stored_code";
    }
    return "unknown";
}

StyleCodeCache::StyleCodeCache(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

std::optional<CachedCode> StyleCodeCache::find(const std::string& code_id) const {
    std::shared_lock lock(mutex_);
    auto it = slots_.find(code_id);
    if (it == slots_.end()) {
        misses_.fetch_add(1);
        return std::nullopt;
    }
    it->second->last_used.store(clock_.fetch_add(1) + 1);
    hits_.fetch_add(1);
    return it->second->entry;
}

void StyleCodeCache::insert(const CachedCode& entry) {
    std::unique_lock lock(mutex_);
    auto it = slots_.find(entry.code_id);
    if (it != slots_.end()) {
        it->second->last_used.store(clock_.fetch_add(1) + 1);
        return;
    }
    if (slots_.size() >= capacity_) {
        auto victim = std::min_element(slots_.begin(), slots_.end(), [](const auto& a, const auto& b) {
            return a.second->last_used.load() < b.second->last_used.load();
        });
        slots_.erase(victim);
    }
    auto slot = std::make_unique<Slot>();
    slot->entry = entry;
    slot->last_used.store(clock_.fetch_add(1) + 1);
    slots_.emplace(entry.code_id, std::move(slot));
}

std::vector<CachedCode> StyleCodeCache::entries() const {
    std::shared_lock lock(mutex_);
    std::vector<CachedCode> out;
    out.reserve(slots_.size());
    for (const auto& [id, slot] : slots_) {
        out.push_back(slot->entry);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.code_id < b.code_id; });
    return out;
}

std::size_t StyleCodeCache::size() const {
    std::shared_lock lock(mutex_);
    return slots_.size();
}

Engine::Engine(std::shared_ptr<const training::Backbones> backbones, nets::NetworkSet networks,
               std::string checkpoint_id, std::size_t cache_capacity)
    : backbones_(std::move(backbones)), networks_(std::move(networks)), checkpoint_id_(std::move(checkpoint_id)),
      cache_(cache_capacity) {
    networks_.eval();
    for (auto& p : networks_.mapper->parameters()) p.set_requires_grad(false);
    for (auto& p : networks_.decoder->parameters()) p.set_requires_grad(false);
}

std::shared_ptr<Engine> Engine::load(const fs::path& checkpoint, const fs::path& vgg_override,
                                     const fs::path& clip_override,
                                     std::shared_ptr<const training::Backbones> backbones) {
    const auto archive = TensorArchive::read(checkpoint);
    auto networks = nets::NetworkSet::create(0);
    networks.load_from(archive, false);
    if (!backbones) {
        const auto recorded = archive.meta().value("backbones", nlohmann::json::object());
        fs::path vgg = vgg_override.empty() ? fs::path(recorded.value("vgg", "")) : vgg_override;
        fs::path clip = clip_override.empty() ? fs::path(recorded.value("clip", "")) : clip_override;
        if (vgg.empty() || clip.empty()) {
            throw Error(Errc::InvalidConfig, "checkpoint records no backbone paths; pass --vgg and --clip");
        }
        backbones = training::Backbones::load(vgg, clip);
    }
    return std::make_shared<Engine>(std::move(backbones), std::move(networks), hex_id(archive.checksum()));
}

std::string Engine::code_id_for(const StyleSource& src) const {
    auto h = hash_string(checkpoint_id_, 0xcbf29ce484222325ULL);
    h = hash_string(to_string(src.kind), h);
    switch (src.kind) {
    case SourceKind::Text: h = hash_string(src.text, h); break;
    case SourceKind::Image: {
        const int64_t dims[2] = {src.image.height(), src.image.width()};
        h = fnv1a64(dims, sizeof dims, h);
        h = tensor_checksum(src.image.tensor(), h);
        break;
    }
    case SourceKind::StoredCode: return src.text;
    }
    return hex_id(h);
}

style::LabeledStyleCode Engine::compute_style(const StyleSource& src) const {
    torch::NoGradGuard no_grad;
    auto& mapper = const_cast<nets::Mapper&>(networks_.mapper);
    switch (src.kind) {
    case SourceKind::Text:
        return {nets::map_to_style(mapper, backbones_->clip.embed_text(src.text)), "text", src.text};
    case SourceKind::Image:
        return {nets::map_to_style(mapper, backbones_->clip.embed_image(src.image)), "image",
                "image " + std::to_string(src.image.width()) + "x" + std::to_string(src.image.height())};
    case SourceKind::StoredCode: break;
    }
    auto hit = cache_.find(src.text);
    if (!hit) {
        throw Error(Errc::UnknownCodeId, src.text);
    }
    return hit->code;
}

ResolvedStyle Engine::resolve(const StyleSource& src) {
    const auto id = code_id_for(src);
    if (auto hit = cache_.find(id)) {
        return {id, hit->code, true};
    }
    if (src.kind == SourceKind::StoredCode) {
        throw Error(Errc::UnknownCodeId, id);
    }
    auto code = compute_style(src);
    cache_.insert({id, code});
    return {id, std::move(code), false};
}

std::string Engine::register_code(const style::LabeledStyleCode& code, std::string code_id) {
    if (code.code.channels() != style::kStyleChannels) {
        throw Error(Errc::DimensionMismatch, "style code must have 512 channels");
    }
    if (code_id.empty()) {
        auto h = hash_string(checkpoint_id_, 0xcbf29ce484222325ULL);
        h = hash_string("stored_code", h);
        h = tensor_checksum(code.code.sigma(), h);
        h = tensor_checksum(code.code.mu(), h);
        code_id = hex_id(h);
    }
    cache_.insert({code_id, code});
    return code_id;
}

torch::Tensor Engine::encode(const Image& content) const {
    if (content.height() < 16 || content.width() < 16) {
        throw Error(Errc::ImageTooSmall, std::to_string(content.width()) + "x" + std::to_string(content.height()) +
                                             " is below 16x16");
    }
    return backbones_->vgg.relu4_1(backbones::pad_to_multiple(content.batch(), 8));
}

Image Engine::decode_features(const torch::Tensor& features, int64_t height, int64_t width) const {
    auto out = nets::decode(const_cast<nets::Decoder&>(networks_.decoder), features);
    return Image(out.index({0, torch::indexing::Slice(), torch::indexing::Slice(0, height),
                            torch::indexing::Slice(0, width)})
                     .contiguous());
}

Image Engine::stylize(const Image& content, const StyleSource& src) {
    const auto code = resolve(src).code.code;
    return stylize_with_code(content, code);
}

Image Engine::stylize_with_code(const Image& content, const style::StyleCode& code) const {
    torch::NoGradGuard no_grad;
    const auto f = encode(content);
    return decode_features(style::t_adain(f, code), content.height(), content.width());
}

Image Engine::stylize_interpolated(const Image& content, const std::vector<StyleSource>& sources,
                                   const std::vector<double>& weights) {
    if (sources.size() != weights.size()) {
        throw Error(Errc::DimensionMismatch, std::to_string(sources.size()) + " sources but " +
                                                 std::to_string(weights.size()) + " weights");
    }
    style::validate_weights(weights);
    std::vector<style::StyleCode> codes;
    codes.reserve(sources.size());
    for (const auto& s : sources) {
        codes.push_back(resolve(s).code.code);
    }
    return stylize_interpolated_codes(content, codes, weights);
}

Image Engine::stylize_interpolated_codes(const Image& content, const std::vector<style::StyleCode>& codes,
                                         const std::vector<double>& weights) const {
    const style::InterpolationSpec spec(codes, weights);
    torch::NoGradGuard no_grad;
    const auto f = encode(content);
    return decode_features(style::interpolate_features(f, spec), content.height(), content.width());
}

Image Engine::reconstruct(const Image& content) const {
    torch::NoGradGuard no_grad;
    return decode_features(encode(content), content.height(), content.width());
}

std::vector<Image> Engine::stylize_sequence(const std::vector<Image>& frames, const StyleSource& src) {
    if (frames.empty()) {
        throw Error(Errc::TooFewFrames, "no frames");
    }
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].height() != frames[0].height() || frames[i].width() != frames[0].width()) {
            throw Error(Errc::InconsistentFrameSize, "frame " + std::to_string(i));
        }
    }
    const auto code = resolve(src).code.code;
    std::vector<Image> out;
    out.reserve(frames.size());
    for (const auto& frame : frames) {
        out.push_back(stylize_with_code(frame, code));
    }
    return out;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw Error(Errc::Io, dir.string() + " is not a directory");
    }
    struct Entry {
        long long index;
        fs::path path;
    };
    std::vector<Entry> entries;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg" && ext != ".bmp") continue;
        const auto stem = e.path().stem().string();
        long long index = -1;
        auto end = stem.find_last_of("0123456789");
        if (end != std::string::npos) {
            auto begin = end;
            while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
            index = std::stoll(stem.substr(begin, std::min<std::size_t>(end - begin + 1, 18)));
        }
        entries.push_back({index, e.path()});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.index != b.index ? a.index < b.index : a.path.filename() < b.path.filename();
    });
    std::vector<fs::path> out;
    for (auto& e : entries) out.push_back(std::move(e.path));
    return out;
}

std::size_t stylize_frame_directory(Engine& engine, const fs::path& frames_dir, const fs::path& out_dir,
                                    const StyleSource& src) {
    const auto paths = list_frames(frames_dir);
    if (paths.empty()) {
        throw Error(Errc::TooFewFrames, frames_dir.string() + " holds no frames");
    }
    std::vector<Image> frames;
    frames.reserve(paths.size());
    for (const auto& p : paths) frames.push_back(load_image(p));
    const auto outputs = engine.stylize_sequence(frames, src);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        save_image(outputs[i], out_dir / (paths[i].stem().string() + ".png"));
    }
    return outputs.size();
}

std::size_t import_code_store(Engine& engine, const fs::path& dir) {
    if (!fs::is_directory(dir)) return 0;
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".json") continue;
        std::ifstream in(e.path());
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) continue;
        engine.register_code(style::labeled_code_from_json(j), j.value("code_id", e.path().stem().string()));
        ++n;
    }
    return n;
}

void export_code(const fs::path& dir, const std::string& code_id, const style::LabeledStyleCode& code) {
    fs::create_directories(dir);
    auto j = style::to_json(code);
    j["code_id"] = code_id;
    const auto path = dir / (code_id + ".json");
    std::ofstream out(path);
    if (!out) {
        throw Error(Errc::Io, "cannot write " + path.string());
    }
    out << j.dump() << '\n';
}

} // namespace itstyler::service
