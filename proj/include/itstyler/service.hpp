#pragma once

#include "itstyler/image.hpp"
#include "itstyler/networks.hpp"
#include "itstyler/style_space.hpp"
#include "itstyler/training.hpp"

#include <atomic>
#include <filesystem>
#include <list>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace itstyler::service {

enum class SourceKind { Text, Image, StoredCode };

struct StyleSource {
    SourceKind kind = SourceKind::Text;
    std::string text;    ///< prompt (Text) or code id (StoredCode)
    itstyler::Image image;

    static StyleSource from_text(std::string prompt);
    static StyleSource from_image(itstyler::Image image);
    static StyleSource from_code(std::string code_id);
};

std::string to_string(SourceKind kind);

struct CachedCode {
    std::string code_id;
    style::LabeledStyleCode code;
};

/// Bounded LRU map code_id -> style code. Lookups take a shared lock; inserts
/// and evictions are serialized.
class StyleCodeCache {
public:
    explicit StyleCodeCache(std::size_t capacity = 1024);

    std::optional<CachedCode> find(const std::string& code_id) const;
    /// Keeps an existing entry (its code is bitwise-identical by construction).
    void insert(const CachedCode& entry);
    std::vector<CachedCode> entries() const;

    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }
    std::uint64_t hits() const { return hits_.load(); }
    std::uint64_t misses() const { return misses_.load(); }

private:
    struct Slot {
        CachedCode entry;
        mutable std::atomic<std::uint64_t> last_used{0};
    };
    std::size_t capacity_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::unique_ptr<Slot>> slots_;
    mutable std::atomic<std::uint64_t> clock_{0};
    mutable std::atomic<std::uint64_t> hits_{0};
    mutable std::atomic<std::uint64_t> misses_{0};
};

struct ResolvedStyle {
    std::string code_id;
    style::LabeledStyleCode code;
    bool cache_hit = false;
};

/// Immutable inference snapshot: backbones, mapper and decoder of one
/// checkpoint, plus the style-code cache. All methods are safe to call
/// concurrently.
class Engine {
public:
    Engine(std::shared_ptr<const training::Backbones> backbones, nets::NetworkSet networks, std::string checkpoint_id,
           std::size_t cache_capacity = 1024);

    /// Backbone paths default to the ones recorded in the checkpoint.
    static std::shared_ptr<Engine> load(const std::filesystem::path& checkpoint,
                                        const std::filesystem::path& vgg_override = {},
                                        const std::filesystem::path& clip_override = {},
                                        std::shared_ptr<const training::Backbones> backbones = nullptr);

    /// Cache-aware. Throws UnknownCodeId, EmptyPrompt, PromptTooLong.
    ResolvedStyle resolve(const StyleSource& src);
    style::StyleCode resolve_style(const StyleSource& src) { return resolve(src).code.code; }

    /// Always runs the embedder and mapper (no cache read or write).
    style::LabeledStyleCode compute_style(const StyleSource& src) const;

    /// Stores an externally supplied code and returns its id. An empty id is
    /// derived from the code values and the checkpoint.
    std::string register_code(const style::LabeledStyleCode& code, std::string code_id = {});

    /// Cache id a source maps to under this checkpoint.
    std::string code_id_for(const StyleSource& src) const;

    Image stylize(const Image& content, const StyleSource& src);
    Image stylize_with_code(const Image& content, const style::StyleCode& code) const;
    /// Throws WeightsNotNormalized / TooManyStyles.
    Image stylize_interpolated(const Image& content, const std::vector<StyleSource>& sources,
                               const std::vector<double>& weights);
    Image stylize_interpolated_codes(const Image& content, const std::vector<style::StyleCode>& codes,
                                     const std::vector<double>& weights) const;
    /// g(f(content)): decoder reconstruction without restyling.
    Image reconstruct(const Image& content) const;

    /// Resolves the style once. Throws InconsistentFrameSize naming the index.
    std::vector<Image> stylize_sequence(const std::vector<Image>& frames, const StyleSource& src);

    const training::Backbones& backbones() const { return *backbones_; }
    const std::string& checkpoint_id() const { return checkpoint_id_; }
    const StyleCodeCache& cache() const { return cache_; }

private:
    Image decode_features(const torch::Tensor& features, int64_t height, int64_t width) const;
    torch::Tensor encode(const Image& content) const;

    std::shared_ptr<const training::Backbones> backbones_;
    nets::NetworkSet networks_;
    std::string checkpoint_id_;
    StyleCodeCache cache_;
};

/// Ordered frame files (png/jpg) of a directory, sorted by the numeric index
/// embedded in the file name, then by name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Reads frames, stylizes them with one resolved code and writes PNGs with the
/// input stems into `out_dir`. Returns the number of frames written.
std::size_t stylize_frame_directory(Engine& engine, const std::filesystem::path& frames_dir,
                                    const std::filesystem::path& out_dir, const StyleSource& src);

/// Loads every `<id>.json` code in a directory into the engine.
std::size_t import_code_store(Engine& engine, const std::filesystem::path& dir);
/// Writes `<dir>/<code_id>.json`.
void export_code(const std::filesystem::path& dir, const std::string& code_id, const style::LabeledStyleCode& code);

} // namespace itstyler::service
