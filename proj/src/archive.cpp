#include "itstyler/archive.hpp"

#include "itstyler/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace itstyler {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr std::size_t kAlign = 64;

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

[[noreturn]] void unreadable(const std::filesystem::path& path, const std::string& why) {
    throw Error(Errc::UnreadableArchive, path.string() + ": " + why);
}

} // namespace

std::string shape_string(c10::IntArrayRef shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "," : "") << shape[i];
    }
    out << ')';
    return out.str();
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t tensor_checksum(const torch::Tensor& tensor, std::uint64_t seed) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    const auto shape = t.sizes();
    std::uint64_t h = fnv1a64(shape.data(), shape.size() * sizeof(int64_t), seed);
    return fnv1a64(t.data_ptr(), t.nbytes(), h);
}

TensorArchive TensorArchive::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        unreadable(path, "cannot open");
    }
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::string_view(magic, sizeof magic) != kMagic) {
        unreadable(path, "bad magic");
    }
    std::uint64_t manifest_size = 0;
    if (!in.read(reinterpret_cast<char*>(&manifest_size), sizeof manifest_size)) {
        unreadable(path, "truncated header");
    }
    const auto file_size = std::filesystem::file_size(path);
    if (manifest_size > file_size) {
        unreadable(path, "manifest size exceeds file size");
    }
    std::string manifest_text(manifest_size, '\0');
    if (!in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_size))) {
        unreadable(path, "truncated manifest");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_text);
    } catch (const nlohmann::json::exception& e) {
        unreadable(path, std::string("manifest is not JSON: ") + e.what());
    }
    if (manifest.value("format", "") != "itstyler-nta" || !manifest.contains("tensors")) {
        unreadable(path, "manifest missing format/tensors");
    }

    const std::size_t data_start = align_up(16 + manifest_size);
    TensorArchive archive;
    archive.meta_ = manifest.value("meta", nlohmann::json::object());
    try {
        for (const auto& entry : manifest.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            if (entry.at("dtype").get<std::string>() != "f32") {
                unreadable(path, name + ": unsupported dtype");
            }
            if (entry.value("byte_order", "little-endian") != "little-endian") {
                unreadable(path, name + ": unsupported byte order");
            }
            const auto shape = entry.at("shape").get<std::vector<int64_t>>();
            const auto offset = entry.at("offset").get<std::uint64_t>();
            const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
            int64_t numel = 1;
            for (auto d : shape) {
                if (d < 0) {
                    unreadable(path, name + ": negative dimension");
                }
                numel *= d;
            }
            if (nbytes != static_cast<std::uint64_t>(numel) * sizeof(float) || data_start + offset + nbytes > file_size) {
                unreadable(path, name + ": extent out of range");
            }
            auto tensor = torch::empty(shape, torch::kFloat32);
            in.seekg(static_cast<std::streamoff>(data_start + offset));
            if (!in.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(nbytes))) {
                unreadable(path, name + ": truncated data");
            }
            archive.tensors_.emplace(name, std::move(tensor));
        }
    } catch (const nlohmann::json::exception& e) {
        unreadable(path, std::string("malformed tensor entry: ") + e.what());
    }
    return archive;
}

void TensorArchive::write(const std::filesystem::path& path) const {
    nlohmann::json entries = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, tensor] : tensors_) {
        entries.push_back({{"name", name},
                           {"dtype", "f32"},
                           {"shape", tensor.sizes().vec()},
                           {"offset", offset},
                           {"nbytes", tensor.nbytes()},
                           {"byte_order", "little-endian"}});
        offset = align_up(offset + tensor.nbytes());
    }
    const nlohmann::json manifest = {{"format", "itstyler-nta"}, {"version", 1}, {"meta", meta_}, {"tensors", entries}};
    const std::string manifest_text = manifest.dump();

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(Errc::Io, "cannot open " + tmp.string() + " for writing");
        }
        const std::uint64_t manifest_size = manifest_text.size();
        out.write(kMagic.data(), kMagic.size());
        out.write(reinterpret_cast<const char*>(&manifest_size), sizeof manifest_size);
        out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
        const std::string pad(align_up(16 + manifest_text.size()) - (16 + manifest_text.size()), '\0');
        out.write(pad.data(), static_cast<std::streamsize>(pad.size()));
        for (const auto& [name, tensor] : tensors_) {
            out.write(static_cast<const char*>(tensor.data_ptr()), static_cast<std::streamsize>(tensor.nbytes()));
            const std::string tail(align_up(tensor.nbytes()) - tensor.nbytes(), '\0');
            out.write(tail.data(), static_cast<std::streamsize>(tail.size()));
        }
        out.flush();
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw Error(Errc::Io, "failed writing " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(Errc::Io, "cannot rename archive into place: " + path.string());
    }
}

void TensorArchive::put(const std::string& name, const torch::Tensor& tensor) {
    tensors_[name] = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous().clone();
}

const torch::Tensor& TensorArchive::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) {
        throw Error(Errc::MissingTensor, name);
    }
    return it->second;
}

const torch::Tensor& TensorArchive::get(const std::string& name, c10::IntArrayRef expected_shape) const {
    const auto& t = get(name);
    if (t.sizes() != expected_shape) {
        throw Error(Errc::ShapeMismatch,
                    name + " expected " + shape_string(expected_shape) + " got " + shape_string(t.sizes()));
    }
    return t;
}

std::vector<std::string> TensorArchive::names() const {
    std::vector<std::string> out;
    out.reserve(tensors_.size());
    for (const auto& [name, _] : tensors_) {
        out.push_back(name);
    }
    return out;
}

std::vector<std::string> TensorArchive::names_with_prefix(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : tensors_) {
        if (std::string_view(name).starts_with(prefix)) {
            out.push_back(name);
        }
    }
    return out;
}

std::uint64_t TensorArchive::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, tensor] : tensors_) {
        h = fnv1a64(name.data(), name.size(), h);
        h = tensor_checksum(tensor, h);
    }
    return h;
}

} // namespace itstyler
