#include "itstyler/tokenizer.hpp"

#include "itstyler/error.hpp"

#include <algorithm>
#include <array>
#include <limits>

namespace itstyler::backbones {

namespace {

constexpr std::string_view kEndOfWord = "</w>";
constexpr std::string_view kSot = "<|startoftext|>";
constexpr std::string_view kEot = "<|endoftext|>";

std::string utf8(uint32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
    return out;
}

// Byte order in which CLIP enumerates the base vocabulary.
std::vector<int> byte_vocab_order() {
    std::vector<int> bs;
    for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
    std::array<bool, 256> printable{};
    for (int b : bs) printable[static_cast<std::size_t>(b)] = true;
    for (int b = 0; b < 256; ++b) {
        if (!printable[static_cast<std::size_t>(b)]) bs.push_back(b);
    }
    return bs;
}

struct CodePoint {
    uint32_t value;
    std::size_t begin;
    std::size_t length;
};

std::vector<CodePoint> decode_utf8(const std::string& s) {
    std::vector<CodePoint> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        uint32_t cp = c;
        if (c >= 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else if (c >= 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if (c >= 0xC0) {
            len = 2;
            cp = c & 0x1F;
        }
        if (i + len > s.size()) {
            len = 1;
            cp = c;
        } else {
            for (std::size_t k = 1; k < len; ++k) {
                cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
            }
        }
        out.push_back({cp, i, len});
        i += len;
    }
    return out;
}

bool is_space(uint32_t cp) { return cp == ' ' || (cp >= 0x09 && cp <= 0x0D) || cp == 0x85 || cp == 0xA0 || cp == 0x3000; }
bool is_digit(uint32_t cp) { return cp >= '0' && cp <= '9'; }
// Non-ASCII code points are treated as letters (no Unicode category tables).
bool is_letter(uint32_t cp) { return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= 0x80 && !is_space(cp)); }

} // namespace

std::vector<std::string> bytes_to_unicode() {
    std::vector<std::string> table(256);
    const auto order = byte_vocab_order();
    uint32_t n = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int b = order[i];
        const bool printable = i < 188;
        table[static_cast<std::size_t>(b)] = utf8(printable ? static_cast<uint32_t>(b) : 256 + n++);
    }
    return table;
}

ClipTokenizer::ClipTokenizer(const std::vector<std::string>& merges) : byte_encoder_(bytes_to_unicode()) {
    for (int b : byte_vocab_order()) {
        id_to_token_.push_back(byte_encoder_[static_cast<std::size_t>(b)]);
    }
    for (std::size_t i = 0; i < 256; ++i) {
        id_to_token_.push_back(id_to_token_[i] + std::string(kEndOfWord));
    }
    int rank = 0;
    for (const auto& line : merges) {
        const auto space = line.find(' ');
        if (space == std::string::npos || space == 0 || space + 1 >= line.size()) {
            throw Error(Errc::UnreadableArchive, "malformed BPE merge '" + line + "'");
        }
        auto left = line.substr(0, space);
        auto right = line.substr(space + 1);
        id_to_token_.push_back(left + right);
        ranks_.emplace(std::make_pair(std::move(left), std::move(right)), rank++);
    }
    sot_id_ = static_cast<int64_t>(id_to_token_.size());
    id_to_token_.emplace_back(kSot);
    eot_id_ = static_cast<int64_t>(id_to_token_.size());
    id_to_token_.emplace_back(kEot);
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        token_to_id_.emplace(id_to_token_[i], static_cast<int64_t>(i));
    }
}

std::string ClipTokenizer::clean(const std::string& text) {
    std::string out;
    bool pending_space = false;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 0x80 && is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    }
    return out;
}

std::vector<std::string> ClipTokenizer::pre_tokenize(const std::string& cleaned) {
    static constexpr std::array<std::string_view, 7> kContractions = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
    const auto cps = decode_utf8(cleaned);
    std::vector<std::string> out;
    std::size_t i = 0;
    auto byte_at = [&](std::size_t idx) { return idx < cps.size() ? cps[idx].begin : cleaned.size(); };
    while (i < cps.size()) {
        const auto cp = cps[i].value;
        const std::string_view rest(cleaned.data() + cps[i].begin, cleaned.size() - cps[i].begin);
        if (rest.starts_with(kSot) || rest.starts_with(kEot)) {
            const auto len = rest.starts_with(kSot) ? kSot.size() : kEot.size();
            out.emplace_back(rest.substr(0, len));
            const auto end = cps[i].begin + len;
            while (i < cps.size() && cps[i].begin < end) ++i;
            continue;
        }
        if (cp == '\'') {
            bool matched = false;
            for (auto c : kContractions) {
                if (rest.starts_with(c)) {
                    out.emplace_back(c);
                    i += c.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        if (is_space(cp)) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (is_letter(cp)) {
            while (j < cps.size() && is_letter(cps[j].value)) ++j;
        } else if (!is_digit(cp)) {
            while (j < cps.size() && !is_space(cps[j].value) && !is_letter(cps[j].value) && !is_digit(cps[j].value)) ++j;
        }
        out.push_back(cleaned.substr(cps[i].begin, byte_at(j) - cps[i].begin));
        i = j;
    }
    return out;
}

std::vector<std::string> ClipTokenizer::bpe(const std::string& word) const {
    std::vector<std::string> symbols;
    for (unsigned char c : word) {
        symbols.push_back(byte_encoder_[c]);
    }
    if (symbols.empty()) return symbols;
    symbols.back() += kEndOfWord;
    while (symbols.size() > 1) {
        int best_rank = std::numeric_limits<int>::max();
        std::size_t best = 0;
        for (std::size_t k = 0; k + 1 < symbols.size(); ++k) {
            auto it = ranks_.find({symbols[k], symbols[k + 1]});
            if (it != ranks_.end() && it->second < best_rank) {
                best_rank = it->second;
                best = k;
            }
        }
        if (best_rank == std::numeric_limits<int>::max()) break;
        const std::string left = symbols[best];
        const std::string right = symbols[best + 1];
        std::vector<std::string> merged;
        merged.reserve(symbols.size());
        for (std::size_t k = 0; k < symbols.size(); ++k) {
            if (k + 1 < symbols.size() && symbols[k] == left && symbols[k + 1] == right) {
                merged.push_back(left + right);
                ++k;
            } else {
                merged.push_back(symbols[k]);
            }
        }
        symbols = std::move(merged);
    }
    return symbols;
}

std::vector<int64_t> ClipTokenizer::encode(const std::string& text) const {
    std::vector<int64_t> ids;
    for (const auto& piece : pre_tokenize(clean(text))) {
        if (piece == kSot) {
            ids.push_back(sot_id_);
            continue;
        }
        if (piece == kEot) {
            ids.push_back(eot_id_);
            continue;
        }
        for (const auto& sym : bpe(piece)) {
            auto it = token_to_id_.find(sym);
            ids.push_back(it == token_to_id_.end() ? eot_id_ : it->second);
        }
    }
    return ids;
}

std::vector<int64_t> ClipTokenizer::encode_prompt(const std::string& text) const {
    auto body = encode(text);
    if (body.empty()) {
        throw Error(Errc::EmptyPrompt, "prompt has no tokens");
    }
    const auto total = static_cast<int64_t>(body.size()) + 2;
    if (total > kContextLength) {
        throw Error(Errc::PromptTooLong, std::to_string(total) + " tokens (limit " + std::to_string(kContextLength) + ")");
    }
    std::vector<int64_t> ids;
    ids.reserve(body.size() + 2);
    ids.push_back(sot_id_);
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(eot_id_);
    return ids;
}

} // namespace itstyler::backbones
