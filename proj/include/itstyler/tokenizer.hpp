#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace itstyler::backbones {

/// CLIP byte-level BPE tokenizer.
///
/// The vocabulary is derived from the merge list exactly as CLIP does it:
/// 256 byte symbols, the same 256 with an end-of-word marker, one entry per
/// merge, then `<|startoftext|>` and `<|endoftext|>`.
class ClipTokenizer {
public:
    static constexpr int64_t kContextLength = 77;

    /// `merges` holds "left right" pairs in rank order (merges.txt without
    /// the version header).
    explicit ClipTokenizer(const std::vector<std::string>& merges);

    /// BPE ids of the cleaned, lower-cased text without start/end markers.
    std::vector<int64_t> encode(const std::string& text) const;

    /// [sot] + encode(text) + [eot]. Throws Error(EmptyPrompt) when the text
    /// has no tokens and Error(PromptTooLong) beyond the context length.
    std::vector<int64_t> encode_prompt(const std::string& text) const;

    int64_t vocab_size() const { return static_cast<int64_t>(id_to_token_.size()); }
    int64_t sot_id() const { return sot_id_; }
    int64_t eot_id() const { return eot_id_; }
    const std::string& token(int64_t id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }

    /// Splits cleaned text the way CLIP's pre-tokenizer regex does.
    static std::vector<std::string> pre_tokenize(const std::string& cleaned);
    /// Whitespace collapse, trim and ASCII lower-casing.
    static std::string clean(const std::string& text);

private:
    std::vector<std::string> bpe(const std::string& word) const;

    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int64_t> token_to_id_;
    std::map<std::pair<std::string, std::string>, int> ranks_;
    std::vector<std::string> byte_encoder_;
    int64_t sot_id_ = 0;
    int64_t eot_id_ = 0;
};

/// The 256-entry byte -> printable UTF-8 symbol table used by GPT-2/CLIP.
std::vector<std::string> bytes_to_unicode();

} // namespace itstyler::backbones
