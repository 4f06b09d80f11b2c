#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "esrt/errors.hpp"

namespace esrt {

struct VocabError : Error {
    using Error::Error;
};

// Byte-level vocabulary with reserved slots repurposed as language tokens:
//
//   0..255    raw bytes
//   256       <eos>
//   257       <pad>
//   258..359  102 reserved slots; the 45 supported languages each claim one,
//             the rest stay <unusedN>
//
// Language identity never appears as text on the wire; prompts carry these
// ids as opaque integers.
class Vocabulary {
public:
    static constexpr uint32_t kEos = 256;
    static constexpr uint32_t kPad = 257;
    static constexpr uint32_t kLangBase = 258;
    static constexpr uint32_t kLangSlots = 102;

    static const Vocabulary& standard();

    uint32_t size() const { return kLangBase + kLangSlots; }  // 360
    uint32_t eos_id() const { return kEos; }

    bool is_language_token(uint32_t id) const {
        return id >= kLangBase && id < kLangBase + kLangSlots;
    }

    // 3-letter code (e.g. "eng", "cmn") -> token id; throws on unknown code
    uint32_t language_id(const std::string& code) const;
    // inverse; nullopt for non-language or unpopulated slot ids
    std::optional<std::string> language_code(uint32_t id) const;

    // display string for one id: bytes render as themselves, languages as
    // "<|xxx|>", specials as "<eos>"/"<pad>"/"<unusedN>"
    std::string token_string(uint32_t id) const;

    // UTF-8 text -> byte token ids
    std::vector<uint32_t> tokenize(const std::string& text) const;
    // id sequence -> display text (language ids become "<|xxx|>" markers)
    std::string detokenize(std::span<const uint32_t> ids) const;

    const std::vector<std::string>& language_codes() const { return codes_; }

private:
    Vocabulary();

    std::vector<std::string> codes_;                      // 45 populated codes
    std::unordered_map<std::string, uint32_t> code_to_id_;
    std::unordered_map<uint32_t, std::string> id_to_code_;
};

} // namespace esrt
