#include "esrt/vocab.hpp"

namespace esrt {

namespace {

// the 45 supported languages, in language-family order
const char* kLanguages[] = {
    "ara", "heb",                                             // Afro-Asiatic
    "khm", "vie",                                             // Austroasiatic
    "ind", "msa", "tgl",                                      // Austronesian
    "tam",                                                    // Dravidian
    "ben", "bul", "cat", "ces", "dan", "deu", "ell", "eng",   // Indo-European
    "fas", "fra", "hin", "hrv", "ita", "nld", "nob", "pol",
    "por", "ron", "rus", "slk", "slv", "spa", "swe", "urd",
    "jpn",                                                    // Japonic
    "kor",                                                    // Koreanic
    "lao", "tha",                                             // Kra-Dai
    "cmn", "mya", "yue",                                      // Sino-Tibetan
    "azj", "kaz", "tur", "uzb",                               // Turkic
    "fin", "hun",                                             // Uralic
};

} // namespace

Vocabulary::Vocabulary() {
    uint32_t slot = 0;
    for (const char* code : kLanguages) {
        const uint32_t id = kLangBase + slot;
        codes_.emplace_back(code);
        code_to_id_.emplace(code, id);
        id_to_code_.emplace(id, code);
        ++slot;
    }
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary v;
    return v;
}

uint32_t Vocabulary::language_id(const std::string& code) const {
    auto it = code_to_id_.find(code);
    if (it == code_to_id_.end()) {
        throw VocabError("unknown language code: " + code);
    }
    return it->second;
}

std::optional<std::string> Vocabulary::language_code(uint32_t id) const {
    auto it = id_to_code_.find(id);
    if (it == id_to_code_.end()) return std::nullopt;
    return it->second;
}

std::string Vocabulary::token_string(uint32_t id) const {
    if (id < 256) return std::string(1, static_cast<char>(id));
    if (id == kEos) return "<eos>";
    if (id == kPad) return "<pad>";
    if (is_language_token(id)) {
        if (auto code = language_code(id)) return "<|" + *code + "|>";
        return "<unused" + std::to_string(id - kLangBase) + ">";
    }
    throw VocabError("token id " + std::to_string(id) + " out of range");
}

std::vector<uint32_t> Vocabulary::tokenize(const std::string& text) const {
    std::vector<uint32_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    return ids;
}

std::string Vocabulary::detokenize(std::span<const uint32_t> ids) const {
    std::string out;
    for (uint32_t id : ids) {
        if (id == kEos || id == kPad) continue;
        out += token_string(id);
    }
    return out;
}

} // namespace esrt
