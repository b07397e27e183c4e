// Byte-level BPE, the subword scheme shared by the GPT-2 and RoBERTa
// tokenizers: bytes are remapped to printable code points, then adjacent
// symbol pairs are merged greedily by rank from merges.txt.
#pragma once

#include <array>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "toxspan/util.hpp"

namespace toxspan {

// The standard byte -> code point table: printable latin bytes map to
// themselves, everything else is shifted into 0x100+.
inline const std::array<char32_t, 256>& byte_to_unicode() {
    static const std::array<char32_t, 256> table = [] {
        std::array<char32_t, 256> t{};
        std::array<bool, 256> direct{};
        auto mark = [&](int lo, int hi) {
            for (int b = lo; b <= hi; ++b) direct[static_cast<size_t>(b)] = true;
        };
        mark(0x21, 0x7E);
        mark(0xA1, 0xAC);
        mark(0xAE, 0xFF);
        char32_t next = 256;
        for (int b = 0; b < 256; ++b) {
            t[static_cast<size_t>(b)] =
                direct[static_cast<size_t>(b)] ? static_cast<char32_t>(b) : next++;
        }
        return t;
    }();
    return table;
}

/// A byte-level BPE tokenizer loaded from vocab.json + merges.txt.
class ByteBpe {
public:
    ByteBpe() = default;

    static ByteBpe load(const std::string& vocab_json_path, const std::string& merges_path) {
        ByteBpe bpe;
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(read_text_file(vocab_json_path));
        } catch (const std::exception& e) {
            throw FormatError(vocab_json_path + ": " + e.what());
        }
        for (auto it = v.begin(); it != v.end(); ++it)
            bpe.vocab_.emplace(it.key(), it.value().get<int>());

        std::string merges = read_text_file(merges_path);
        size_t pos = 0;
        int rank = 0;
        size_t line_no = 0;
        while (pos < merges.size()) {
            size_t nl = merges.find('\n', pos);
            if (nl == std::string::npos) nl = merges.size();
            std::string_view line(merges.data() + pos, nl - pos);
            pos = nl + 1;
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty() || line.front() == '#') continue;  // "#version" header
            size_t sp = line.find(' ');
            if (sp == std::string_view::npos || sp == 0 || sp + 1 == line.size())
                throw FormatError(merges_path + ": line " + std::to_string(line_no) +
                                  ": expected two space-separated symbols");
            bpe.merge_rank_.emplace(std::string(line), rank++);
        }
        return bpe;
    }

    /// Splits one word (treated in isolation, no context, no leading space)
    /// into byte-level BPE symbol strings.
    std::vector<std::string> encode_symbols(std::string_view word) const {
        std::vector<std::string> symbols;
        symbols.reserve(word.size());
        const auto& map = byte_to_unicode();
        for (unsigned char b : word) {
            std::string s;
            utf8::append(s, map[b]);
            symbols.push_back(std::move(s));
        }
        if (symbols.size() < 2) return symbols;

        while (true) {
            int best_rank = std::numeric_limits<int>::max();
            size_t best_i = 0;
            for (size_t i = 0; i + 1 < symbols.size(); ++i) {
                auto it = merge_rank_.find(symbols[i] + " " + symbols[i + 1]);
                if (it != merge_rank_.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best_i = i;
                }
            }
            if (best_rank == std::numeric_limits<int>::max()) break;
            symbols[best_i] += symbols[best_i + 1];
            symbols.erase(symbols.begin() + static_cast<long>(best_i) + 1);
            if (symbols.size() < 2) break;
        }
        return symbols;
    }

    /// Token ids for one word; symbols missing from the vocab map to -1.
    std::vector<int> encode(std::string_view word) const {
        std::vector<int> ids;
        for (const auto& s : encode_symbols(word)) {
            auto it = vocab_.find(s);
            ids.push_back(it == vocab_.end() ? -1 : it->second);
        }
        return ids;
    }

    int token_id(const std::string& token) const {
        auto it = vocab_.find(token);
        return it == vocab_.end() ? -1 : it->second;
    }

    /// The checkpoint's unknown-token id, -1 when it defines none.
    int unk_id() const {
        for (const char* cand : {"<unk>", "<|endoftext|>"}) {
            int id = token_id(cand);
            if (id >= 0) return id;
        }
        return -1;
    }

    size_t vocab_size() const { return vocab_.size(); }

private:
    std::unordered_map<std::string, int> vocab_;
    std::unordered_map<std::string, int> merge_rank_;  // "left right" -> rank
};

}  // namespace toxspan
