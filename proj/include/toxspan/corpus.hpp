// Corpus handling: the TSD data format, offset-preserving tokenization,
// token preprocessing and labeling, and the training vocabulary.
//
// All offsets count Unicode code points of the original post text. A token
// never loses its (start, end) range, no matter what preprocessing does to
// its surface form; predictions are mapped back through these ranges.
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "toxspan/csv.hpp"
#include "toxspan/util.hpp"

namespace toxspan {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One annotated post: raw text plus the gold toxic character offsets.
/// Offsets are kept sorted and unique.
struct Post {
    std::string id;
    std::string text;
    std::vector<int> gold_offsets;
    bool unlabeled = false;
};

/// A token with its surface form, preprocessed form, character range
/// against the owning post, and toxicity label.
struct TokenSpan {
    std::string raw;
    std::string clean;
    int start = 0;  // inclusive, code points
    int end = 0;    // exclusive, code points
    bool toxic = false;

    bool removable() const { return clean.empty(); }
};

/// Word -> dense index map. Index 0 is padding, index 1 is the
/// unknown-at-inference word; real entries start at 2, sorted.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr const char* kPadWord = "<pad>";
    static constexpr const char* kUnkWord = "<unk>";

    std::vector<std::string> words;  // index -> word, reserved entries included
    std::unordered_map<std::string, int> index;

    int size() const { return static_cast<int>(words.size()); }
    int non_reserved_size() const { return size() - 2; }

    int lookup(const std::string& w) const {
        auto it = index.find(w);
        return it == index.end() ? kUnk : it->second;
    }

    /// Fingerprint of the word list in index order; stored in artifact
    /// headers so matrices and checkpoints can be verified against the
    /// vocabulary they were built for.
    std::string hash() const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& w : words) {
            h = fnv1a64(w, h);
            h = fnv1a64("\n", h);
        }
        return to_hex(h);
    }
};

// ---------------------------------------------------------------------------
// Parsing the dataset format
// ---------------------------------------------------------------------------

enum class DatasetFormat { CsvWithSpans, CsvTextOnly };

/// Parses a bracketed integer-list literal like "[3, 4, 5]" or "[]".
/// Duplicates are collapsed; the result is sorted.
inline std::vector<int> parse_span_literal(std::string_view s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    if (a == std::string_view::npos || s[a] != '[' || s[b] != ']')
        throw ParseError("span literal must be bracketed: '" + std::string(s) + "'");
    std::string body(s.substr(a + 1, b - a - 1));
    std::vector<int> out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t x = item.find_first_not_of(" \t");
        size_t y = item.find_last_not_of(" \t");
        if (x == std::string::npos) {
            if (out.empty() && ss.eof()) break;  // "[]"
            throw ParseError("empty element in span literal");
        }
        std::string tok = item.substr(x, y - x + 1);
        size_t pos = 0;
        long v = 0;
        try {
            v = std::stol(tok, &pos);
        } catch (const std::exception&) {
            throw ParseError("bad integer in span literal: '" + tok + "'");
        }
        if (pos != tok.size()) throw ParseError("bad integer in span literal: '" + tok + "'");
        if (v < 0) throw ParseError("negative offset in span literal: " + tok);
        out.push_back(static_cast<int>(v));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Reads a CSV file in the TSD release layout into posts. Row ids are the
/// 0-based data-row numbers. Text-only files yield unlabeled posts.
inline std::vector<Post> parse_dataset(const std::string& path, DatasetFormat format) {
    csv::Table table = csv::read_file(path);
    if (table.header.empty()) throw FormatError(path + ": missing header row");
    int text_col = table.column("text");
    if (text_col < 0) throw FormatError(path + ": no 'text' column in header");
    int spans_col = -1;
    if (format == DatasetFormat::CsvWithSpans) {
        spans_col = table.column("spans");
        if (spans_col < 0) throw FormatError(path + ": no 'spans' column in header");
    }

    std::vector<Post> posts;
    posts.reserve(table.rows.size());
    for (size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        Post p;
        p.id = std::to_string(r);
        if (static_cast<size_t>(text_col) >= row.size())
            throw ParseError(path + ": row " + std::to_string(r + 1) + ": missing text column");
        p.text = row[static_cast<size_t>(text_col)];
        if (format == DatasetFormat::CsvWithSpans) {
            if (static_cast<size_t>(spans_col) >= row.size())
                throw ParseError(path + ": row " + std::to_string(r + 1) + ": missing spans column");
            try {
                p.gold_offsets = parse_span_literal(row[static_cast<size_t>(spans_col)]);
            } catch (const ParseError& e) {
                throw ParseError(path + ": row " + std::to_string(r + 1) + ": " + e.what());
            }
            size_t n = utf8::length(p.text);
            for (int off : p.gold_offsets)
                if (static_cast<size_t>(off) >= n)
                    throw ValidationError("post " + p.id + ": gold offset " + std::to_string(off) +
                                          " >= text length " + std::to_string(n));
        } else {
            p.unlabeled = true;
        }
        posts.push_back(std::move(p));
    }
    return posts;
}

// ---------------------------------------------------------------------------
// Tokenization and preprocessing
// ---------------------------------------------------------------------------

// Splits on Unicode whitespace, then peels leading/trailing ASCII-punctuation
// runs off each chunk as their own tokens. Interior punctuation stays put, so
// obfuscations like "f**k" survive as one token.
inline std::vector<TokenSpan> tokenize(std::string_view text) {
    std::vector<TokenSpan> tokens;
    auto cps = utf8::decode(text);
    size_t n = cps.size();

    auto emit = [&](size_t s, size_t e) {
        TokenSpan t;
        t.start = static_cast<int>(s);
        t.end = static_cast<int>(e);
        size_t b0 = cps[s].byte_off;
        size_t b1 = cps[e - 1].byte_off + cps[e - 1].byte_len;
        t.raw = std::string(text.substr(b0, b1 - b0));
        tokens.push_back(std::move(t));
    };

    size_t i = 0;
    while (i < n) {
        if (utf8::is_space(cps[i].value)) {
            ++i;
            continue;
        }
        size_t j = i;
        while (j < n && !utf8::is_space(cps[j].value)) ++j;

        size_t a = i;
        while (a < j && utf8::is_ascii_punct(cps[a].value)) ++a;
        size_t b = j;
        while (b > a && utf8::is_ascii_punct(cps[b - 1].value)) --b;

        if (a > i) emit(i, a);
        if (a < b) emit(a, b);
        if (b < j) emit(b, j);
        i = j;
    }
    return tokens;
}

/// Lowercases and strips everything that is not an ASCII letter: punctuation,
/// digits, and all non-ASCII code points (including emoji). Offsets and the
/// raw form are untouched.
inline TokenSpan preprocess(TokenSpan token) {
    std::string clean;
    clean.reserve(token.raw.size());
    for (const auto& cp : utf8::decode(token.raw)) {
        if (utf8::is_ascii_letter(cp.value)) {
            char c = static_cast<char>(cp.value);
            clean.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
        }
    }
    token.clean = std::move(clean);
    return token;
}

inline std::vector<TokenSpan> preprocess_all(std::vector<TokenSpan> tokens) {
    for (auto& t : tokens) t = preprocess(std::move(t));
    return tokens;
}

/// Assigns toxicity: a token is toxic iff its [start, end) range shares at
/// least one offset with the gold set. Removable tokens are dropped.
inline std::vector<TokenSpan> label_tokens(const Post& post, std::vector<TokenSpan> tokens) {
    std::vector<TokenSpan> out;
    out.reserve(tokens.size());
    for (auto& t : tokens) {
        if (t.removable()) continue;
        auto lo = std::lower_bound(post.gold_offsets.begin(), post.gold_offsets.end(), t.start);
        t.toxic = lo != post.gold_offsets.end() && *lo < t.end;
        out.push_back(std::move(t));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tagged corpus: posts with their surviving labeled tokens
// ---------------------------------------------------------------------------

struct TaggedPost {
    std::string id;
    std::string text;
    std::vector<int> gold_offsets;
    bool unlabeled = false;
    std::vector<TokenSpan> tokens;
};

using TaggedCorpus = std::vector<TaggedPost>;

inline TaggedPost tag_post(const Post& post) {
    TaggedPost tp;
    tp.id = post.id;
    tp.text = post.text;
    tp.gold_offsets = post.gold_offsets;
    tp.unlabeled = post.unlabeled;
    tp.tokens = label_tokens(post, preprocess_all(tokenize(post.text)));
    return tp;
}

inline TaggedCorpus tag_corpus(const std::vector<Post>& posts) {
    TaggedCorpus out;
    out.reserve(posts.size());
    for (const auto& p : posts) out.push_back(tag_post(p));
    return out;
}

/// Builds the training vocabulary from surviving clean forms, sorted
/// lexicographically for reproducible indexing.
inline Vocabulary build_vocabulary(const TaggedCorpus& corpus) {
    std::set<std::string> uniq;
    for (const auto& post : corpus)
        for (const auto& t : post.tokens) uniq.insert(t.clean);
    Vocabulary v;
    v.words.reserve(uniq.size() + 2);
    v.words.push_back(Vocabulary::kPadWord);
    v.words.push_back(Vocabulary::kUnkWord);
    v.words.insert(v.words.end(), uniq.begin(), uniq.end());
    for (size_t i = 0; i < v.words.size(); ++i)
        v.index.emplace(v.words[i], static_cast<int>(i));
    return v;
}

// ---------------------------------------------------------------------------
// Fixed-length encoding for the tagger
// ---------------------------------------------------------------------------

// Per-position class ids of the 3-class prediction head.
constexpr int kClassPad = 0;
constexpr int kClassNonToxic = 1;
constexpr int kClassToxic = 2;

struct EncodedPost {
    std::vector<int> ids;     // length max_len, right-padded with kPad
    std::vector<int> labels;  // length max_len, right-padded with kClassPad
    int length = 0;           // true token count after truncation
};

inline EncodedPost encode(const std::vector<TokenSpan>& tokens, const Vocabulary& vocab,
                          int max_len) {
    if (max_len < 1) throw UsageError("encode: max_len must be >= 1");
    EncodedPost e;
    e.ids.assign(static_cast<size_t>(max_len), Vocabulary::kPad);
    e.labels.assign(static_cast<size_t>(max_len), kClassPad);
    e.length = std::min<int>(static_cast<int>(tokens.size()), max_len);
    for (int i = 0; i < e.length; ++i) {
        const auto& t = tokens[static_cast<size_t>(i)];
        e.ids[static_cast<size_t>(i)] = vocab.lookup(t.clean);
        e.labels[static_cast<size_t>(i)] = t.toxic ? kClassToxic : kClassNonToxic;
    }
    return e;
}

// ---------------------------------------------------------------------------
// Serialization: tokenized-corpus JSONL and the vocabulary file
// ---------------------------------------------------------------------------

// One JSON record per post. Field names are part of the toolkit's public
// file contract (see README): id, text, gold, unlabeled, tokens[].{raw,
// clean, start, end, toxic}.
inline std::string corpus_to_jsonl(const TaggedCorpus& corpus) {
    std::string out;
    for (const auto& p : corpus) {
        nlohmann::json rec;
        rec["id"] = p.id;
        rec["text"] = p.text;
        rec["gold"] = p.gold_offsets;
        rec["unlabeled"] = p.unlabeled;
        auto toks = nlohmann::json::array();
        for (const auto& t : p.tokens) {
            toks.push_back({{"raw", t.raw},
                            {"clean", t.clean},
                            {"start", t.start},
                            {"end", t.end},
                            {"toxic", t.toxic}});
        }
        rec["tokens"] = std::move(toks);
        out += rec.dump();
        out += '\n';
    }
    return out;
}

inline TaggedCorpus corpus_from_jsonl(std::string_view data) {
    TaggedCorpus corpus;
    size_t pos = 0;
    size_t line_no = 0;
    while (pos < data.size()) {
        size_t nl = data.find('\n', pos);
        if (nl == std::string_view::npos) nl = data.size();
        std::string_view line = data.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        TaggedPost p;
        p.id = rec.at("id").get<std::string>();
        p.text = rec.at("text").get<std::string>();
        p.gold_offsets = rec.at("gold").get<std::vector<int>>();
        p.unlabeled = rec.at("unlabeled").get<bool>();
        for (const auto& t : rec.at("tokens")) {
            TokenSpan ts;
            ts.raw = t.at("raw").get<std::string>();
            ts.clean = t.at("clean").get<std::string>();
            ts.start = t.at("start").get<int>();
            ts.end = t.at("end").get<int>();
            ts.toxic = t.at("toxic").get<bool>();
            p.tokens.push_back(std::move(ts));
        }
        corpus.push_back(std::move(p));
    }
    return corpus;
}

inline void save_corpus(const std::string& path, const TaggedCorpus& corpus) {
    write_text_file(path, corpus_to_jsonl(corpus));
}

inline TaggedCorpus load_corpus(const std::string& path) {
    return corpus_from_jsonl(read_text_file(path));
}

/// Vocabulary file: one word per line in index order, reserved markers first.
inline void save_vocabulary(const std::string& path, const Vocabulary& v) {
    std::string out;
    for (const auto& w : v.words) {
        out += w;
        out += '\n';
    }
    write_text_file(path, out);
}

inline Vocabulary load_vocabulary(const std::string& path) {
    std::string data = read_text_file(path);
    Vocabulary v;
    size_t pos = 0;
    while (pos < data.size()) {
        size_t nl = data.find('\n', pos);
        if (nl == std::string::npos) nl = data.size();
        v.words.push_back(data.substr(pos, nl - pos));
        pos = nl + 1;
    }
    while (!v.words.empty() && v.words.back().empty()) v.words.pop_back();
    if (v.words.size() < 2 || v.words[0] != Vocabulary::kPadWord || v.words[1] != Vocabulary::kUnkWord)
        throw FormatError(path + ": not a vocabulary file (missing reserved entries)");
    for (size_t i = 0; i < v.words.size(); ++i)
        v.index.emplace(v.words[i], static_cast<int>(i));
    return v;
}

}  // namespace toxspan
