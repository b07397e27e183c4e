// Shared test fixtures and independent oracles. Oracles here deliberately
// re-derive expected values from scratch (per-character counting, by-hand
// subword lookup, string arithmetic) so they stay decoupled from the
// implementation paths they check.
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "toxspan/corpus.hpp"
#include "toxspan/embeddings.hpp"
#include "toxspan/util.hpp"

namespace testutil {

namespace fs = std::filesystem;

/// Fresh scratch directory under the build tree.
inline std::string tmp_dir(const std::string& name) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() / ("toxspan_test_" + name + "_" +
                                                std::to_string(::getpid()) + "_" +
                                                std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

// ---------------------------------------------------------------------------
// Character-level span F1 oracle: iterates every character position and
// counts tp/fp/fn, instead of set intersection.
// ---------------------------------------------------------------------------

inline double brute_force_span_f1(const std::vector<int>& S, const std::vector<int>& G,
                                  int text_len) {
    if (S.empty() && G.empty()) return 1.0;
    if (S.empty() || G.empty()) return 0.0;
    std::set<int> s(S.begin(), S.end()), g(G.begin(), G.end());
    int tp = 0, fp = 0, fn = 0;
    for (int c = 0; c < text_len; ++c) {
        bool in_s = s.count(c) > 0, in_g = g.count(c) > 0;
        if (in_s && in_g) ++tp;
        else if (in_s) ++fp;
        else if (in_g) ++fn;
    }
    if (tp == 0) return 0.0;
    double p = static_cast<double>(tp) / (tp + fp);
    double r = static_cast<double>(tp) / (tp + fn);
    return 2.0 * p * r / (p + r);
}

inline std::vector<int> random_offset_set(std::mt19937_64& rng, int text_len, double density) {
    std::vector<int> out;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int c = 0; c < text_len; ++c)
        if (u(rng) < density) out.push_back(c);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixture: posts with planted toxic keywords whose gold offsets
// come from plain string arithmetic, never from the tokenizer under test.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& benign_words() {
    static const std::vector<std::string> w = {
        "the",   "quick", "brown",  "fox",    "jumps", "over",  "lazy",  "dog",
        "today", "here",  "please", "thanks", "hello", "world", "good",  "morning",
        "coffee", "house", "garden", "river",  "stone", "cloud", "music", "paper",
        "light", "green", "table",  "chair",  "window", "door",  "street", "friend",
        "happy", "small", "large",  "quiet",  "early",  "late",  "north",  "south"};
    return w;
}

inline const std::vector<std::string>& toxic_words() {
    static const std::vector<std::string> w = {"idiot", "stupid", "moron", "fool", "trash",
                                               "loser", "dumb",   "jerk",  "scum", "clown"};
    return w;
}

inline std::vector<toxspan::Post> make_synthetic_posts(int count, uint64_t seed,
                                                       int min_words = 4, int max_words = 10) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> n_words(min_words, max_words);
    std::uniform_int_distribution<int> n_toxic(1, 3);
    std::uniform_int_distribution<size_t> pick_benign(0, benign_words().size() - 1);
    std::uniform_int_distribution<size_t> pick_toxic(0, toxic_words().size() - 1);

    std::vector<toxspan::Post> posts;
    for (int p = 0; p < count; ++p) {
        int total = n_words(rng);
        int toxic = std::min(n_toxic(rng), total);
        std::vector<std::pair<std::string, bool>> words;
        for (int i = 0; i < total - toxic; ++i) words.emplace_back(benign_words()[pick_benign(rng)], false);
        for (int i = 0; i < toxic; ++i) words.emplace_back(toxic_words()[pick_toxic(rng)], true);
        std::shuffle(words.begin(), words.end(), rng);

        toxspan::Post post;
        post.id = std::to_string(p);
        int offset = 0;
        for (size_t i = 0; i < words.size(); ++i) {
            if (i) {
                post.text += ' ';
                ++offset;
            }
            if (words[i].second)
                for (size_t c = 0; c < words[i].first.size(); ++c)
                    post.gold_offsets.push_back(offset + static_cast<int>(c));
            post.text += words[i].first;
            offset += static_cast<int>(words[i].first.size());
        }
        posts.push_back(std::move(post));
    }
    return posts;
}

inline std::string bracketed(const std::vector<int>& offsets) {
    std::string out = "[";
    for (size_t i = 0; i < offsets.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(offsets[i]);
    }
    return out + "]";
}

/// CSV file in the TSD release layout for a list of posts.
inline std::string posts_to_csv(const std::vector<toxspan::Post>& posts) {
    std::string out = "spans,text\n";
    for (const auto& p : posts) {
        out += "\"" + bracketed(p.gold_offsets) + "\",";
        std::string quoted = "\"";
        for (char c : p.text) {
            if (c == '"') quoted += "\"\"";
            else quoted.push_back(c);
        }
        quoted += "\"";
        out += quoted + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Toy embedding sources
// ---------------------------------------------------------------------------

/// Random matrix over a vocabulary; pad and unk rows stay zero.
inline toxspan::EmbeddingMatrix make_toy_matrix(const toxspan::Vocabulary& vocab, int dim,
                                                uint64_t seed) {
    toxspan::EmbeddingMatrix m;
    m.rows = vocab.size();
    m.cols = dim;
    m.lm_dim = dim;
    m.config_name = "toy";
    m.vocab_hash = vocab.hash();
    m.data.assign(static_cast<size_t>(m.rows) * dim, 0.0f);
    m.oov_mask.assign(static_cast<size_t>(m.rows), 0);
    m.oov_mask[0] = m.oov_mask[1] = 1;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    for (int r = 2; r < m.rows; ++r) {
        float* row = m.row(r);
        for (int d = 0; d < dim; ++d) row[d] = u(rng);
    }
    return m;
}

/// GloVe-format text file covering `covered` words with random vectors.
inline void write_toy_glove(const std::string& path, const std::vector<std::string>& covered,
                            int dim, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::string out;
    char buf[32];
    for (const auto& w : covered) {
        out += w;
        for (int d = 0; d < dim; ++d) {
            std::snprintf(buf, sizeof(buf), " %.4f", u(rng));
            out += buf;
        }
        out += '\n';
    }
    toxspan::write_text_file(path, out);
}

/// A byte-level BPE checkpoint over the lowercase alphabet: every letter is
/// a base token, plus a few ranked merges so multi-subword pooling gets
/// exercised. The embedding table is random but seeded.
inline void write_toy_lm_checkpoint(const std::string& dir, int dim, uint64_t seed,
                                    const std::vector<std::string>& merges = {"t h", "th e",
                                                                              "h e", "e r",
                                                                              "i n", "a n"}) {
    fs::create_directories(dir);
    nlohmann::json vocab = nlohmann::json::object();
    int id = 0;
    vocab["<unk>"] = id++;
    for (char c = 'a'; c <= 'z'; ++c) vocab[std::string(1, c)] = id++;
    for (const auto& m : merges) {
        std::string merged;
        for (char c : m)
            if (c != ' ') merged.push_back(c);
        if (!vocab.contains(merged)) vocab[merged] = id++;
    }
    toxspan::write_text_file((fs::path(dir) / "vocab.json").string(), vocab.dump());

    std::string merges_txt = "#version: toy\n";
    for (const auto& m : merges) merges_txt += m + "\n";
    toxspan::write_text_file((fs::path(dir) / "merges.txt").string(), merges_txt);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> table(static_cast<size_t>(id) * dim);
    for (auto& v : table) v = u(rng);
    toxspan::save_lm_table((fs::path(dir) / "embeddings.bin").string(), id, dim, table);
}

}  // namespace testutil
