// The fused word-representation matrix: GloVe concatenated with the
// element-wise sum of GPT-2 and RoBERTa word vectors, plus the six
// single/partial configurations used by the ablation grid.
#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "toxspan/bpe.hpp"
#include "toxspan/corpus.hpp"
#include "toxspan/util.hpp"

namespace toxspan {

// ---------------------------------------------------------------------------
// Configuration names
// ---------------------------------------------------------------------------

enum class EmbSource { GloVe, GPT2, RoBERTa };

/// The seven named embedding configurations of the ablation grid.
/// RG sums RoBERTa and GPT-2; GoR / GoG concatenate GloVe with one LM;
/// Ensemble concatenates GloVe with the RoBERTa+GPT-2 sum.
struct EmbeddingConfig {
    std::string name;

    bool uses_glove = false;
    bool uses_gpt2 = false;
    bool uses_roberta = false;
    bool lm_summed = false;  // RG / Ensemble sum the two LM branches

    static EmbeddingConfig from_name(std::string_view name) {
        EmbeddingConfig c;
        c.name = std::string(name);
        if (name == "GloVe") {
            c.uses_glove = true;
        } else if (name == "GPT-2") {
            c.uses_gpt2 = true;
        } else if (name == "RoBERTa") {
            c.uses_roberta = true;
        } else if (name == "RG") {
            c.uses_gpt2 = c.uses_roberta = c.lm_summed = true;
        } else if (name == "GoR") {
            c.uses_glove = c.uses_roberta = true;
        } else if (name == "GoG") {
            c.uses_glove = c.uses_gpt2 = true;
        } else if (name == "Ensemble") {
            c.uses_glove = c.uses_gpt2 = c.uses_roberta = c.lm_summed = true;
        } else {
            throw ConfigError("unknown embedding config '" + std::string(name) +
                              "' (expected GloVe, GPT-2, RoBERTa, RG, GoR, GoG or Ensemble)");
        }
        return c;
    }

    bool uses_lm() const { return uses_gpt2 || uses_roberta; }

    int width(int glove_dim, int lm_dim) const {
        int w = 0;
        if (uses_glove) w += glove_dim;
        if (uses_lm()) w += lm_dim;
        return w;
    }
};

inline const std::vector<std::string>& all_embedding_configs() {
    static const std::vector<std::string> names = {"GloVe", "GPT-2", "RoBERTa",
                                                   "RG",    "GoR",   "GoG",   "Ensemble"};
    return names;
}

// ---------------------------------------------------------------------------
// Per-word vector tables
// ---------------------------------------------------------------------------

/// One dim-wide vector per vocabulary row (reserved rows included).
struct WordVectors {
    int dim = 0;
    int rows = 0;
    std::vector<float> data;  // rows * dim

    const float* row(int r) const { return data.data() + static_cast<size_t>(r) * dim; }
    float* row(int r) { return data.data() + static_cast<size_t>(r) * dim; }
};

struct GloveResult {
    WordVectors vectors;
    std::vector<uint8_t> oov;       // per vocab row; reserved rows count as OOV
    int oov_count = 0;              // non-reserved words absent from the file
};

/// Loads the subset of a GloVe text file covering the vocabulary. Words
/// absent from the file keep the zero vector and are reported as OOV.
inline GloveResult load_glove(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError("cannot open GloVe file: " + path);

    GloveResult res;
    res.oov.assign(static_cast<size_t>(vocab.size()), 1);
    int dim = -1;

    std::string line;
    size_t line_no = 0;
    std::vector<std::string_view> fields;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        fields.clear();
        std::string_view sv(line);
        size_t pos = 0;
        while (pos < sv.size()) {
            size_t sp = sv.find(' ', pos);
            if (sp == std::string_view::npos) sp = sv.size();
            if (sp > pos) fields.push_back(sv.substr(pos, sp - pos));
            pos = sp + 1;
        }
        if (dim < 0) {
            if (fields.size() < 2)
                throw FormatError(path + ": line " + std::to_string(line_no) + ": too few fields");
            // dimension = longest all-float suffix of the first line, which
            // also handles a multi-word token in line one
            auto is_float = [](std::string_view f) {
                std::string buf(f);
                char* endp = nullptr;
                std::strtof(buf.c_str(), &endp);
                return endp == buf.c_str() + buf.size() && !buf.empty();
            };
            size_t suffix = 0;
            while (suffix + 1 < fields.size() && is_float(fields[fields.size() - 1 - suffix]))
                ++suffix;
            if (suffix == 0)
                throw FormatError(path + ": line " + std::to_string(line_no) +
                                  ": no numeric fields");
            dim = static_cast<int>(suffix);
            res.vectors.dim = dim;
            res.vectors.rows = vocab.size();
            res.vectors.data.assign(static_cast<size_t>(vocab.size()) * dim, 0.0f);
        }
        if (static_cast<int>(fields.size()) < dim + 1)
            throw FormatError(path + ": line " + std::to_string(line_no) + ": expected " +
                              std::to_string(dim) + " values");

        // GloVe-840B contains tokens with embedded spaces: the last dim
        // fields are the vector, everything before is the word.
        size_t word_fields = fields.size() - static_cast<size_t>(dim);
        std::string word(fields[0]);
        for (size_t i = 1; i < word_fields; ++i) {
            word += ' ';
            word += fields[i];
        }
        auto it = vocab.index.find(word);
        if (it == vocab.index.end() || it->second < 2) continue;

        float* dst = res.vectors.row(it->second);
        for (int d = 0; d < dim; ++d) {
            std::string_view f = fields[word_fields + static_cast<size_t>(d)];
            char* endp = nullptr;
            std::string buf(f);
            float v = std::strtof(buf.c_str(), &endp);
            if (endp != buf.c_str() + buf.size())
                throw FormatError(path + ": line " + std::to_string(line_no) +
                                  ": bad float '" + buf + "'");
            dst[d] = v;
        }
        res.oov[static_cast<size_t>(it->second)] = 0;
    }
    if (dim < 0) throw FormatError(path + ": empty GloVe file");
    for (int r = 2; r < vocab.size(); ++r)
        if (res.oov[static_cast<size_t>(r)]) ++res.oov_count;
    return res;
}

// ---------------------------------------------------------------------------
// Language-model checkpoints
// ---------------------------------------------------------------------------

// A checkpoint directory holds the LM's own tokenizer (vocab.json +
// merges.txt) and its input-embedding table as embeddings.bin:
//   8-byte magic "LMTBL\x01\0\0", u32 rows, u32 dim, rows*dim float32 LE.
constexpr char kLmTableMagic[8] = {'L', 'M', 'T', 'B', 'L', '\x01', 0, 0};

struct LmCheckpoint {
    std::string name;  // "gpt2" or "roberta"
    ByteBpe tokenizer;
    int rows = 0;
    int dim = 0;
    std::vector<float> table;  // rows * dim
    int unk_id = -1;

    const float* row(int r) const { return table.data() + static_cast<size_t>(r) * dim; }
};

inline void save_lm_table(const std::string& path, int rows, int dim,
                          const std::vector<float>& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EnvironmentError("cannot write LM table: " + path);
    out.write(kLmTableMagic, 8);
    bin::write_u32(out, static_cast<uint32_t>(rows));
    bin::write_u32(out, static_cast<uint32_t>(dim));
    bin::write_array(out, table);
}

inline LmCheckpoint load_lm_checkpoint(const std::string& dir, const std::string& name) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw EnvironmentError(name + " checkpoint unavailable: '" + dir +
                               "' is not a directory");
    for (const char* f : {"vocab.json", "merges.txt", "embeddings.bin"})
        if (!fs::exists(fs::path(dir) / f))
            throw EnvironmentError(name + " checkpoint unavailable: missing " + dir + "/" + f);

    LmCheckpoint ckpt;
    ckpt.name = name;
    ckpt.tokenizer = ByteBpe::load((fs::path(dir) / "vocab.json").string(),
                                   (fs::path(dir) / "merges.txt").string());

    std::ifstream in((fs::path(dir) / "embeddings.bin").string(), std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kLmTableMagic, 8) != 0)
        throw FormatError(dir + "/embeddings.bin: bad magic");
    ckpt.rows = static_cast<int>(bin::read_u32(in));
    ckpt.dim = static_cast<int>(bin::read_u32(in));
    if (ckpt.rows <= 0 || ckpt.dim <= 0)
        throw FormatError(dir + "/embeddings.bin: bad dimensions");
    bin::read_array(in, ckpt.table, static_cast<size_t>(ckpt.rows) * ckpt.dim);
    ckpt.unk_id = ckpt.tokenizer.unk_id();
    return ckpt;
}

/// One static vector per vocabulary word: tokenize the word in isolation,
/// look up each subword's embedding row, mean-pool. Reserved rows stay zero.
inline WordVectors extract_lm_vectors(const Vocabulary& vocab, const LmCheckpoint& lm) {
    WordVectors out;
    out.dim = lm.dim;
    out.rows = vocab.size();
    out.data.assign(static_cast<size_t>(out.rows) * out.dim, 0.0f);

    std::vector<double> acc(static_cast<size_t>(lm.dim));
    for (int r = 2; r < vocab.size(); ++r) {
        std::vector<int> ids = lm.tokenizer.encode(vocab.words[static_cast<size_t>(r)]);
        // Symbols outside the LM vocab fall back to the unknown-token row.
        for (int& id : ids)
            if (id < 0 || id >= lm.rows) id = lm.unk_id;
        ids.erase(std::remove(ids.begin(), ids.end(), -1), ids.end());
        if (ids.empty()) {
            if (lm.unk_id >= 0 && lm.unk_id < lm.rows) ids.push_back(lm.unk_id);
            else continue;  // no usable subwords: keep the zero vector
        }
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int id : ids) {
            const float* src = lm.row(id);
            for (int d = 0; d < lm.dim; ++d) acc[static_cast<size_t>(d)] += src[d];
        }
        float* dst = out.row(r);
        const double inv = 1.0 / static_cast<double>(ids.size());
        for (int d = 0; d < lm.dim; ++d)
            dst[d] = static_cast<float>(acc[static_cast<size_t>(d)] * inv);
    }
    return out;
}

// Extraction cache, keyed by (LM name, vocab hash, dim). The ablation grid
// hits each LM once per vocabulary instead of once per cell.
inline std::string lm_cache_path(const std::string& cache_dir, const std::string& lm_name,
                                 const std::string& vocab_hash) {
    return (std::filesystem::path(cache_dir) / ("lmvec_" + lm_name + "_" + vocab_hash + ".bin"))
        .string();
}

inline WordVectors extract_lm_vectors_cached(const Vocabulary& vocab, const LmCheckpoint& lm,
                                             const std::string& cache_dir) {
    namespace fs = std::filesystem;
    if (cache_dir.empty()) return extract_lm_vectors(vocab, lm);
    fs::create_directories(cache_dir);
    std::string path = lm_cache_path(cache_dir, lm.name, vocab.hash());
    if (fs::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        char magic[8];
        in.read(magic, 8);
        if (in && std::memcmp(magic, kLmTableMagic, 8) == 0) {
            WordVectors v;
            v.rows = static_cast<int>(bin::read_u32(in));
            v.dim = static_cast<int>(bin::read_u32(in));
            if (v.rows == vocab.size() && v.dim == lm.dim) {
                bin::read_array(in, v.data, static_cast<size_t>(v.rows) * v.dim);
                return v;
            }
        }
    }
    WordVectors v = extract_lm_vectors(vocab, lm);
    save_lm_table(path, v.rows, v.dim, v.data);
    return v;
}

// ---------------------------------------------------------------------------
// The fused matrix
// ---------------------------------------------------------------------------

/// |V| x width fused representation table with per-row GloVe-OOV provenance.
struct EmbeddingMatrix {
    int rows = 0;
    int cols = 0;
    int glove_dim = 0;  // 0 when the config has no GloVe block
    int lm_dim = 0;     // 0 when the config has no LM block
    std::string config_name;
    std::string vocab_hash;
    std::vector<float> data;       // rows * cols
    std::vector<uint8_t> oov_mask; // true = word absent from GloVe

    const float* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    float* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
};

/// Assembles the matrix for one configuration. Sources not used by the
/// config may be null; missing required sources are a configuration error.
inline EmbeddingMatrix fuse(const EmbeddingConfig& config, const Vocabulary& vocab,
                            const GloveResult* glove, const WordVectors* gpt2,
                            const WordVectors* roberta) {
    if (config.uses_glove && !glove)
        throw ConfigError(config.name + ": GloVe vectors required but not provided");
    if (config.uses_gpt2 && !gpt2)
        throw ConfigError(config.name + ": GPT-2 vectors required but not provided");
    if (config.uses_roberta && !roberta)
        throw ConfigError(config.name + ": RoBERTa vectors required but not provided");

    const int rows = vocab.size();
    auto check_rows = [&](const char* what, int got) {
        if (got != rows)
            throw ConfigError(std::string(what) + " row count " + std::to_string(got) +
                              " != vocabulary size " + std::to_string(rows));
    };
    if (config.uses_glove) check_rows("GloVe", glove->vectors.rows);
    if (config.uses_gpt2) check_rows("GPT-2", gpt2->rows);
    if (config.uses_roberta) check_rows("RoBERTa", roberta->rows);

    int glove_dim = config.uses_glove ? glove->vectors.dim : 0;
    int lm_dim = 0;
    if (config.uses_gpt2) lm_dim = gpt2->dim;
    if (config.uses_roberta) {
        if (lm_dim && roberta->dim != lm_dim)
            throw ConfigError("GPT-2 dim " + std::to_string(lm_dim) + " != RoBERTa dim " +
                              std::to_string(roberta->dim) + "; cannot sum");
        lm_dim = roberta->dim;
    }

    EmbeddingMatrix m;
    m.rows = rows;
    m.cols = glove_dim + lm_dim;
    m.glove_dim = glove_dim;
    m.lm_dim = lm_dim;
    m.config_name = config.name;
    m.vocab_hash = vocab.hash();
    m.data.assign(static_cast<size_t>(rows) * m.cols, 0.0f);
    m.oov_mask.assign(static_cast<size_t>(rows), 0);

    for (int r = 0; r < rows; ++r) {
        float* dst = m.row(r);
        if (config.uses_glove) {
            const float* src = glove->vectors.row(r);
            std::copy(src, src + glove_dim, dst);
            m.oov_mask[static_cast<size_t>(r)] = glove->oov[static_cast<size_t>(r)];
        }
        float* lm_dst = dst + glove_dim;
        if (config.uses_gpt2) {
            const float* src = gpt2->row(r);
            for (int d = 0; d < lm_dim; ++d) lm_dst[d] += src[d];
        }
        if (config.uses_roberta) {
            const float* src = roberta->row(r);
            for (int d = 0; d < lm_dim; ++d) lm_dst[d] += src[d];
        }
    }
    // Reserved rows: pad is all-zero, unk keeps zeros in every block.
    std::fill(m.row(Vocabulary::kPad), m.row(Vocabulary::kPad) + m.cols, 0.0f);
    std::fill(m.row(Vocabulary::kUnk), m.row(Vocabulary::kUnk) + m.cols, 0.0f);
    m.oov_mask[Vocabulary::kPad] = 1;
    m.oov_mask[Vocabulary::kUnk] = 1;
    return m;
}

// ---------------------------------------------------------------------------
// Matrix file: JSON header + oov mask + float32 LE rows. Round-trips
// bit-exactly.
// ---------------------------------------------------------------------------

constexpr char kMatrixMagic[8] = {'T', 'S', 'E', 'M', 'B', '\x01', 0, 0};

inline void save_matrix(const std::string& path, const EmbeddingMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EnvironmentError("cannot write matrix file: " + path);
    nlohmann::json header = {{"vocab_hash", m.vocab_hash}, {"config", m.config_name},
                             {"rows", m.rows},             {"cols", m.cols},
                             {"glove_dim", m.glove_dim},   {"lm_dim", m.lm_dim}};
    std::string hj = header.dump();
    out.write(kMatrixMagic, 8);
    bin::write_u32(out, static_cast<uint32_t>(hj.size()));
    out.write(hj.data(), static_cast<std::streamsize>(hj.size()));
    bin::write_array(out, m.oov_mask);
    bin::write_array(out, m.data);
    if (!out) throw EnvironmentError("short write on matrix file: " + path);
}

inline EmbeddingMatrix load_matrix(const std::string& path,
                                   const std::string& expected_vocab_hash = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError("cannot open matrix file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMatrixMagic, 8) != 0)
        throw FormatError(path + ": not an embedding matrix file");
    uint32_t hlen = bin::read_u32(in);
    std::string hj(hlen, '\0');
    in.read(hj.data(), hlen);
    if (!in) throw FormatError(path + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hj);
    } catch (const std::exception& e) {
        throw FormatError(path + ": bad header: " + e.what());
    }

    EmbeddingMatrix m;
    m.vocab_hash = header.at("vocab_hash").get<std::string>();
    m.config_name = header.at("config").get<std::string>();
    m.rows = header.at("rows").get<int>();
    m.cols = header.at("cols").get<int>();
    m.glove_dim = header.at("glove_dim").get<int>();
    m.lm_dim = header.at("lm_dim").get<int>();
    if (!expected_vocab_hash.empty() && m.vocab_hash != expected_vocab_hash)
        throw IntegrityError(path + ": vocabulary hash " + m.vocab_hash +
                             " does not match expected " + expected_vocab_hash);
    bin::read_array(in, m.oov_mask, static_cast<size_t>(m.rows));
    bin::read_array(in, m.data, static_cast<size_t>(m.rows) * m.cols);
    return m;
}

}  // namespace toxspan
