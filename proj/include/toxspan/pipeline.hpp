// Command orchestration shared by the CLI and the integration tests:
// prepare / embed / train / predict / evaluate / ablate, each writing its
// artifacts plus a run manifest into an output directory.
#pragma once

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "toxspan/corpus.hpp"
#include "toxspan/embeddings.hpp"
#include "toxspan/evaluation.hpp"
#include "toxspan/model.hpp"
#include "toxspan/util.hpp"

namespace toxspan {

constexpr const char* kToolkitVersion = "0.1.0";

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

inline std::optional<std::string> get_env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

inline bool offline_mode() { return get_env("TOXSPAN_OFFLINE").has_value(); }

/// Vector-extraction cache directory: explicit value wins, then
/// TOXSPAN_CACHE_DIR; empty disables caching.
inline std::string resolve_cache_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (auto env = get_env("TOXSPAN_CACHE_DIR")) return *env;
    return "";
}

/// Checkpoint directory for one LM: explicit flag, then TOXSPAN_<NAME>_DIR.
inline std::string resolve_lm_dir(const std::string& lm_name, const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    std::string env_name = "TOXSPAN_";
    for (char c : lm_name) env_name += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    env_name += "_DIR";
    if (auto env = get_env(env_name.c_str())) return *env;
    throw EnvironmentError(lm_name + " checkpoint unavailable: pass --" + lm_name +
                           "-dir or set " + env_name +
                           (offline_mode() ? " (offline mode is on)" : ""));
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

inline std::string utc_now_iso8601() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// One manifest is written next to every command's outputs. Keys are
/// serialized sorted, so reruns produce byte-identical manifests except for
/// the two timestamp fields.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json outputs = nlohmann::json::object();
    uint64_t seed = 0;
    std::string started_at;
    std::string finished_at;

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", command},       {"config", config},
                              {"inputs", inputs},         {"outputs", outputs},
                              {"seed", seed},             {"version", kToolkitVersion},
                              {"started_at", started_at}, {"finished_at", finished_at}};
    }
};

inline void write_manifest(const std::string& out_dir, RunManifest& m) {
    m.finished_at = utc_now_iso8601();
    write_text_file((fs::path(out_dir) / "manifest.json").string(), m.to_json().dump(2) + "\n");
}

/// Overlays only the keys present in `j` onto a config; used for the
/// flags > config file > defaults precedence chain.
inline void model_config_overlay(ModelConfig& c, const nlohmann::json& j) {
    if (j.contains("encoder")) c.encoder = encoder_from_string(j.at("encoder").get<std::string>());
    if (j.contains("attention")) j.at("attention").get_to(c.attention);
    if (j.contains("hidden_size")) j.at("hidden_size").get_to(c.hidden_size);
    if (j.contains("dense_units")) j.at("dense_units").get_to(c.dense_units);
    if (j.contains("num_classes")) j.at("num_classes").get_to(c.num_classes);
    if (j.contains("max_len")) j.at("max_len").get_to(c.max_len);
    if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
    if (j.contains("rmsprop_rho")) j.at("rmsprop_rho").get_to(c.rmsprop_rho);
    if (j.contains("rmsprop_eps")) j.at("rmsprop_eps").get_to(c.rmsprop_eps);
    if (j.contains("dropout")) j.at("dropout").get_to(c.dropout);
    if (j.contains("softmax_head")) j.at("softmax_head").get_to(c.softmax_head);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

struct PrepareStats {
    int posts = 0;
    int unlabeled = 0;
    int empty_gold = 0;
    int tokens = 0;
    int vocab_total = 0;
    int vocab_non_reserved = 0;
    std::string corpus_path;
    std::string vocab_path;
};

inline PrepareStats cmd_prepare(const std::string& data_csv, DatasetFormat format,
                                const std::string& out_dir) {
    RunManifest m;
    m.command = "prepare";
    m.started_at = utc_now_iso8601();
    fs::create_directories(out_dir);

    std::vector<Post> posts = parse_dataset(data_csv, format);
    TaggedCorpus corpus = tag_corpus(posts);
    Vocabulary vocab = build_vocabulary(corpus);

    PrepareStats st;
    st.posts = static_cast<int>(corpus.size());
    for (const auto& p : corpus) {
        if (p.unlabeled) ++st.unlabeled;
        if (p.gold_offsets.empty() && !p.unlabeled) ++st.empty_gold;
        st.tokens += static_cast<int>(p.tokens.size());
    }
    st.vocab_total = vocab.size();
    st.vocab_non_reserved = vocab.non_reserved_size();
    st.corpus_path = (fs::path(out_dir) / "corpus.jsonl").string();
    st.vocab_path = (fs::path(out_dir) / "vocab.txt").string();
    save_corpus(st.corpus_path, corpus);
    save_vocabulary(st.vocab_path, vocab);

    m.config = {{"format", format == DatasetFormat::CsvWithSpans ? "csv-with-spans"
                                                                 : "csv-text-only"}};
    m.inputs = {{"data", data_csv}};
    m.outputs = {{"corpus", st.corpus_path}, {"vocabulary", st.vocab_path}};
    write_manifest(out_dir, m);
    return st;
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

struct EmbedStats {
    int rows = 0;
    int cols = 0;
    int glove_oov = 0;
    int vocab_non_reserved = 0;
    std::string matrix_path;
};

inline EmbedStats cmd_embed(const std::string& vocab_path, const std::string& config_name,
                            const std::string& glove_path, const std::string& gpt2_dir,
                            const std::string& roberta_dir, const std::string& out_path,
                            const std::string& cache_dir = "") {
    RunManifest m;
    m.command = "embed";
    m.started_at = utc_now_iso8601();
    fs::path out_parent = fs::path(out_path).parent_path();
    if (out_parent.empty()) out_parent = ".";
    fs::create_directories(out_parent);

    Vocabulary vocab = load_vocabulary(vocab_path);
    EmbeddingConfig config = EmbeddingConfig::from_name(config_name);

    std::optional<GloveResult> glove;
    std::optional<WordVectors> gpt2, roberta;
    if (config.uses_glove) {
        if (glove_path.empty())
            throw ConfigError(config_name + " requires a GloVe file (--glove)");
        glove = load_glove(glove_path, vocab);
    }
    if (config.uses_gpt2) {
        LmCheckpoint lm = load_lm_checkpoint(resolve_lm_dir("gpt2", gpt2_dir), "gpt2");
        gpt2 = extract_lm_vectors_cached(vocab, lm, cache_dir);
    }
    if (config.uses_roberta) {
        LmCheckpoint lm = load_lm_checkpoint(resolve_lm_dir("roberta", roberta_dir), "roberta");
        roberta = extract_lm_vectors_cached(vocab, lm, cache_dir);
    }

    EmbeddingMatrix matrix =
        fuse(config, vocab, glove ? &*glove : nullptr, gpt2 ? &*gpt2 : nullptr,
             roberta ? &*roberta : nullptr);
    save_matrix(out_path, matrix);

    EmbedStats st;
    st.rows = matrix.rows;
    st.cols = matrix.cols;
    st.glove_oov = glove ? glove->oov_count : 0;
    st.vocab_non_reserved = vocab.non_reserved_size();
    st.matrix_path = out_path;

    m.config = {{"embedding_config", config_name}};
    m.inputs = {{"vocabulary", vocab_path}};
    if (config.uses_glove) m.inputs["glove"] = glove_path;
    if (config.uses_gpt2) m.inputs["gpt2"] = gpt2_dir;
    if (config.uses_roberta) m.inputs["roberta"] = roberta_dir;
    m.outputs = {{"matrix", out_path}};
    write_manifest(out_parent.string(), m);
    return st;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArtifacts {
    TrainResult result;
    std::string final_checkpoint;
    std::string best_checkpoint;  // empty without a dev set
    std::string log_path;
    int truncated_posts = 0;
};

inline std::vector<EncodedPost> encode_corpus(const TaggedCorpus& corpus, const Vocabulary& vocab,
                                              int max_len, int* truncated = nullptr) {
    std::vector<EncodedPost> out;
    out.reserve(corpus.size());
    int trunc = 0;
    for (const auto& p : corpus) {
        if (static_cast<int>(p.tokens.size()) > max_len) ++trunc;
        out.push_back(encode(p.tokens, vocab, max_len));
    }
    if (truncated) *truncated = trunc;
    return out;
}

inline TrainArtifacts cmd_train(const std::string& train_corpus_path,
                                const std::string& dev_corpus_path,
                                const std::string& vocab_path, const std::string& matrix_path,
                                const ModelConfig& config, const std::string& out_dir) {
    RunManifest m;
    m.command = "train";
    m.started_at = utc_now_iso8601();
    m.seed = config.seed;
    fs::create_directories((fs::path(out_dir) / "checkpoints").string());

    Vocabulary vocab = load_vocabulary(vocab_path);
    EmbeddingMatrix matrix = load_matrix(matrix_path, vocab.hash());
    TaggedCorpus train_corpus = load_corpus(train_corpus_path);

    TrainArtifacts art;
    std::vector<EncodedPost> train_data =
        encode_corpus(train_corpus, vocab, config.max_len, &art.truncated_posts);

    TaggedCorpus dev_corpus;
    DevSet dev;
    bool has_dev = !dev_corpus_path.empty();
    if (has_dev) {
        dev_corpus = load_corpus(dev_corpus_path);
        dev.corpus = &dev_corpus;
        dev.encoded = encode_corpus(dev_corpus, vocab, config.max_len);
    }

    Tagger model = build_model(config, matrix);

    std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
    std::ofstream log(log_path);
    TrainResult result = train(model, train_data, has_dev ? &dev : nullptr,
                               [&](const EpochRecord& rec) {
                                   nlohmann::json j = {{"epoch", rec.epoch},
                                                       {"train_loss", rec.train_loss},
                                                       {"wall_seconds", rec.wall_seconds}};
                                   if (rec.dev_span_f1 >= 0.0) j["dev_span_f1"] = rec.dev_span_f1;
                                   log << j.dump() << "\n";
                                   log.flush();
                               });

    art.log_path = log_path;
    art.final_checkpoint = (fs::path(out_dir) / "checkpoints" / "model_final.ckpt").string();
    save_checkpoint(art.final_checkpoint, model, vocab.hash(), matrix.config_name);
    if (has_dev && result.best_epoch > 0) {
        art.best_checkpoint = (fs::path(out_dir) / "checkpoints" / "model_best.ckpt").string();
        save_checkpoint(art.best_checkpoint, model, vocab.hash(), matrix.config_name,
                        &result.best_params);
    }
    art.result = std::move(result);

    m.config["model"] = config;
    m.config["embedding_config"] = matrix.config_name;
    m.inputs = {{"train_corpus", train_corpus_path},
                {"vocabulary", vocab_path},
                {"matrix", matrix_path}};
    if (has_dev) m.inputs["dev_corpus"] = dev_corpus_path;
    m.outputs = {{"final_checkpoint", art.final_checkpoint}, {"train_log", log_path}};
    if (!art.best_checkpoint.empty()) m.outputs["best_checkpoint"] = art.best_checkpoint;
    write_manifest(out_dir, m);
    return art;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictStats {
    int posts = 0;
    std::string predictions_path;
};

inline PredictStats cmd_predict(const std::string& corpus_path, const std::string& vocab_path,
                                const std::string& matrix_path, const std::string& ckpt_path,
                                const std::string& out_dir) {
    RunManifest m;
    m.command = "predict";
    m.started_at = utc_now_iso8601();
    fs::create_directories(out_dir);

    Vocabulary vocab = load_vocabulary(vocab_path);
    EmbeddingMatrix matrix = load_matrix(matrix_path, vocab.hash());
    Checkpoint ckpt = load_checkpoint(ckpt_path, vocab.hash());
    Tagger model = restore_model(ckpt, matrix);
    TaggedCorpus corpus = load_corpus(corpus_path);

    std::vector<SpanPrediction> predictions;
    predictions.reserve(corpus.size());
    for (const auto& post : corpus) {
        EncodedPost ep = encode(post.tokens, vocab, model.config().max_len);
        TaggerOutput out = model.predict(ep.ids);
        predictions.push_back(decode_spans(post.id, post.tokens, out.predicted_class));
    }

    PredictStats st;
    st.posts = static_cast<int>(predictions.size());
    st.predictions_path = (fs::path(out_dir) / "predictions.txt").string();
    save_predictions(st.predictions_path, predictions);

    m.seed = ckpt.config.seed;
    m.config["model"] = ckpt.config;
    m.config["embedding_config"] = ckpt.embedding_config;
    m.inputs = {{"corpus", corpus_path},
                {"vocabulary", vocab_path},
                {"matrix", matrix_path},
                {"checkpoint", ckpt_path}};
    m.outputs = {{"predictions", st.predictions_path}};
    write_manifest(out_dir, m);
    return st;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Gold posts from either a prepared corpus (JSONL) or a raw spans CSV,
/// sniffed by the leading byte.
inline std::vector<Post> load_gold_posts(const std::string& path) {
    std::string data = read_text_file(path);
    size_t first = data.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && data[first] == '{') {
        TaggedCorpus corpus = corpus_from_jsonl(data);
        std::vector<Post> posts;
        posts.reserve(corpus.size());
        for (const auto& tp : corpus)
            posts.push_back(Post{tp.id, tp.text, tp.gold_offsets, tp.unlabeled});
        return posts;
    }
    return parse_dataset(path, DatasetFormat::CsvWithSpans);
}

inline ScoreReport cmd_evaluate(const std::string& predictions_path, const std::string& gold_path,
                                const std::string& out_dir) {
    RunManifest m;
    m.command = "evaluate";
    m.started_at = utc_now_iso8601();
    fs::create_directories(out_dir);

    std::vector<SpanPrediction> predictions = load_predictions(predictions_path);
    std::vector<Post> gold = load_gold_posts(gold_path);
    ScoreReport report = evaluate(predictions, gold);

    std::string report_path = (fs::path(out_dir) / "report.json").string();
    write_text_file(report_path, score_report_json(report).dump(2) + "\n");

    m.inputs = {{"predictions", predictions_path}, {"gold", gold_path}};
    m.outputs = {{"report", report_path}};
    write_manifest(out_dir, m);
    return report;
}

// ---------------------------------------------------------------------------
// ablate: the 4-variant x 7-configuration grid
// ---------------------------------------------------------------------------

inline const std::vector<std::pair<std::string, std::pair<Encoder, bool>>>& ablation_variants() {
    static const std::vector<std::pair<std::string, std::pair<Encoder, bool>>> v = {
        {"BiLSTM", {Encoder::BiLSTM, false}},
        {"BiGRU", {Encoder::BiGRU, false}},
        {"BiLSTM + Attention", {Encoder::BiLSTM, true}},
        {"BiGRU + Attention", {Encoder::BiGRU, true}},
    };
    return v;
}

struct AblateOptions {
    ModelConfig base;
    std::string glove_path;
    std::string gpt2_dir;      // resolved lazily; may stay empty
    std::string roberta_dir;
    std::string cache_dir;
    std::string only;          // "VARIANT:CONFIG" filter, e.g. "BiGRU+Attention:Ensemble"
    bool save_cell_checkpoints = false;
};

struct AblateResult {
    std::vector<std::vector<AblationCell>> dev_cells, test_cells;
    bool any_failed = false;
    bool has_test = false;
    std::string table_path;
    std::string json_path;
};

inline std::string variant_key(const std::string& name) {
    std::string k;
    for (char c : name)
        if (c != ' ') k.push_back(c);
    return k;
}

inline AblateResult cmd_ablate(const std::string& train_corpus_path,
                               const std::string& dev_corpus_path,
                               const std::string& test_corpus_path,
                               const std::string& vocab_path, const AblateOptions& opts,
                               const std::string& out_dir) {
    RunManifest m;
    m.command = "ablate";
    m.started_at = utc_now_iso8601();
    m.seed = opts.base.seed;
    fs::create_directories(out_dir);

    Vocabulary vocab = load_vocabulary(vocab_path);
    TaggedCorpus train_corpus = load_corpus(train_corpus_path);
    TaggedCorpus dev_corpus = load_corpus(dev_corpus_path);
    TaggedCorpus test_corpus;
    if (!test_corpus_path.empty()) test_corpus = load_corpus(test_corpus_path);

    std::vector<EncodedPost> train_data = encode_corpus(train_corpus, vocab, opts.base.max_len);
    DevSet dev{&dev_corpus, encode_corpus(dev_corpus, vocab, opts.base.max_len)};
    DevSet test;
    if (!test_corpus.empty()) {
        test.corpus = &test_corpus;
        test.encoded = encode_corpus(test_corpus, vocab, opts.base.max_len);
    }

    const auto& variants = ablation_variants();
    const auto& configs = all_embedding_configs();

    // Shared sources, loaded at most once; LM extraction is cached by
    // (vocab hash, LM name) so the grid pays for each LM a single time.
    std::optional<GloveResult> glove;
    std::optional<WordVectors> gpt2, roberta;
    auto need_glove = [&]() -> const GloveResult* {
        if (!glove) {
            if (opts.glove_path.empty()) throw ConfigError("grid requires a GloVe file (--glove)");
            glove = load_glove(opts.glove_path, vocab);
        }
        return &*glove;
    };
    auto need_gpt2 = [&]() -> const WordVectors* {
        if (!gpt2) {
            LmCheckpoint lm = load_lm_checkpoint(resolve_lm_dir("gpt2", opts.gpt2_dir), "gpt2");
            gpt2 = extract_lm_vectors_cached(vocab, lm, opts.cache_dir);
        }
        return &*gpt2;
    };
    auto need_roberta = [&]() -> const WordVectors* {
        if (!roberta) {
            LmCheckpoint lm =
                load_lm_checkpoint(resolve_lm_dir("roberta", opts.roberta_dir), "roberta");
            roberta = extract_lm_vectors_cached(vocab, lm, opts.cache_dir);
        }
        return &*roberta;
    };

    AblateResult result;
    result.has_test = !test_corpus.empty();
    result.dev_cells.assign(variants.size(), std::vector<AblationCell>(configs.size()));
    result.test_cells.assign(variants.size(), std::vector<AblationCell>(configs.size()));

    for (size_t ci = 0; ci < configs.size(); ++ci) {
        EmbeddingConfig config = EmbeddingConfig::from_name(configs[ci]);
        std::optional<EmbeddingMatrix> matrix;
        std::string matrix_error;
        try {
            matrix = fuse(config, vocab, config.uses_glove ? need_glove() : nullptr,
                          config.uses_gpt2 ? need_gpt2() : nullptr,
                          config.uses_roberta ? need_roberta() : nullptr);
        } catch (const Error& e) {
            matrix_error = e.what();
        }

        for (size_t vi = 0; vi < variants.size(); ++vi) {
            const size_t cell_index = vi * configs.size() + ci;
            const std::string cell_name = variant_key(variants[vi].first) + ":" + configs[ci];
            if (!opts.only.empty() && opts.only != cell_name) continue;

            AblationCell& dev_cell = result.dev_cells[vi][ci];
            AblationCell& test_cell = result.test_cells[vi][ci];
            dev_cell.ran = true;
            if (!matrix) {
                dev_cell.failed = true;
                dev_cell.error = matrix_error;
                result.any_failed = true;
                continue;
            }

            ModelConfig cell_cfg = opts.base;
            cell_cfg.encoder = variants[vi].second.first;
            cell_cfg.attention = variants[vi].second.second;
            cell_cfg.seed = opts.base.seed + cell_index;

            std::string cell_dir =
                (fs::path(out_dir) / "cells" / (variant_key(variants[vi].first) + "_" + configs[ci]))
                    .string();
            fs::create_directories(cell_dir);
            try {
                Tagger model = build_model(cell_cfg, *matrix);
                std::ofstream log((fs::path(cell_dir) / "train_log.jsonl").string());
                train(model, train_data, &dev, [&](const EpochRecord& rec) {
                    nlohmann::json j = {{"epoch", rec.epoch},
                                        {"train_loss", rec.train_loss},
                                        {"dev_span_f1", rec.dev_span_f1},
                                        {"wall_seconds", rec.wall_seconds}};
                    log << j.dump() << "\n";
                });
                dev_cell.f1 = dev_span_f1(model, dev);
                if (result.has_test) {
                    test_cell.ran = true;
                    test_cell.f1 = dev_span_f1(model, test);
                }
                if (opts.save_cell_checkpoints)
                    save_checkpoint((fs::path(cell_dir) / "model_final.ckpt").string(), model,
                                    vocab.hash(), matrix->config_name);
            } catch (const Error& e) {
                dev_cell.failed = true;
                dev_cell.error = e.what();
                if (result.has_test) {
                    test_cell.ran = true;
                    test_cell.failed = true;
                    test_cell.error = e.what();
                }
                result.any_failed = true;
            }
        }
    }

    std::vector<std::string> row_names;
    for (const auto& v : variants) row_names.push_back(v.first);

    std::string table = format_ablation_table("Results on dev set", row_names, configs,
                                              result.dev_cells);
    if (result.has_test)
        table += format_ablation_table("Results on Test set", row_names, configs,
                                       result.test_cells);
    result.table_path = (fs::path(out_dir) / "ablation.txt").string();
    write_text_file(result.table_path, table);

    nlohmann::json cells_json = nlohmann::json::array();
    for (size_t vi = 0; vi < variants.size(); ++vi) {
        for (size_t ci = 0; ci < configs.size(); ++ci) {
            const AblationCell& c = result.dev_cells[vi][ci];
            if (!c.ran) continue;
            nlohmann::json cj = {{"variant", variants[vi].first},
                                 {"embedding", configs[ci]},
                                 {"failed", c.failed}};
            if (c.failed) cj["error"] = c.error;
            else {
                cj["dev_f1"] = c.f1;
                if (result.has_test) cj["test_f1"] = result.test_cells[vi][ci].f1;
            }
            cells_json.push_back(std::move(cj));
        }
    }
    result.json_path = (fs::path(out_dir) / "ablation.json").string();
    write_text_file(result.json_path,
                    nlohmann::json{{"cells", cells_json}}.dump(2) + "\n");

    m.config["model"] = opts.base;
    if (!opts.only.empty()) m.config["only"] = opts.only;
    m.inputs = {{"train_corpus", train_corpus_path},
                {"dev_corpus", dev_corpus_path},
                {"vocabulary", vocab_path}};
    if (!test_corpus_path.empty()) m.inputs["test_corpus"] = test_corpus_path;
    if (!opts.glove_path.empty()) m.inputs["glove"] = opts.glove_path;
    m.outputs = {{"table", result.table_path}, {"cells", result.json_path}};
    write_manifest(out_dir, m);
    return result;
}

}  // namespace toxspan
