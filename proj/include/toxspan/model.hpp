// The sequence tagger: frozen embedding lookup -> two stacked bidirectional
// recurrent layers (GRU or LSTM) -> optional self-attention -> dense(50,
// tanh) -> 3-class head, with its RMSprop training loop and checkpoints.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "toxspan/corpus.hpp"
#include "toxspan/embeddings.hpp"
#include "toxspan/evaluation.hpp"
#include "toxspan/nn.hpp"
#include "toxspan/util.hpp"

namespace toxspan {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Encoder { BiGRU, BiLSTM };

inline std::string to_string(Encoder e) { return e == Encoder::BiGRU ? "BiGRU" : "BiLSTM"; }

inline Encoder encoder_from_string(std::string_view s) {
    if (s == "BiGRU") return Encoder::BiGRU;
    if (s == "BiLSTM") return Encoder::BiLSTM;
    throw ConfigError("unknown encoder '" + std::string(s) + "' (expected BiGRU or BiLSTM)");
}

struct ModelConfig {
    Encoder encoder = Encoder::BiGRU;
    bool attention = true;
    int hidden_size = 64;  // per direction
    int dense_units = 50;
    int num_classes = 3;
    int max_len = 215;
    int batch_size = 32;
    int epochs = 10;
    double learning_rate = 1e-3;
    double rmsprop_rho = 0.9;
    double rmsprop_eps = 1e-8;
    double dropout = 0.0;
    bool softmax_head = false;  // default keeps the sigmoid head
    uint64_t seed = 42;

    std::string variant_name() const {
        return to_string(encoder) + (attention ? " + Attention" : "");
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"encoder", to_string(c.encoder)},
                       {"attention", c.attention},
                       {"hidden_size", c.hidden_size},
                       {"dense_units", c.dense_units},
                       {"num_classes", c.num_classes},
                       {"max_len", c.max_len},
                       {"batch_size", c.batch_size},
                       {"epochs", c.epochs},
                       {"learning_rate", c.learning_rate},
                       {"rmsprop_rho", c.rmsprop_rho},
                       {"rmsprop_eps", c.rmsprop_eps},
                       {"dropout", c.dropout},
                       {"softmax_head", c.softmax_head},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.encoder = encoder_from_string(j.at("encoder").get<std::string>());
    j.at("attention").get_to(c.attention);
    j.at("hidden_size").get_to(c.hidden_size);
    j.at("dense_units").get_to(c.dense_units);
    j.at("num_classes").get_to(c.num_classes);
    j.at("max_len").get_to(c.max_len);
    j.at("batch_size").get_to(c.batch_size);
    j.at("epochs").get_to(c.epochs);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("rmsprop_rho").get_to(c.rmsprop_rho);
    j.at("rmsprop_eps").get_to(c.rmsprop_eps);
    j.at("dropout").get_to(c.dropout);
    j.at("softmax_head").get_to(c.softmax_head);
    j.at("seed").get_to(c.seed);
}

// ---------------------------------------------------------------------------
// Tagger
// ---------------------------------------------------------------------------

/// Per-position class scores (sigmoid outputs) and argmax classes.
struct TaggerOutput {
    nn::Mat class_scores;             // (max_len x num_classes), each in (0,1)
    std::vector<int> predicted_class; // argmax per position
};

class Tagger {
public:
    Tagger(const ModelConfig& config, const EmbeddingMatrix* embeddings)
        : cfg_(config), emb_(embeddings) {
        if (!emb_ || emb_->rows < 2 || emb_->cols < 1)
            throw ConfigError("embedding layer: matrix must have >= 2 rows and >= 1 column");
        if (cfg_.hidden_size < 1)
            throw ConfigError("recurrent layer: hidden_size must be positive");
        if (cfg_.dense_units < 1) throw ConfigError("dense layer: dense_units must be positive");
        if (cfg_.num_classes < 2) throw ConfigError("output layer: num_classes must be >= 2");
        if (cfg_.max_len < 1) throw ConfigError("input layer: max_len must be positive");
        if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0)
            throw ConfigError("dropout must be in [0, 1)");

        const int e = emb_->cols;
        const int h2 = 2 * cfg_.hidden_size;
        if (cfg_.encoder == Encoder::BiGRU) {
            gru1_.emplace(params_, "rnn1", e, cfg_.hidden_size);
            gru2_.emplace(params_, "rnn2", h2, cfg_.hidden_size);
        } else {
            lstm1_.emplace(params_, "rnn1", e, cfg_.hidden_size);
            lstm2_.emplace(params_, "rnn2", h2, cfg_.hidden_size);
        }
        dense_ = nn::DenseTanh(params_, "dense", h2, cfg_.dense_units);
        head_ = nn::Head(params_, "head", cfg_.dense_units, cfg_.num_classes);

        std::mt19937_64 rng(cfg_.seed);
        params_.init(rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const EmbeddingMatrix& embeddings() const { return *emb_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // All activations one sequence produces on its way through the stack.
    struct Trace {
        nn::Mat x;                       // embedded input
        std::vector<uint8_t> mask;       // true at real (non-pad) positions
        nn::BiRnn<nn::GruCell>::Trace g1, g2;
        nn::BiRnn<nn::LstmCell>::Trace l1, l2;
        nn::Mat h1, h2;                  // recurrent outputs
        nn::Mat drop1, drop2;            // dropout masks when active
        nn::SelfAttention::Trace att;
        nn::Mat a;                       // attention output (h2 when disabled)
        nn::Mat d;                       // dense output
        nn::Mat z, scores;               // head pre-activations and sigmoids
    };

    void forward(const std::vector<int>& ids, Trace& tr, bool training = false,
                 std::mt19937_64* dropout_rng = nullptr) const {
        if (static_cast<int>(ids.size()) != cfg_.max_len)
            throw UsageError("input length " + std::to_string(ids.size()) +
                             " != configured max_len " + std::to_string(cfg_.max_len));
        const int L = cfg_.max_len;
        const int e = emb_->cols;

        tr.x = nn::Mat(L, e);
        tr.mask.assign(static_cast<size_t>(L), 0);
        for (int t = 0; t < L; ++t) {
            const int id = ids[static_cast<size_t>(t)];
            if (id < 0 || id >= emb_->rows)
                throw UsageError("token id " + std::to_string(id) + " outside embedding table");
            const float* src = emb_->row(id);
            double* dst = tr.x.row(t);
            for (int k = 0; k < e; ++k) dst[k] = src[k];
            tr.mask[static_cast<size_t>(t)] = id != Vocabulary::kPad;
        }

        if (cfg_.encoder == Encoder::BiGRU) {
            gru1_->forward(params_, tr.x, tr.h1, tr.g1);
            apply_dropout(tr.h1, tr.drop1, training, dropout_rng);
            gru2_->forward(params_, tr.h1, tr.h2, tr.g2);
        } else {
            lstm1_->forward(params_, tr.x, tr.h1, tr.l1);
            apply_dropout(tr.h1, tr.drop1, training, dropout_rng);
            lstm2_->forward(params_, tr.h1, tr.h2, tr.l2);
        }
        apply_dropout(tr.h2, tr.drop2, training, dropout_rng);

        if (cfg_.attention) {
            nn::SelfAttention::forward(tr.h2, tr.mask, tr.a, tr.att);
        } else {
            tr.a = tr.h2;
        }
        dense_.forward(params_, tr.a, tr.d);
        head_.forward(params_, tr.d, tr.z, tr.scores);
    }

    /// Loss for one already-run trace, plus gradient accumulation when
    /// `scale` is non-zero. Returns the sequence's total position loss.
    double backward(const Trace& tr, const std::vector<int>& labels, double scale) {
        nn::Mat dz;
        double total = nn::Head::loss_and_dz(tr.scores, tr.z, labels, cfg_.softmax_head, dz);
        if (scale == 0.0) return total;
        for (double& v : dz.a) v *= scale;

        nn::Mat dd(tr.d.rows, tr.d.cols);
        head_.backward(params_, tr.d, dz, dd);
        nn::Mat da(tr.a.rows, tr.a.cols);
        dense_.backward(params_, tr.a, tr.d, dd, da);

        nn::Mat dh2(tr.h2.rows, tr.h2.cols);
        if (cfg_.attention) {
            nn::SelfAttention::backward(tr.h2, tr.mask, da, tr.att, dh2);
        } else {
            dh2 = da;
        }
        mask_dropout_grad(dh2, tr.drop2);

        nn::Mat dh1(tr.h1.rows, tr.h1.cols);
        nn::Mat dx(tr.x.rows, tr.x.cols);  // embedding is frozen; sink only
        if (cfg_.encoder == Encoder::BiGRU) {
            gru2_->backward(params_, tr.h1, dh2, tr.g2, dh1);
            mask_dropout_grad(dh1, tr.drop1);
            gru1_->backward(params_, tr.x, dh1, tr.g1, dx);
        } else {
            lstm2_->backward(params_, tr.h1, dh2, tr.l2, dh1);
            mask_dropout_grad(dh1, tr.drop1);
            lstm1_->backward(params_, tr.x, dh1, tr.l1, dx);
        }
        return total;
    }

    /// Forward-only mean position loss over a batch; used by tests and
    /// finite-difference oracles.
    double batch_loss(const std::vector<EncodedPost>& batch) const {
        if (batch.empty()) throw UsageError("batch_loss: empty batch");
        double total = 0.0;
        Trace tr;
        for (const auto& ep : batch) {
            forward(ep.ids, tr);
            nn::Mat dz;
            total += nn::Head::loss_and_dz(tr.scores, tr.z, ep.labels, cfg_.softmax_head, dz);
        }
        return total / (static_cast<double>(batch.size()) * cfg_.max_len);
    }

    /// Zeroes gradients, runs forward+backward over the batch, and returns
    /// the mean position loss. Gradients end up scaled the same way.
    double batch_loss_grad(const std::vector<EncodedPost>& batch,
                           std::mt19937_64* dropout_rng = nullptr) {
        if (batch.empty()) throw UsageError("batch_loss_grad: empty batch");
        params_.zero_grad();
        const double scale = 1.0 / (static_cast<double>(batch.size()) * cfg_.max_len);
        double total = 0.0;
        Trace tr;
        for (const auto& ep : batch) {
            forward(ep.ids, tr, cfg_.dropout > 0.0, dropout_rng);
            total += backward(tr, ep.labels, scale);
        }
        return total * scale;
    }

    TaggerOutput predict(const std::vector<int>& ids) const {
        Trace tr;
        forward(ids, tr);
        TaggerOutput out;
        out.class_scores = tr.scores;
        out.predicted_class.resize(static_cast<size_t>(cfg_.max_len));
        for (int t = 0; t < cfg_.max_len; ++t) {
            const double* s = tr.scores.row(t);
            int best = 0;
            for (int k = 1; k < cfg_.num_classes; ++k)
                if (s[k] > s[best]) best = k;
            out.predicted_class[static_cast<size_t>(t)] = best;
        }
        return out;
    }

private:
    void apply_dropout(nn::Mat& h, nn::Mat& mask, bool training, std::mt19937_64* rng) const {
        mask = nn::Mat();
        if (!training || cfg_.dropout <= 0.0 || !rng) return;
        const double keep = 1.0 - cfg_.dropout;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        mask = nn::Mat(h.rows, h.cols);
        for (size_t i = 0; i < h.a.size(); ++i) {
            mask.a[i] = u(*rng) < keep ? 1.0 / keep : 0.0;
            h.a[i] *= mask.a[i];
        }
    }

    static void mask_dropout_grad(nn::Mat& dh, const nn::Mat& mask) {
        if (mask.a.empty()) return;
        for (size_t i = 0; i < dh.a.size(); ++i) dh.a[i] *= mask.a[i];
    }

    ModelConfig cfg_;
    const EmbeddingMatrix* emb_;
    nn::ParamStore params_;
    std::optional<nn::BiRnn<nn::GruCell>> gru1_, gru2_;
    std::optional<nn::BiRnn<nn::LstmCell>> lstm1_, lstm2_;
    nn::DenseTanh dense_;
    nn::Head head_;
};

inline Tagger build_model(const ModelConfig& config, const EmbeddingMatrix& embeddings) {
    return Tagger(config, &embeddings);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_span_f1 = -1.0;  // -1 when no dev set was given
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;           // 1-based; -1 without a dev set
    double best_dev_f1 = -1.0;
    nn::Vec best_params;           // snapshot of the best-dev-F1 epoch
};

/// Dev split: posts with gold offsets plus their encodings, used for the
/// per-epoch span-F1 trace.
struct DevSet {
    const TaggedCorpus* corpus = nullptr;
    std::vector<EncodedPost> encoded;
};

inline double dev_span_f1(const Tagger& model, const DevSet& dev) {
    double sum = 0.0;
    for (size_t i = 0; i < dev.corpus->size(); ++i) {
        const auto& post = (*dev.corpus)[i];
        TaggerOutput out = model.predict(dev.encoded[i].ids);
        SpanPrediction pred = decode_spans(post.id, post.tokens, out.predicted_class);
        sum += span_f1(pred.offsets, post.gold_offsets);
    }
    return dev.corpus->empty() ? 0.0 : sum / static_cast<double>(dev.corpus->size());
}

/// Runs the configured number of epochs, shuffling post order each epoch
/// with the seeded RNG. Returns per-epoch metrics and leaves the
/// final-epoch parameters in the model.
inline TrainResult train(Tagger& model, const std::vector<EncodedPost>& train_data,
                         const DevSet* dev = nullptr,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    if (train_data.empty()) throw UsageError("train: empty training set");
    const ModelConfig& cfg = model.config();

    nn::RmsProp opt;
    opt.lr = cfg.learning_rate;
    opt.rho = cfg.rmsprop_rho;
    opt.eps = cfg.rmsprop_eps;

    std::mt19937_64 shuffle_rng(cfg.seed + 1);
    std::mt19937_64 dropout_rng(cfg.seed + 2);

    std::vector<size_t> idx(train_data.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::shuffle(idx.begin(), idx.end(), shuffle_rng);

        double loss_sum = 0.0;
        size_t batches = 0;
        std::vector<EncodedPost> batch;
        for (size_t b = 0; b < idx.size(); b += static_cast<size_t>(cfg.batch_size)) {
            batch.clear();
            for (size_t i = b; i < std::min(idx.size(), b + static_cast<size_t>(cfg.batch_size)); ++i)
                batch.push_back(train_data[idx[i]]);
            double loss = model.batch_loss_grad(batch, &dropout_rng);
            if (!std::isfinite(loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batches + 1));
            opt.step(model.params());
            loss_sum += loss;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(batches);
        if (dev && dev->corpus) {
            rec.dev_span_f1 = dev_span_f1(model, *dev);
            if (rec.dev_span_f1 > result.best_dev_f1) {
                result.best_dev_f1 = rec.dev_span_f1;
                result.best_epoch = epoch;
                result.best_params = model.params().val;
            }
        }
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON header (config, vocab hash, embedding-config name,
// parameter shapes) followed by raw float64 LE parameter values.
// ---------------------------------------------------------------------------

constexpr char kCheckpointMagic[8] = {'T', 'S', 'M', 'D', 'L', '\x01', 0, 0};

inline void save_checkpoint(const std::string& path, const Tagger& model,
                            const std::string& vocab_hash, const std::string& emb_config,
                            const nn::Vec* params_override = nullptr) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EnvironmentError("cannot write checkpoint: " + path);
    nlohmann::json header;
    header["config"] = model.config();
    header["vocab_hash"] = vocab_hash;
    header["embedding_config"] = emb_config;
    auto shapes = nlohmann::json::array();
    for (const auto& s : model.params().slices)
        shapes.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
    header["params"] = std::move(shapes);
    header["param_count"] = model.params().size();
    std::string hj = header.dump();

    out.write(kCheckpointMagic, 8);
    bin::write_u32(out, static_cast<uint32_t>(hj.size()));
    out.write(hj.data(), static_cast<std::streamsize>(hj.size()));
    const nn::Vec& vals = params_override ? *params_override : model.params().val;
    bin::write_array(out, vals);
    if (!out) throw EnvironmentError("short write on checkpoint: " + path);
}

struct Checkpoint {
    ModelConfig config;
    std::string vocab_hash;
    std::string embedding_config;
    nn::Vec params;
};

inline Checkpoint load_checkpoint(const std::string& path,
                                  const std::string& expected_vocab_hash = "") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvironmentError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw FormatError(path + ": not a model checkpoint");
    uint32_t hlen = bin::read_u32(in);
    std::string hj(hlen, '\0');
    in.read(hj.data(), hlen);
    if (!in) throw FormatError(path + ": truncated header");

    Checkpoint ckpt;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hj);
    } catch (const std::exception& e) {
        throw FormatError(path + ": bad header: " + e.what());
    }
    ckpt.config = header.at("config").get<ModelConfig>();
    ckpt.vocab_hash = header.at("vocab_hash").get<std::string>();
    ckpt.embedding_config = header.at("embedding_config").get<std::string>();
    if (!expected_vocab_hash.empty() && ckpt.vocab_hash != expected_vocab_hash)
        throw IntegrityError(path + ": vocabulary hash " + ckpt.vocab_hash +
                             " does not match expected " + expected_vocab_hash);
    size_t count = header.at("param_count").get<size_t>();
    bin::read_array(in, ckpt.params, count);
    return ckpt;
}

/// Rebuilds a tagger from a checkpoint against its embedding matrix.
inline Tagger restore_model(const Checkpoint& ckpt, const EmbeddingMatrix& embeddings) {
    if (embeddings.vocab_hash != ckpt.vocab_hash)
        throw IntegrityError("checkpoint vocabulary hash " + ckpt.vocab_hash +
                             " does not match matrix hash " + embeddings.vocab_hash);
    if (embeddings.config_name != ckpt.embedding_config)
        throw IntegrityError("checkpoint embedding config '" + ckpt.embedding_config +
                             "' does not match matrix config '" + embeddings.config_name + "'");
    Tagger model(ckpt.config, &embeddings);
    if (model.params().size() != ckpt.params.size())
        throw IntegrityError("checkpoint parameter count " + std::to_string(ckpt.params.size()) +
                             " does not match model " + std::to_string(model.params().size()));
    model.params().val = ckpt.params;
    return model;
}

}  // namespace toxspan
