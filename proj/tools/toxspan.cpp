// toxspan: command-line front end for the toxic spans toolkit.
//
//   prepare   parse + tokenize a dataset, build the vocabulary
//   embed     build a fused embedding matrix for a named configuration
//   train     train the tagger, writing checkpoints and a training log
//   predict   tag a corpus and emit character-offset predictions
//   evaluate  score predictions with the span F1 metric
//   ablate    run the 4-variant x 7-embedding grid

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "toxspan/pipeline.hpp"

using namespace toxspan;

namespace {

struct ModelFlags {
    std::string config_file;
    std::string encoder;
    bool attention = false, no_attention = false, softmax_head = false;
    int hidden_size = 0, dense_units = 0, max_len = 0, batch_size = 0, epochs = 0;
    double learning_rate = 0.0, dropout = 0.0;
    uint64_t seed = 0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config-file", config_file, "JSON file with model settings");
        cmd->add_option("--encoder", encoder, "BiGRU or BiLSTM (default BiGRU)");
        cmd->add_flag("--attention", attention, "enable self-attention (default)");
        cmd->add_flag("--no-attention", no_attention, "disable self-attention");
        cmd->add_option("--hidden-size", hidden_size, "recurrent units per direction (default 64)");
        cmd->add_option("--dense-units", dense_units, "dense layer width (default 50)");
        cmd->add_option("--max-len", max_len, "sequence length (default 215)");
        cmd->add_option("--batch-size", batch_size, "batch size (default 32)");
        cmd->add_option("--epochs", epochs, "training epochs (default 10)");
        cmd->add_option("--learning-rate", learning_rate, "RMSprop learning rate (default 1e-3)");
        cmd->add_option("--dropout", dropout, "dropout rate between layers (default 0)");
        cmd->add_flag("--softmax-head", softmax_head, "use a softmax output head");
        cmd->add_option("--seed", seed, "RNG seed (default 42)");
    }

    // flags > config file > built-in defaults
    ModelConfig resolve(const CLI::App* cmd) const {
        ModelConfig cfg;
        if (!config_file.empty())
            model_config_overlay(cfg, nlohmann::json::parse(read_text_file(config_file)));
        if (cmd->count("--encoder")) cfg.encoder = encoder_from_string(encoder);
        if (cmd->count("--attention")) cfg.attention = true;
        if (cmd->count("--no-attention")) cfg.attention = false;
        if (cmd->count("--hidden-size")) cfg.hidden_size = hidden_size;
        if (cmd->count("--dense-units")) cfg.dense_units = dense_units;
        if (cmd->count("--max-len")) cfg.max_len = max_len;
        if (cmd->count("--batch-size")) cfg.batch_size = batch_size;
        if (cmd->count("--epochs")) cfg.epochs = epochs;
        if (cmd->count("--learning-rate")) cfg.learning_rate = learning_rate;
        if (cmd->count("--dropout")) cfg.dropout = dropout;
        if (cmd->count("--softmax-head")) cfg.softmax_head = true;
        if (cmd->count("--seed")) cfg.seed = seed;
        return cfg;
    }
};

int run(int argc, char** argv) {
    CLI::App app{"toxspan: toxic spans detection toolkit"};
    app.require_subcommand(1);

    // prepare ---------------------------------------------------------------
    auto* prepare = app.add_subcommand("prepare", "tokenize a dataset and build the vocabulary");
    std::string prep_data, prep_format = "csv-with-spans", prep_out;
    prepare->add_option("--data", prep_data, "input CSV")->required();
    prepare->add_option("--format", prep_format, "csv-with-spans or csv-text-only");
    prepare->add_option("--out", prep_out, "output directory")->required();

    // embed -----------------------------------------------------------------
    auto* embed = app.add_subcommand("embed", "build an embedding matrix");
    std::string emb_vocab, emb_config = "Ensemble", emb_glove, emb_gpt2, emb_roberta, emb_out,
                emb_cache;
    embed->add_option("--vocab", emb_vocab, "vocabulary file from prepare")->required();
    embed->add_option("--config", emb_config,
                      "GloVe, GPT-2, RoBERTa, RG, GoR, GoG or Ensemble");
    embed->add_option("--glove", emb_glove, "GloVe text file");
    embed->add_option("--gpt2-dir", emb_gpt2, "GPT-2 checkpoint directory");
    embed->add_option("--roberta-dir", emb_roberta, "RoBERTa checkpoint directory");
    embed->add_option("--out", emb_out, "output matrix file")->required();
    embed->add_option("--cache-dir", emb_cache, "LM vector cache directory");

    // train -----------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train the tagger");
    std::string tr_train, tr_dev, tr_vocab, tr_matrix, tr_out;
    ModelFlags tr_flags;
    train_cmd->add_option("--train-corpus", tr_train, "prepared training corpus")->required();
    train_cmd->add_option("--dev-corpus", tr_dev, "prepared dev corpus (optional)");
    train_cmd->add_option("--vocab", tr_vocab, "vocabulary file")->required();
    train_cmd->add_option("--matrix", tr_matrix, "embedding matrix file")->required();
    train_cmd->add_option("--out", tr_out, "run directory")->required();
    tr_flags.add_to(train_cmd);

    // predict ---------------------------------------------------------------
    auto* predict = app.add_subcommand("predict", "tag a corpus");
    std::string pr_corpus, pr_vocab, pr_matrix, pr_ckpt, pr_out;
    predict->add_option("--corpus", pr_corpus, "prepared corpus")->required();
    predict->add_option("--vocab", pr_vocab, "vocabulary file")->required();
    predict->add_option("--matrix", pr_matrix, "embedding matrix file")->required();
    predict->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
    predict->add_option("--out", pr_out, "run directory")->required();

    // evaluate --------------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "score predictions");
    std::string ev_pred, ev_gold, ev_out;
    evaluate->add_option("--predictions", ev_pred, "prediction file")->required();
    evaluate->add_option("--gold", ev_gold, "gold corpus (prepared JSONL or spans CSV)")
        ->required();
    evaluate->add_option("--out", ev_out, "run directory")->required();

    // ablate ----------------------------------------------------------------
    auto* ablate = app.add_subcommand("ablate", "run the model x embedding grid");
    std::string ab_train, ab_dev, ab_test, ab_vocab, ab_glove, ab_gpt2, ab_roberta, ab_cache,
                ab_only, ab_out;
    bool ab_save_ckpts = false;
    ModelFlags ab_flags;
    ablate->add_option("--train-corpus", ab_train, "prepared training corpus")->required();
    ablate->add_option("--dev-corpus", ab_dev, "prepared dev corpus")->required();
    ablate->add_option("--test-corpus", ab_test, "prepared test corpus (optional)");
    ablate->add_option("--vocab", ab_vocab, "vocabulary file")->required();
    ablate->add_option("--glove", ab_glove, "GloVe text file");
    ablate->add_option("--gpt2-dir", ab_gpt2, "GPT-2 checkpoint directory");
    ablate->add_option("--roberta-dir", ab_roberta, "RoBERTa checkpoint directory");
    ablate->add_option("--cache-dir", ab_cache, "LM vector cache directory");
    ablate->add_option("--only", ab_only, "run one cell, e.g. BiGRU+Attention:Ensemble");
    ablate->add_flag("--save-cell-checkpoints", ab_save_ckpts, "keep per-cell checkpoints");
    ablate->add_option("--out", ab_out, "run directory")->required();
    ab_flags.add_to(ablate);

    CLI11_PARSE(app, argc, argv);

    if (prepare->parsed()) {
        DatasetFormat format;
        if (prep_format == "csv-with-spans") format = DatasetFormat::CsvWithSpans;
        else if (prep_format == "csv-text-only") format = DatasetFormat::CsvTextOnly;
        else throw ConfigError("unknown format '" + prep_format + "'");
        PrepareStats st = cmd_prepare(prep_data, format, prep_out);
        std::printf("posts: %d (%d unlabeled, %d with empty gold)\n", st.posts, st.unlabeled,
                    st.empty_gold);
        std::printf("tokens: %d\n", st.tokens);
        std::printf("vocabulary: %d words (+2 reserved)\n", st.vocab_non_reserved);
        if (st.posts == 0) std::printf("warning: dataset contains no posts\n");
        std::printf("corpus:  %s\nvocab:   %s\n", st.corpus_path.c_str(), st.vocab_path.c_str());
    } else if (embed->parsed()) {
        EmbedStats st = cmd_embed(emb_vocab, emb_config, emb_glove, emb_gpt2, emb_roberta,
                                  emb_out, resolve_cache_dir(emb_cache));
        std::printf("matrix: %d x %d (%s)\n", st.rows, st.cols, emb_config.c_str());
        if (st.vocab_non_reserved > 0 && st.glove_oov > 0) {
            double pct = 100.0 * st.glove_oov / st.vocab_non_reserved;
            std::printf("GloVe OOV: %d / %d words (%.1f%%)\n", st.glove_oov,
                        st.vocab_non_reserved, pct);
            if (st.glove_oov == st.vocab_non_reserved)
                std::printf("warning: every vocabulary word is GloVe-OOV\n");
        }
        std::printf("written: %s\n", st.matrix_path.c_str());
    } else if (train_cmd->parsed()) {
        ModelConfig cfg = tr_flags.resolve(train_cmd);
        TrainArtifacts art = cmd_train(tr_train, tr_dev, tr_vocab, tr_matrix, cfg, tr_out);
        for (const auto& rec : art.result.history) {
            if (rec.dev_span_f1 >= 0.0)
                std::printf("epoch %d: loss %.6f  dev F1 %.3f  (%.1fs)\n", rec.epoch,
                            rec.train_loss, rec.dev_span_f1, rec.wall_seconds);
            else
                std::printf("epoch %d: loss %.6f  (%.1fs)\n", rec.epoch, rec.train_loss,
                            rec.wall_seconds);
        }
        if (art.truncated_posts > 0)
            std::printf("warning: %d posts truncated to max_len %d\n", art.truncated_posts,
                        cfg.max_len);
        std::printf("final checkpoint: %s\n", art.final_checkpoint.c_str());
        if (!art.best_checkpoint.empty())
            std::printf("best checkpoint (epoch %d, dev F1 %.3f): %s\n", art.result.best_epoch,
                        art.result.best_dev_f1, art.best_checkpoint.c_str());
    } else if (predict->parsed()) {
        PredictStats st = cmd_predict(pr_corpus, pr_vocab, pr_matrix, pr_ckpt, pr_out);
        std::printf("predicted %d posts -> %s\n", st.posts, st.predictions_path.c_str());
    } else if (evaluate->parsed()) {
        ScoreReport report = cmd_evaluate(ev_pred, ev_gold, ev_out);
        std::printf("mean span F1: %.3f over %d posts (%d with empty gold)\n",
                    round3(report.mean_f1), report.num_posts, report.num_empty_gold);
    } else if (ablate->parsed()) {
        AblateOptions opts;
        opts.base = ab_flags.resolve(ablate);
        opts.glove_path = ab_glove;
        opts.gpt2_dir = ab_gpt2;
        opts.roberta_dir = ab_roberta;
        opts.cache_dir = resolve_cache_dir(ab_cache);
        opts.only = ab_only;
        opts.save_cell_checkpoints = ab_save_ckpts;
        AblateResult res = cmd_ablate(ab_train, ab_dev, ab_test, ab_vocab, opts, ab_out);
        std::printf("%s", read_text_file(res.table_path).c_str());
        if (res.any_failed) {
            std::printf("some cells failed; see %s\n", res.json_path.c_str());
            return 1;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    const char* stage = argc > 1 ? argv[1] : "toxspan";
    try {
        return run(argc, argv);
    } catch (const toxspan::Error& e) {
        std::fprintf(stderr, "toxspan %s: error: %s\n", stage, e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "toxspan %s: unexpected error: %s\n", stage, e.what());
        return 1;
    }
}
