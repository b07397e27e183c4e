// Scoring: map token predictions back to character offsets and compute the
// per-post span F1, averaged over posts. Both-empty scores 1, one-empty
// scores 0; otherwise P = |S∩G|/|S|, R = |S∩G|/|G|, F1 = 2PR/(P+R).
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "toxspan/corpus.hpp"
#include "toxspan/util.hpp"

namespace toxspan {

/// Predicted toxic character offsets for one post, sorted and unique.
struct SpanPrediction {
    std::string post_id;
    std::vector<int> offsets;
};

// ---------------------------------------------------------------------------
// Decoding token classes back to character offsets
// ---------------------------------------------------------------------------

/// Union of [start, end) over tokens predicted toxic. Positions at or past
/// the token count are ignored. `bridge_gaps` optionally fills the gap
/// between two adjacent toxic tokens; it is off by default and not part of
/// the reference decode rule.
inline SpanPrediction decode_spans(const std::string& post_id,
                                   const std::vector<TokenSpan>& tokens,
                                   const std::vector<int>& predicted_class,
                                   bool bridge_gaps = false) {
    SpanPrediction pred;
    pred.post_id = post_id;
    const size_t n = std::min(tokens.size(), predicted_class.size());
    int prev_toxic_end = -1;
    for (size_t i = 0; i < n; ++i) {
        if (predicted_class[i] != kClassToxic) continue;
        const auto& t = tokens[i];
        if (bridge_gaps && prev_toxic_end >= 0 && prev_toxic_end < t.start)
            for (int c = prev_toxic_end; c < t.start; ++c) pred.offsets.push_back(c);
        for (int c = t.start; c < t.end; ++c) pred.offsets.push_back(c);
        prev_toxic_end = t.end;
    }
    std::sort(pred.offsets.begin(), pred.offsets.end());
    pred.offsets.erase(std::unique(pred.offsets.begin(), pred.offsets.end()),
                       pred.offsets.end());
    return pred;
}

// ---------------------------------------------------------------------------
// The metric
// ---------------------------------------------------------------------------

struct PrecisionRecallF1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Inputs must be sorted and duplicate-free.
inline PrecisionRecallF1 span_prf(const std::vector<int>& predicted,
                                  const std::vector<int>& gold) {
    PrecisionRecallF1 r;
    if (predicted.empty() && gold.empty()) {
        r.precision = r.recall = r.f1 = 1.0;
        return r;
    }
    if (predicted.empty() || gold.empty()) return r;  // all zero

    size_t i = 0, j = 0, inter = 0;
    while (i < predicted.size() && j < gold.size()) {
        if (predicted[i] < gold[j]) ++i;
        else if (predicted[i] > gold[j]) ++j;
        else { ++inter; ++i; ++j; }
    }
    assert(!predicted.empty() && !gold.empty());
    r.precision = static_cast<double>(inter) / static_cast<double>(predicted.size());
    r.recall = static_cast<double>(inter) / static_cast<double>(gold.size());
    if (r.precision + r.recall > 0.0)
        r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

inline double span_f1(const std::vector<int>& predicted, const std::vector<int>& gold) {
    return span_prf(predicted, gold).f1;
}

// ---------------------------------------------------------------------------
// Corpus-level evaluation
// ---------------------------------------------------------------------------

struct ScoreReport {
    std::vector<std::pair<std::string, double>> per_post_f1;  // post order preserved
    double mean_f1 = 0.0;
    int num_posts = 0;
    int num_empty_gold = 0;
};

/// Per-post F1 against gold, arithmetic mean over all posts. Prediction ids
/// must cover the gold post ids exactly.
inline ScoreReport evaluate(const std::vector<SpanPrediction>& predictions,
                            const std::vector<Post>& gold_posts) {
    std::map<std::string, const SpanPrediction*> by_id;
    for (const auto& p : predictions) by_id.emplace(p.post_id, &p);

    std::string missing, extra;
    std::set<std::string> gold_ids;
    for (const auto& g : gold_posts) {
        gold_ids.insert(g.id);
        if (!by_id.count(g.id)) missing += (missing.empty() ? "" : ", ") + g.id;
    }
    for (const auto& p : predictions)
        if (!gold_ids.count(p.post_id)) extra += (extra.empty() ? "" : ", ") + p.post_id;
    if (!missing.empty() || !extra.empty())
        throw AlignmentError("prediction/gold id mismatch" +
                             (missing.empty() ? "" : "; missing predictions for: " + missing) +
                             (extra.empty() ? "" : "; extra predictions for: " + extra));

    ScoreReport report;
    report.num_posts = static_cast<int>(gold_posts.size());
    double sum = 0.0;
    for (const auto& g : gold_posts) {
        double f1 = span_f1(by_id.at(g.id)->offsets, g.gold_offsets);
        report.per_post_f1.emplace_back(g.id, f1);
        sum += f1;
        if (g.gold_offsets.empty()) ++report.num_empty_gold;
    }
    report.mean_f1 = gold_posts.empty() ? 0.0 : sum / static_cast<double>(gold_posts.size());
    return report;
}

inline ScoreReport evaluate_tagged(const std::vector<SpanPrediction>& predictions,
                                   const TaggedCorpus& gold) {
    std::vector<Post> posts;
    posts.reserve(gold.size());
    for (const auto& tp : gold)
        posts.push_back(Post{tp.id, tp.text, tp.gold_offsets, tp.unlabeled});
    return evaluate(predictions, posts);
}

// ---------------------------------------------------------------------------
// Prediction file: one bracketed sorted integer list per line, in dataset
// row order, e.g. "[4, 5, 6, 7]".
// ---------------------------------------------------------------------------

inline std::string format_offsets(const std::vector<int>& offsets) {
    std::string out = "[";
    for (size_t i = 0; i < offsets.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(offsets[i]);
    }
    out += "]";
    return out;
}

inline void save_predictions(const std::string& path,
                             const std::vector<SpanPrediction>& predictions) {
    std::string out;
    for (const auto& p : predictions) {
        out += format_offsets(p.offsets);
        out += '\n';
    }
    write_text_file(path, out);
}

/// Reads a prediction file; ids are assigned by row order to mirror the
/// dataset the predictions were made for.
inline std::vector<SpanPrediction> load_predictions(const std::string& path) {
    std::string data = read_text_file(path);
    std::vector<SpanPrediction> out;
    size_t pos = 0;
    while (pos < data.size()) {
        size_t nl = data.find('\n', pos);
        if (nl == std::string::npos) nl = data.size();
        std::string_view line(data.data() + pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        SpanPrediction p;
        p.post_id = std::to_string(out.size());
        try {
            p.offsets = parse_span_literal(line);
        } catch (const ParseError& e) {
            throw ParseError(path + ": line " + std::to_string(out.size() + 1) + ": " + e.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Score report serialization
// ---------------------------------------------------------------------------

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline nlohmann::json score_report_json(const ScoreReport& r) {
    std::vector<double> f1s;
    f1s.reserve(r.per_post_f1.size());
    for (const auto& [id, f1] : r.per_post_f1) f1s.push_back(f1);
    std::sort(f1s.begin(), f1s.end());
    auto quantile = [&](double q) {
        if (f1s.empty()) return 0.0;
        double x = q * static_cast<double>(f1s.size() - 1);
        size_t lo = static_cast<size_t>(x);
        size_t hi = std::min(lo + 1, f1s.size() - 1);
        return f1s[lo] + (x - static_cast<double>(lo)) * (f1s[hi] - f1s[lo]);
    };

    nlohmann::json j;
    j["mean_f1"] = r.mean_f1;                  // full precision
    j["mean_f1_rounded"] = round3(r.mean_f1);  // display, 3 decimals
    j["num_posts"] = r.num_posts;
    j["num_empty_gold"] = r.num_empty_gold;
    j["distribution"] = {{"min", quantile(0.0)},   {"p25", quantile(0.25)},
                         {"median", quantile(0.5)}, {"p75", quantile(0.75)},
                         {"max", quantile(1.0)}};
    nlohmann::json per_post = nlohmann::json::object();
    for (const auto& [id, f1] : r.per_post_f1) per_post[id] = f1;
    j["per_post_f1"] = std::move(per_post);
    return j;
}

// ---------------------------------------------------------------------------
// Ablation table: 4 model variants x 7 embedding configurations
// ---------------------------------------------------------------------------

struct AblationCell {
    bool ran = false;
    bool failed = false;
    double f1 = 0.0;
    std::string error;
};

/// Formats one grid (rows: model variants, columns: embedding configs) in
/// the standard report layout. Failed cells are marked, missing cells blank.
inline std::string format_ablation_table(
    const std::string& title, const std::vector<std::string>& row_names,
    const std::vector<std::string>& col_names,
    const std::vector<std::vector<AblationCell>>& cells) {
    const int name_w = 22;
    const int col_w = 9;
    std::string out;
    auto pad = [&](std::string s, int w) {
        if (static_cast<int>(s.size()) < w) s += std::string(static_cast<size_t>(w) - s.size(), ' ');
        return s;
    };
    out += pad("Method", name_w);
    for (const auto& c : col_names) out += pad(c, col_w);
    out += '\n';
    out += title + '\n';
    for (size_t r = 0; r < row_names.size(); ++r) {
        out += pad(row_names[r], name_w);
        for (size_t c = 0; c < col_names.size(); ++c) {
            const AblationCell& cell = cells[r][c];
            if (!cell.ran) out += pad("-", col_w);
            else if (cell.failed) out += pad("FAILED", col_w);
            else {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.3f", cell.f1);
                out += pad(buf, col_w);
            }
        }
        out += '\n';
    }
    return out;
}

}  // namespace toxspan
