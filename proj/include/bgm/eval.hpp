#pragma once
// Reference-based text metrics on a 0-100 scale: BLEU-1..4, exact-match
// METEOR and ROUGE-L, plus the per-system report.

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bgm::eval {

using Tokens = std::vector<std::string>;

// Lowercase, whitespace split, surrounding ASCII punctuation stripped;
// tokens that were all punctuation disappear.
Tokens tokenize(std::string_view text);

inline constexpr int kMaxOrder = 4;

// Clipped n-gram counts for one hypothesis, poolable across a corpus.
struct BleuStats {
    std::array<std::size_t, kMaxOrder> matches{};
    std::array<std::size_t, kMaxOrder> totals{};
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;  // closest reference length, shorter on ties

    BleuStats& operator+=(const BleuStats& other);
};

BleuStats bleu_stats(const Tokens& hypothesis, std::span<const Tokens> references);

// B-n for n = 1..max_n; entries past max_n are 0. Orders with no hypothesis
// n-grams at all (hypothesis shorter than n) are left out of the geometric
// mean; any order with zero matches gives 0.
std::array<double, kMaxOrder> bleu_from_stats(const BleuStats& stats, int max_n = kMaxOrder);

struct BleuScores {
    std::array<double, kMaxOrder> b{};
    bool empty_hypothesis = false;  // scored 0
};

BleuScores bleu(const Tokens& hypothesis, std::span<const Tokens> references, int max_n = kMaxOrder);

struct MeteorDetail {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fmean = 0.0;
    double penalty = 0.0;
    double score = 0.0;
};

// One-to-one unigram alignment with the most matches, then the fewest chunks.
MeteorDetail meteor_detail(const Tokens& hypothesis, const Tokens& reference);
double meteor(const Tokens& hypothesis, const Tokens& reference);
// Best score over the references.
double meteor(const Tokens& hypothesis, std::span<const Tokens> references);

inline constexpr double kDefaultRougeBeta = 1.2;

std::size_t lcs_length(const Tokens& a, const Tokens& b);
double rouge_l(const Tokens& hypothesis, const Tokens& reference, double beta = kDefaultRougeBeta);
double rouge_l(const Tokens& hypothesis, std::span<const Tokens> references, double beta = kDefaultRougeBeta);

struct EvalPair {
    std::string id;
    std::string hypothesis;
    std::vector<std::string> references;  // non-empty
};

enum class Aggregation { SentenceMean, Corpus };

Aggregation aggregation_from_string(std::string_view text);
std::string_view to_string(Aggregation aggregation);

// Column order of the report: B-1, B-2, B-3, B-4, METEOR, R-L.
inline constexpr std::array<std::string_view, 6> kColumns = {"B-1", "B-2", "B-3", "B-4", "METEOR", "R-L"};
using MetricRow = std::array<double, kColumns.size()>;

struct EvalOptions {
    Aggregation aggregation = Aggregation::SentenceMean;
    double rouge_beta = kDefaultRougeBeta;
};

MetricRow score_pair(const EvalPair& pair, const EvalOptions& options = {});

struct SystemScores {
    std::string system;
    MetricRow scores{};
    std::size_t empty_hypotheses = 0;
};

struct EvalReport {
    std::vector<SystemScores> systems;
    std::size_t n_pairs = 0;
    Aggregation aggregation = Aggregation::SentenceMean;

    // Index of the best system per column (first on ties).
    std::array<std::size_t, kColumns.size()> best() const;
};

// Throws Error{NoPairs}.
SystemScores score_system(std::string name, std::span<const EvalPair> pairs, const EvalOptions& options = {});
EvalReport evaluate_corpus(std::span<const EvalPair> pairs, const EvalOptions& options = {},
                           std::string system = "system");

struct SystemInput {
    std::string name;
    std::vector<EvalPair> pairs;
};

// All systems must cover the same number of pairs. Throws Error{NoPairs}.
EvalReport evaluate_systems(std::span<const SystemInput> systems, const EvalOptions& options = {});

// Aligned columns, two decimals, best value per column marked with '*'.
std::string render_table(const EvalReport& report, bool mark_best = true);
// Header: Model,B-1,B-2,B-3,B-4,METEOR,R-L
std::string render_csv(const EvalReport& report);
nlohmann::json report_to_json(const EvalReport& report);

// One pair per line; both texts need the same line count. A reference line
// may hold several references separated by " ||| ". Blank hypothesis lines
// are kept (and score 0). Throws Error{SchemaViolation}.
std::vector<EvalPair> pairs_from_lines(std::string_view hypotheses, std::string_view references);
// {"id": ..., "hypothesis": ..., "references": [...]} per line.
std::vector<EvalPair> pairs_from_jsonl(std::string_view content);
std::vector<EvalPair> load_pairs(const std::filesystem::path& hypotheses, const std::filesystem::path& references);
std::vector<EvalPair> load_pairs_jsonl(const std::filesystem::path& path);

}  // namespace bgm::eval
