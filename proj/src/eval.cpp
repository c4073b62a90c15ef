#include "bgm/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>

#include "bgm/error.hpp"
#include "bgm/text_util.hpp"

namespace bgm::eval {

namespace {

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

double f_measure(double p, double r, double beta) {
    const double b2 = beta * beta;
    const double denom = r + b2 * p;
    return denom > 0.0 ? (1.0 + b2) * p * r / denom : 0.0;
}

// Alignment search. Only reference positions whose word occurs in the
// hypothesis can be used; they are numbered into a bitmask.
class MeteorAligner {
public:
    static constexpr std::size_t kStateCap = 200000;

    MeteorAligner(const Tokens& hyp, const Tokens& ref) : hyp_(hyp), ref_(ref) {
        candidates_.resize(hyp.size());
        std::map<std::string_view, std::vector<int>> positions;
        for (std::size_t j = 0; j < ref.size(); ++j) positions[ref[j]].push_back(static_cast<int>(j));
        std::map<int, int> bit_of;
        for (std::size_t i = 0; i < hyp.size(); ++i) {
            auto it = positions.find(hyp[i]);
            if (it == positions.end()) continue;
            for (int j : it->second) {
                if (!bit_of.count(j)) bit_of.emplace(j, static_cast<int>(bit_of.size()));
                candidates_[i].push_back({j, bit_of[j]});
            }
        }
        bits_ = bit_of.size();
    }

    // {matches, chunks}
    std::pair<std::size_t, std::size_t> solve() {
        if (bits_ <= 64) {
            try {
                const Best best = search(0, -1, 0);
                return {best.matches, best.chunks};
            } catch (const TooManyStates&) {
                memo_.clear();
            }
        }
        return greedy();
    }

private:
    struct Candidate {
        int ref_pos;
        int bit;
    };
    struct Best {
        std::size_t matches = 0;
        std::size_t chunks = 0;
        bool better_than(const Best& o) const {
            return matches != o.matches ? matches > o.matches : chunks < o.chunks;
        }
    };
    struct Key {
        std::size_t i;
        int prev;
        std::uint64_t mask;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = k.mask * 0x9E3779B97F4A7C15ull;
            h ^= (static_cast<std::uint64_t>(k.i) << 32) ^ static_cast<std::uint32_t>(k.prev + 1);
            return static_cast<std::size_t>(h ^ (h >> 29));
        }
    };
    struct TooManyStates {};

    // `prev` is the reference position matched by hypothesis token i-1, or -1.
    Best search(std::size_t i, int prev, std::uint64_t mask) {
        if (i == hyp_.size()) return {};
        const Key key{i, prev, mask};
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        if (memo_.size() >= kStateCap) throw TooManyStates{};

        Best best = search(i + 1, -1, mask);
        for (const Candidate& c : candidates_[i]) {
            const std::uint64_t bit = 1ull << c.bit;
            if (mask & bit) continue;
            Best option = search(i + 1, c.ref_pos, mask | bit);
            option.matches += 1;
            if (prev < 0 || c.ref_pos != prev + 1) option.chunks += 1;
            if (option.better_than(best)) best = option;
        }
        memo_.emplace(key, best);
        return best;
    }

    // Matches every token it can, so the match count is still maximal; the
    // chunk count may be higher than optimal.
    std::pair<std::size_t, std::size_t> greedy() const {
        std::vector<bool> used(ref_.size(), false);
        std::size_t matches = 0;
        std::size_t chunks = 0;
        int prev = -1;
        for (std::size_t i = 0; i < hyp_.size(); ++i) {
            int chosen = -1;
            for (const Candidate& c : candidates_[i]) {
                if (used[static_cast<std::size_t>(c.ref_pos)]) continue;
                if (prev >= 0 && c.ref_pos == prev + 1) {
                    chosen = c.ref_pos;
                    break;
                }
                if (chosen < 0) chosen = c.ref_pos;
            }
            if (chosen >= 0) {
                used[static_cast<std::size_t>(chosen)] = true;
                ++matches;
                if (prev < 0 || chosen != prev + 1) ++chunks;
            }
            prev = chosen;
        }
        return {matches, chunks};
    }

    const Tokens& hyp_;
    const Tokens& ref_;
    std::vector<std::vector<Candidate>> candidates_;
    std::size_t bits_ = 0;
    std::unordered_map<Key, Best, KeyHash> memo_;
};

double mean(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return values.empty() ? 0.0 : sum / static_cast<double>(values.size());
}

std::vector<std::string_view> split_lines(std::string_view content) {
    std::vector<std::string_view> lines;
    while (!content.empty()) {
        const auto nl = content.find('\n');
        std::string_view line = content.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (nl == std::string_view::npos) break;
        content.remove_prefix(nl + 1);
    }
    return lines;
}

std::string read_file(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw Error(ErrorCode::IoFailure, "cannot read " + path.string(), path.string());
    std::string content;
    char buf[8192];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) content.append(buf, n);
    const bool failed = std::ferror(f) != 0;
    std::fclose(f);
    if (failed) throw Error(ErrorCode::IoFailure, "read error on " + path.string(), path.string());
    return content;
}

}  // namespace

Tokens tokenize(std::string_view input) {
    Tokens out;
    for (std::string_view raw : text::split_whitespace(input)) {
        while (!raw.empty() && is_punct(raw.front())) raw.remove_prefix(1);
        while (!raw.empty() && is_punct(raw.back())) raw.remove_suffix(1);
        if (!raw.empty()) out.push_back(text::to_lower_ascii(raw));
    }
    return out;
}

BleuStats& BleuStats::operator+=(const BleuStats& other) {
    for (int k = 0; k < kMaxOrder; ++k) {
        matches[k] += other.matches[k];
        totals[k] += other.totals[k];
    }
    hyp_length += other.hyp_length;
    ref_length += other.ref_length;
    return *this;
}

BleuStats bleu_stats(const Tokens& hyp, std::span<const Tokens> refs) {
    BleuStats stats;
    stats.hyp_length = hyp.size();
    bool have_ref = false;
    for (const Tokens& ref : refs) {
        const auto diff = [&](std::size_t len) { return len > hyp.size() ? len - hyp.size() : hyp.size() - len; };
        if (!have_ref || diff(ref.size()) < diff(stats.ref_length) ||
            (diff(ref.size()) == diff(stats.ref_length) && ref.size() < stats.ref_length)) {
            stats.ref_length = ref.size();
            have_ref = true;
        }
    }
    for (int k = 0; k < kMaxOrder; ++k) {
        const auto n = static_cast<std::size_t>(k + 1);
        const NgramCounts hyp_counts = ngram_counts(hyp, n);
        NgramCounts max_ref;
        for (const Tokens& ref : refs) {
            for (const auto& [gram, count] : ngram_counts(ref, n)) {
                auto& slot = max_ref[gram];
                slot = std::max(slot, count);
            }
        }
        for (const auto& [gram, count] : hyp_counts) {
            stats.totals[k] += count;
            if (auto it = max_ref.find(gram); it != max_ref.end()) stats.matches[k] += std::min(count, it->second);
        }
    }
    return stats;
}

std::array<double, kMaxOrder> bleu_from_stats(const BleuStats& stats, int max_n) {
    if (max_n < 1 || max_n > kMaxOrder) throw Error(ErrorCode::ConfigInvalid, "BLEU order must be in 1..4", "max_n");
    std::array<double, kMaxOrder> out{};
    if (stats.hyp_length == 0) return out;
    const double c = static_cast<double>(stats.hyp_length);
    const double r = static_cast<double>(stats.ref_length);
    const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    double log_sum = 0.0;
    int orders = 0;
    bool zero = false;
    for (int n = 1; n <= max_n; ++n) {
        const std::size_t total = stats.totals[n - 1];
        if (total > 0) {
            if (stats.matches[n - 1] == 0) zero = true;
            if (!zero) {
                log_sum += std::log(static_cast<double>(stats.matches[n - 1]) / static_cast<double>(total));
                ++orders;
            }
        }
        out[n - 1] = zero || orders == 0 ? 0.0 : 100.0 * bp * std::exp(log_sum / orders);
    }
    return out;
}

BleuScores bleu(const Tokens& hypothesis, std::span<const Tokens> references, int max_n) {
    BleuScores scores;
    scores.empty_hypothesis = hypothesis.empty();
    scores.b = bleu_from_stats(bleu_stats(hypothesis, references), max_n);
    return scores;
}

MeteorDetail meteor_detail(const Tokens& hyp, const Tokens& ref) {
    MeteorDetail d;
    if (hyp.empty() || ref.empty()) return d;
    std::tie(d.matches, d.chunks) = MeteorAligner(hyp, ref).solve();
    if (d.matches == 0) return d;
    const double m = static_cast<double>(d.matches);
    d.precision = m / static_cast<double>(hyp.size());
    d.recall = m / static_cast<double>(ref.size());
    d.fmean = 10.0 * d.precision * d.recall / (d.recall + 9.0 * d.precision);
    d.penalty = 0.5 * std::pow(static_cast<double>(d.chunks) / m, 3.0);
    d.score = 100.0 * d.fmean * (1.0 - d.penalty);
    return d;
}

double meteor(const Tokens& hypothesis, const Tokens& reference) { return meteor_detail(hypothesis, reference).score; }

double meteor(const Tokens& hypothesis, std::span<const Tokens> references) {
    double best = 0.0;
    for (const Tokens& ref : references) best = std::max(best, meteor(hypothesis, ref));
    return best;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> row(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = 0;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
            diag = up;
        }
    }
    return row[b.size()];
}

double rouge_l(const Tokens& hyp, const Tokens& ref, double beta) {
    if (hyp.empty() || ref.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(hyp, ref));
    if (lcs == 0.0) return 0.0;
    return 100.0 * f_measure(lcs / static_cast<double>(hyp.size()), lcs / static_cast<double>(ref.size()), beta);
}

double rouge_l(const Tokens& hypothesis, std::span<const Tokens> references, double beta) {
    double best = 0.0;
    for (const Tokens& ref : references) best = std::max(best, rouge_l(hypothesis, ref, beta));
    return best;
}

Aggregation aggregation_from_string(std::string_view text) {
    if (text == "sentence") return Aggregation::SentenceMean;
    if (text == "corpus") return Aggregation::Corpus;
    throw Error(ErrorCode::ConfigInvalid, "aggregation must be 'sentence' or 'corpus', got '" + std::string(text) + "'",
                "aggregation");
}

std::string_view to_string(Aggregation aggregation) {
    return aggregation == Aggregation::Corpus ? "corpus" : "sentence";
}

MetricRow score_pair(const EvalPair& pair, const EvalOptions& options) {
    if (pair.references.empty()) {
        throw Error(ErrorCode::SchemaViolation, "pair '" + pair.id + "' has no references", pair.id);
    }
    const Tokens hyp = tokenize(pair.hypothesis);
    std::vector<Tokens> refs;
    for (const auto& r : pair.references) refs.push_back(tokenize(r));
    const auto b = bleu(hyp, refs).b;
    return {b[0], b[1], b[2], b[3], meteor(hyp, refs), rouge_l(hyp, refs, options.rouge_beta)};
}

SystemScores score_system(std::string name, std::span<const EvalPair> pairs, const EvalOptions& options) {
    if (pairs.empty()) throw Error(ErrorCode::NoPairs, "no evaluation pairs", name);
    SystemScores out;
    out.system = std::move(name);
    std::array<std::vector<double>, kColumns.size()> columns;
    BleuStats pooled;
    for (const EvalPair& pair : pairs) {
        const MetricRow row = score_pair(pair, options);
        for (std::size_t c = 0; c < row.size(); ++c) columns[c].push_back(row[c]);
        if (tokenize(pair.hypothesis).empty()) ++out.empty_hypotheses;
        if (options.aggregation == Aggregation::Corpus) {
            std::vector<Tokens> refs;
            for (const auto& r : pair.references) refs.push_back(tokenize(r));
            pooled += bleu_stats(tokenize(pair.hypothesis), refs);
        }
    }
    for (std::size_t c = 0; c < columns.size(); ++c) out.scores[c] = mean(columns[c]);
    if (options.aggregation == Aggregation::Corpus) {
        const auto b = bleu_from_stats(pooled);
        std::copy(b.begin(), b.end(), out.scores.begin());
    }
    return out;
}

EvalReport evaluate_corpus(std::span<const EvalPair> pairs, const EvalOptions& options, std::string system) {
    EvalReport report;
    report.systems.push_back(score_system(std::move(system), pairs, options));
    report.n_pairs = pairs.size();
    report.aggregation = options.aggregation;
    return report;
}

EvalReport evaluate_systems(std::span<const SystemInput> systems, const EvalOptions& options) {
    if (systems.empty()) throw Error(ErrorCode::NoPairs, "no systems to evaluate");
    EvalReport report;
    report.aggregation = options.aggregation;
    report.n_pairs = systems.front().pairs.size();
    for (const SystemInput& s : systems) {
        if (s.pairs.size() != report.n_pairs) {
            throw Error(ErrorCode::ConfigInvalid,
                        "system '" + s.name + "' has " + std::to_string(s.pairs.size()) + " pairs, expected " +
                            std::to_string(report.n_pairs),
                        s.name);
        }
        report.systems.push_back(score_system(s.name, s.pairs, options));
    }
    return report;
}

std::array<std::size_t, kColumns.size()> EvalReport::best() const {
    std::array<std::size_t, kColumns.size()> out{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        for (std::size_t s = 1; s < systems.size(); ++s) {
            if (systems[s].scores[c] > systems[out[c]].scores[c]) out[c] = s;
        }
    }
    return out;
}

std::string render_table(const EvalReport& report, bool mark_best) {
    const bool marks = mark_best && report.systems.size() > 1;
    const auto best = report.best();
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Model"});
    for (auto col : kColumns) cells.back().emplace_back(col);
    for (std::size_t s = 0; s < report.systems.size(); ++s) {
        std::vector<std::string> row{report.systems[s].system};
        for (std::size_t c = 0; c < kColumns.size(); ++c) {
            std::string v = text::format_fixed2(report.systems[s].scores[c]);
            if (marks) v += best[c] == s ? "*" : " ";
            row.push_back(std::move(v));
        }
        cells.push_back(std::move(row));
    }
    std::vector<std::size_t> width(cells.front().size(), 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::string out;
    const auto rule = [&] {
        std::size_t total = width[0] + 3;
        for (std::size_t c = 1; c < width.size(); ++c) total += width[c] + (c + 1 < width.size() ? 2 : 0);
        out += std::string(total, '-') + '\n';
    };
    for (std::size_t r = 0; r < cells.size(); ++r) {
        const auto& row = cells[r];
        std::string line = row[0] + std::string(width[0] - row[0].size(), ' ') + " |";
        for (std::size_t c = 1; c < row.size(); ++c) {
            line += ' ' + std::string(width[c] - row[c].size(), ' ') + row[c];
            if (c + 1 < row.size()) line += ' ';
        }
        out += line + '\n';
        if (r == 0) rule();
    }
    return out;
}

std::string render_csv(const EvalReport& report) {
    std::string out = "Model";
    for (auto col : kColumns) out += "," + std::string(col);
    out += '\n';
    for (const auto& s : report.systems) {
        std::string name = s.system;
        if (name.find_first_of(",\"\n") != std::string::npos) {
            std::string quoted = "\"";
            for (char ch : name) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
            name = quoted + "\"";
        }
        out += name;
        for (double v : s.scores) out += "," + text::format_fixed2(v);
        out += '\n';
    }
    return out;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json systems = nlohmann::json::array();
    for (const auto& s : report.systems) {
        nlohmann::json scores = nlohmann::json::object();
        for (std::size_t c = 0; c < kColumns.size(); ++c) scores[std::string(kColumns[c])] = s.scores[c];
        systems.push_back({{"system", s.system}, {"scores", scores}, {"empty_hypotheses", s.empty_hypotheses}});
    }
    return {{"n_pairs", report.n_pairs},
            {"aggregation", std::string(to_string(report.aggregation))},
            {"systems", systems}};
}

std::vector<EvalPair> pairs_from_lines(std::string_view hypotheses, std::string_view references) {
    const auto hyps = split_lines(hypotheses);
    const auto refs = split_lines(references);
    if (hyps.size() != refs.size()) {
        throw Error(ErrorCode::SchemaViolation,
                    "hypothesis and reference line counts differ (" + std::to_string(hyps.size()) + " vs " +
                        std::to_string(refs.size()) + ")");
    }
    std::vector<EvalPair> pairs;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        EvalPair pair{std::to_string(i + 1), std::string(hyps[i]), {}};
        std::string_view rest = refs[i];
        for (;;) {
            const auto sep = rest.find(" ||| ");
            const auto ref = text::trim(rest.substr(0, sep));
            if (!ref.empty()) pair.references.emplace_back(ref);
            if (sep == std::string_view::npos) break;
            rest.remove_prefix(sep + 5);
        }
        if (pair.references.empty()) {
            throw Error(ErrorCode::SchemaViolation, "reference line " + pair.id + " is blank", pair.id);
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::vector<EvalPair> pairs_from_jsonl(std::string_view content) {
    std::vector<EvalPair> pairs;
    std::size_t line_no = 0;
    for (std::string_view line : split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            const auto doc = nlohmann::json::parse(line);
            EvalPair pair;
            pair.id = doc.contains("id") ? (doc["id"].is_string() ? doc["id"].get<std::string>() : doc["id"].dump())
                                         : std::to_string(line_no);
            pair.hypothesis = doc.at("hypothesis").get<std::string>();
            pair.references = doc.at("references").get<std::vector<std::string>>();
            if (pair.references.empty()) {
                throw Error(ErrorCode::SchemaViolation, "pair '" + pair.id + "' has no references", pair.id);
            }
            pairs.push_back(std::move(pair));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::SchemaViolation, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pairs;
}

std::vector<EvalPair> load_pairs(const std::filesystem::path& hypotheses, const std::filesystem::path& references) {
    return pairs_from_lines(read_file(hypotheses), read_file(references));
}

std::vector<EvalPair> load_pairs_jsonl(const std::filesystem::path& path) { return pairs_from_jsonl(read_file(path)); }

}  // namespace bgm::eval
