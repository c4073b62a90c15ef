#include "bgm/genstage.hpp"

#include <cctype>
#include <thread>

#include "bgm/error.hpp"
#include "bgm/text_util.hpp"

namespace bgm {
namespace {

std::string scalar_text(const Scalar& v) {
    if (const bool* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (const double* d = std::get_if<double>(&v)) return text::format_fixed2(*d);
    return std::get<std::string>(v);
}

std::string value_text(const FieldValue& v) {
    if (const FlagMap* map = std::get_if<FlagMap>(&v)) {
        std::string out = "(";
        for (const auto& [k, inner] : *map) {
            if (out.size() > 1) out += ", ";
            out += k + "=" + scalar_text(inner);
        }
        return out + ")";
    }
    if (const bool* b = std::get_if<bool>(&v)) return scalar_text(*b);
    if (const double* d = std::get_if<double>(&v)) return scalar_text(*d);
    return std::get<std::string>(v);
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string to_info_str(const CharacterizedData& data) {
    std::string out;
    for (const auto& f : data.entries) {
        if (!out.empty()) out += "; ";
        out += f.key + ": " + value_text(f.value);
    }
    return out;
}

std::string enforce_word_limit(std::string_view input, std::size_t limit) {
    if (limit < 1) throw Error(ErrorCode::ConfigInvalid, "word limit must be >= 1", "limit");
    const auto words = text::split_whitespace(input);
    if (words.size() <= limit) return std::string(input);
    std::string out;
    for (std::size_t i = 0; i < limit; ++i) {
        if (i) out += ' ';
        out.append(words[i]);
    }
    while (!out.empty() && out.back() != '.' && std::ispunct(static_cast<unsigned char>(out.back()))) out.pop_back();
    return std::string(text::trim(out));
}

GenerationResult complete_with_retry(TextBackend& backend, const GenerationRequest& request,
                                     const RetryPolicy& retry, int* attempts_used) {
    const int attempts = std::max(1, retry.attempts);
    auto backoff = retry.initial_backoff;
    std::optional<Error> last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempts_used) *attempts_used = attempt;
        try {
            GenerationResult result = backend.complete(request);
            if (!text::trim(result.text).empty()) return result;
            last_error = Error(ErrorCode::EmptyGeneration, "backend returned an empty generation", backend.model_id());
        } catch (const Error& e) {
            if (!is_transient(e)) throw;
            last_error = e;
        }
        if (attempt < attempts && backoff.count() > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    if (last_error->code() == ErrorCode::EmptyGeneration) {
        throw Error(ErrorCode::EmptyGeneration,
                    "backend returned an empty generation " + std::to_string(attempts) + " times", backend.model_id());
    }
    throw *last_error;
}

Generated<NarrativeText> generate_narrative(const CharacterizedData& data, std::uint64_t window,
                                            const PromptTemplate& tmpl, TextBackend& backend,
                                            const StageConfig& config) {
    Generated<NarrativeText> out;
    out.trace.prompt = render_prompt(tmpl, {{std::string(placeholder::kInfoStr), to_info_str(data)}});
    GenerationRequest request{tmpl.role_preamble, out.trace.prompt, config.params, GenerationTask::Narrative};
    const auto start = std::chrono::steady_clock::now();
    const GenerationResult result = complete_with_retry(backend, request, config.retry, &out.trace.attempts);
    out.trace.backend_ms = elapsed_ms(start);
    out.trace.length = result.length;
    out.value.text = text::collapse_whitespace(result.text);
    out.value.source_window = window;
    return out;
}

Generated<MusicDescription> generate_music_description(const NarrativeText& narrative,
                                                       const std::optional<Anchor>& anchor,
                                                       const PromptTemplate& tmpl, TextBackend& backend,
                                                       const StageConfig& config) {
    Generated<MusicDescription> out;
    const Bindings bindings = {
        {std::string(placeholder::kScene), narrative.text},
        {std::string(placeholder::kAnchor), anchor ? anchor->text : std::string(kNoAnchor)},
    };
    out.trace.prompt = render_prompt(tmpl, bindings);
    GenerationRequest request{tmpl.role_preamble, out.trace.prompt, config.params, GenerationTask::MusicDescription};
    const auto start = std::chrono::steady_clock::now();
    const GenerationResult result = complete_with_retry(backend, request, config.retry, &out.trace.attempts);
    out.trace.backend_ms = elapsed_ms(start);
    out.trace.length = result.length;

    const std::size_t limit = std::min<std::size_t>(
        tmpl.max_output_words ? static_cast<std::size_t>(*tmpl.max_output_words) : kMaxDescriptionWords,
        kMaxDescriptionWords);
    out.value.text = enforce_word_limit(text::collapse_whitespace(result.text), limit);
    if (out.value.text.empty()) {
        throw Error(ErrorCode::EmptyGeneration, "music description is empty after normalization", backend.model_id());
    }
    out.value.word_count = text::word_count(out.value.text);
    if (anchor) out.value.anchor_of = anchor->window;
    return out;
}

}  // namespace bgm
