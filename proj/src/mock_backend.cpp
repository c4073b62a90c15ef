#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <map>

#include "bgm/backend.hpp"
#include "bgm/error.hpp"
#include "bgm/text_util.hpp"

namespace bgm {
namespace {

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

using InfoFields = std::map<std::string, std::string, std::less<>>;

// "Scene: Forest; Time: morning; Status: (Wet=false)" -> {Scene: Forest, ...}
InfoFields parse_info_line(std::string_view line) {
    InfoFields out;
    while (!line.empty()) {
        const auto sep = line.find("; ");
        std::string_view item = line.substr(0, sep);
        const auto colon = item.find(": ");
        if (colon != std::string_view::npos) {
            out.emplace(std::string(text::trim(item.substr(0, colon))), std::string(text::trim(item.substr(colon + 2))));
        }
        if (sep == std::string_view::npos) break;
        line.remove_prefix(sep + 2);
    }
    return out;
}

std::string_view line_at(std::string_view text, std::size_t pos) {
    const auto end = text.find('\n', pos);
    return text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
}

const std::string* get(const InfoFields& f, std::string_view key) {
    auto it = f.find(key);
    return it == f.end() ? nullptr : &it->second;
}

std::optional<double> get_number(const InfoFields& f, std::string_view key) {
    const std::string* v = get(f, key);
    if (!v) return std::nullopt;
    try {
        return std::stod(*v);
    } catch (...) {
        return std::nullopt;
    }
}

bool has_flag(const InfoFields& f, std::string_view key, std::string_view flag) {
    const std::string* v = get(f, key);
    return v && v->find(std::string(flag) + "=true") != std::string::npos;
}

// Names inside "(Zombie=3.00, Skeleton=5.00)".
std::vector<std::string> nested_names(const std::string& value) {
    std::vector<std::string> names;
    std::string_view inner = value;
    if (inner.size() >= 2 && inner.front() == '(' && inner.back() == ')') inner = inner.substr(1, inner.size() - 2);
    while (!inner.empty()) {
        const auto comma = inner.find(", ");
        std::string_view item = inner.substr(0, comma);
        const auto eq = item.find('=');
        if (eq != std::string_view::npos && eq > 0) names.emplace_back(item.substr(0, eq));
        if (comma == std::string_view::npos) break;
        inner.remove_prefix(comma + 2);
    }
    return names;
}

std::string compose_narrative(const InfoFields& f, std::uint64_t h) {
    const std::string scene = get(f, "Scene") ? *get(f, "Scene") : std::string("open land");
    std::string out;
    if (const std::string* time = get(f, "Time")) {
        static constexpr std::array<const char*, 3> frames = {"In the %T light, amid the %S,", "As %T settles over the %S,",
                                                              "Through the %T stillness of the %S,"};
        out = frames[h % frames.size()];
        out.replace(out.find("%T"), 2, *time);
    } else {
        static constexpr std::array<const char*, 3> frames = {"Amid the %S,", "Deep within the %S,", "Across the %S,"};
        out = frames[h % frames.size()];
    }
    out.replace(out.find("%S"), 2, scene);

    if (const std::string* weather = get(f, "Weather")) {
        const std::string w = text::to_lower_ascii(*weather);
        if (w.find("thunder") != std::string::npos) {
            out += " as thunder rolls overhead,";
        } else if (w.find("rain") != std::string::npos) {
            out += " as rain falls softly,";
        } else if (w.find("snow") != std::string::npos) {
            out += " as snow drifts down,";
        } else {
            out += " beneath " + *weather + " skies,";
        }
    }
    if (auto t = get_number(f, "Temperature")) {
        if (*t < 0.2) {
            out += " in biting cold air,";
        } else if (*t > 1.0) {
            out += " in heavy heat,";
        }
    }

    std::string subject = "a lone";
    if (auto health = get_number(f, "Health")) {
        subject = *health >= 15.0 ? "a healthy" : *health >= 8.0 ? "a weary" : "a wounded";
        if (auto satiety = get_number(f, "Satiety"); satiety && *satiety < 6.0) subject += ", hungry";
    }
    subject += (h >> 8) % 2 == 0 ? " traveler" : " wanderer";
    out += " " + subject;

    if (has_flag(f, "Movement", "Running") || has_flag(f, "Movement", "Sprinting")) {
        out += " races ahead";
    } else if (has_flag(f, "Movement", "Sneaking")) {
        out += " creeps forward";
    } else {
        out += " moves cautiously";
    }
    if (has_flag(f, "Position", "OnGround")) out += " on solid ground";
    if (const std::string* hostiles = get(f, "Hostile Entity")) {
        const auto names = nested_names(*hostiles);
        if (!names.empty()) out += " while a " + text::to_lower_ascii(names.front()) + " closes in";
    }
    if (const std::string* attacked = get(f, "Being Attacked"); attacked && *attacked == "true") {
        out += ", fighting for survival";
    }
    out += ".";
    return out;
}

struct Mood {
    const char* name;
    std::array<const char*, 14> cues;
    std::array<std::array<const char*, 2>, 3> adjectives;
    std::array<const char*, 3> instruments;
    std::array<const char*, 2> rhythms;
};

// Declaration order breaks score ties.
const std::array<Mood, 4> kMoods = {{
    {"tense",
     {"fighting", "hostile", "closes", "zombie", "skeleton", "creeper", "spider", "attack", "attacked", "wounded",
      "survival", "danger", "battle", "combat"},
     {{{"tense", "driving"}, {"urgent", "dramatic"}, {"dark", "pulsing"}}},
     {"low string", "pounding drum", "distorted synth"},
     {"fast", "relentless"}},
    {"mysterious",
     {"night", "midnight", "dark", "darkness", "moon", "evening", "dusk", "cave", "shadows", "stillness", "", "", "", ""},
     {{{"mysterious", "ambient"}, {"hushed", "eerie"}, {"dreamy", "distant"}}},
     {"music box", "airy pad", "celesta"},
     {"slow", "floating"}},
    {"melancholic",
     {"rain", "storm", "thunder", "snow", "cold", "biting", "falls", "drifts", "weary", "hungry", "", "", "", ""},
     {{{"melancholic", "reflective"}, {"somber", "tender"}, {"wistful", "muted"}}},
     {"cello", "felt piano", "soft string"},
     {"slow", "steady"}},
    {"gentle",
     {"morning", "midday", "sun", "light", "breeze", "forest", "meadow", "plains", "clear", "calm", "healthy", "", "", ""},
     {{{"gentle", "soothing"}, {"warm", "peaceful"}, {"light", "airy"}}},
     {"acoustic guitar", "soft piano", "flute"},
     {"stable", "relaxed"}},
}};

std::string compose_description(std::string_view prompt, std::uint64_t h) {
    std::array<int, kMoods.size()> score{};
    for (std::string_view raw : text::split_whitespace(prompt)) {
        std::string word = text::to_lower_ascii(raw);
        while (!word.empty() && std::ispunct(static_cast<unsigned char>(word.back()))) word.pop_back();
        while (!word.empty() && std::ispunct(static_cast<unsigned char>(word.front()))) word.erase(0, 1);
        if (word.empty()) continue;
        for (std::size_t m = 0; m < kMoods.size(); ++m) {
            for (const char* cue : kMoods[m].cues) {
                if (*cue && word == cue) ++score[m];
            }
        }
    }
    std::size_t best = kMoods.size() - 1;  // gentle when nothing matches
    int best_score = 0;
    for (std::size_t m = 0; m < kMoods.size(); ++m) {
        if (score[m] > best_score) {
            best = m;
            best_score = score[m];
        }
    }
    const Mood& mood = kMoods[best];
    const auto& adj = mood.adjectives[h % mood.adjectives.size()];
    const std::string instrument = mood.instruments[(h >> 4) % mood.instruments.size()];
    const std::string rhythm = mood.rhythms[(h >> 8) % mood.rhythms.size()];
    if ((h >> 12) % 2 == 0) {
        return std::string("The music is ") + adj[0] + " and " + adj[1] + ", with a " + instrument + " melody and " +
               rhythm + " rhythm.";
    }
    std::string first = adj[0];
    first[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(first[0])));
    return first + " " + instrument + " theme over a " + rhythm + " pulse, " + adj[1] + " and evocative.";
}

std::string compose_match(std::string_view prompt, std::uint64_t h) {
    // Candidate scenes are listed one per line as "[k] Scene: ...".
    std::vector<std::string_view> candidates;
    std::size_t pos = 0;
    while (pos < prompt.size()) {
        std::string_view line = line_at(prompt, pos);
        pos += line.size() + 1;
        std::string_view t = text::trim(line);
        if (t.size() > 2 && t.front() == '[') {
            const auto close = t.find("] ");
            if (close != std::string_view::npos) candidates.push_back(t.substr(close + 2));
        }
    }
    if (candidates.empty()) return std::string(MockBackend::kNoMatch);
    const auto chosen = candidates[h % candidates.size()];
    return compose_narrative(parse_info_line(chosen), h >> 16);
}

}  // namespace

std::string_view to_string(GenerationTask task) {
    switch (task) {
        case GenerationTask::Narrative: return "narrative";
        case GenerationTask::MusicDescription: return "music";
        case GenerationTask::SceneMatch: return "scene_match";
        case GenerationTask::Freeform: return "freeform";
    }
    return "freeform";
}

void GenerationRequest::validate() const {
    if (params.max_tokens < 1) throw Error(ErrorCode::ConfigInvalid, "max_tokens must be >= 1", "max_tokens");
    if (!(params.temperature >= 0.0) || !std::isfinite(params.temperature)) {
        throw Error(ErrorCode::ConfigInvalid, "temperature must be a finite value >= 0", "temperature");
    }
}

MockBackend::MockBackend(std::string model, std::uint64_t default_seed)
    : model_(std::move(model)), default_seed_(default_seed) {}

GenerationResult MockBackend::complete(const GenerationRequest& request) {
    request.validate();
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seed = request.params.seed.value_or(default_seed_);

    std::uint64_t h = fnv1a(model_);
    h = fnv1a("\x1f", h);
    h = fnv1a(to_string(request.task), h);
    h = fnv1a("\x1f", h);
    h = fnv1a(request.prompt, h);
    h = fnv1a("\x1f" + std::to_string(seed), h);

    GenerationResult result;
    switch (request.task) {
        case GenerationTask::Narrative: {
            const auto at = request.prompt.find("Scene: ");
            InfoFields fields;
            if (at != std::string::npos) fields = parse_info_line(line_at(request.prompt, at));
            result.text = compose_narrative(fields, h);
            break;
        }
        case GenerationTask::MusicDescription:
            result.text = compose_description(request.prompt, h);
            break;
        case GenerationTask::SceneMatch:
            result.text = compose_match(request.prompt, h);
            break;
        case GenerationTask::Freeform: {
            auto words = text::split_whitespace(request.prompt);
            if (words.size() > 12) words.resize(12);
            std::string echo;
            for (auto w : words) echo += (echo.empty() ? "" : " ") + std::string(w);
            result.text = "Mock response to: " + echo;
            break;
        }
    }
    result.length = text::word_count(result.text);
    result.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace bgm
