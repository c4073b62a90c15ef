#include "bgm/prompt.hpp"

#include <algorithm>
#include <fstream>

#include "bgm/error.hpp"

namespace bgm {
namespace {

bool ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

struct Piece {
    bool is_placeholder;
    std::string_view text;
};

std::vector<Piece> scan(std::string_view body, std::string_view id) {
    std::vector<Piece> pieces;
    std::size_t literal_start = 0;
    std::size_t i = 0;
    auto fail = [&](const std::string& what) {
        throw Error(ErrorCode::TemplateInvalid, "template '" + std::string(id) + "': " + what, std::string(id));
    };
    while (i < body.size()) {
        if (body[i] == '}') fail("unmatched '}' at offset " + std::to_string(i));
        if (body[i] != '{') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        if (j >= body.size() || !ident_start(body[j])) fail("'{' not followed by a placeholder name at offset " + std::to_string(i));
        while (j < body.size() && ident_char(body[j])) ++j;
        if (j >= body.size() || body[j] != '}') fail("unterminated placeholder at offset " + std::to_string(i));
        if (i > literal_start) pieces.push_back({false, body.substr(literal_start, i - literal_start)});
        pieces.push_back({true, body.substr(i + 1, j - i - 1)});
        i = j + 1;
        literal_start = i;
    }
    if (literal_start < body.size()) pieces.push_back({false, body.substr(literal_start)});
    return pieces;
}

}  // namespace

std::vector<std::string> PromptTemplate::referenced() const {
    std::vector<std::string> out;
    for (const auto& p : scan(body, id)) {
        if (p.is_placeholder && std::find(out.begin(), out.end(), p.text) == out.end()) out.emplace_back(p.text);
    }
    return out;
}

void PromptTemplate::validate() const {
    if (id.empty()) throw Error(ErrorCode::TemplateInvalid, "template id must not be empty", "id");
    for (const auto& name : referenced()) {
        if (std::find(placeholders.begin(), placeholders.end(), name) == placeholders.end()) {
            throw Error(ErrorCode::TemplateInvalid,
                        "template '" + id + "' references undeclared placeholder {" + name + "}", name);
        }
    }
    if (max_output_words && *max_output_words < 1) {
        throw Error(ErrorCode::TemplateInvalid, "template '" + id + "': max_output_words must be >= 1", id);
    }
}

PromptTemplate template_from_json(const nlohmann::json& doc) {
    PromptTemplate t;
    try {
        t.id = doc.at("id").get<std::string>();
        t.role_preamble = doc.value("role_preamble", "");
        t.body = doc.at("body").get<std::string>();
        t.placeholders = doc.value("placeholders", std::vector<std::string>{});
        if (doc.contains("max_output_words") && !doc["max_output_words"].is_null()) {
            t.max_output_words = doc["max_output_words"].get<int>();
        }
        t.instruction = doc.value("instruction", "");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::TemplateInvalid, e.what());
    }
    t.validate();
    return t;
}

nlohmann::json template_to_json(const PromptTemplate& t) {
    nlohmann::json out = {
        {"id", t.id},
        {"role_preamble", t.role_preamble},
        {"body", t.body},
        {"placeholders", t.placeholders},
        {"max_output_words", t.max_output_words ? nlohmann::json(*t.max_output_words) : nlohmann::json()},
    };
    if (!t.instruction.empty()) out["instruction"] = t.instruction;
    return out;
}

PromptTemplate load_template(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open template " + path.string(), path.string());
    try {
        return template_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::TemplateInvalid, path.string() + ": " + e.what(), path.string());
    }
}

std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
    std::string out;
    out.reserve(tmpl.body.size() + 256);
    for (const auto& p : scan(tmpl.body, tmpl.id)) {
        if (!p.is_placeholder) {
            out.append(p.text);
            continue;
        }
        auto it = bindings.find(p.text);
        if (it == bindings.end()) {
            throw Error(ErrorCode::MissingPlaceholder, "no binding for {" + std::string(p.text) + "}",
                        std::string(p.text));
        }
        out.append(it->second);
    }
    return out;
}

}  // namespace bgm
