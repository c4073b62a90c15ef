#pragma once
// Prompt templates are data files:
//   {"id": "...", "role_preamble": "...", "body": "... {info_str} ...",
//    "placeholders": ["info_str"], "max_output_words": 20, "instruction": "..."}
// Placeholders are {identifier}; any other brace in the body is rejected.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace bgm {

using Bindings = std::map<std::string, std::string, std::less<>>;

struct PromptTemplate {
    std::string id;
    std::string role_preamble;
    std::string body;
    std::vector<std::string> placeholders;  // declared names
    std::optional<int> max_output_words;
    // Task instruction used when exporting fine-tuning pairs; falls back to role_preamble.
    std::string instruction;

    // Placeholder names in order of first appearance. Throws Error{TemplateInvalid}.
    std::vector<std::string> referenced() const;
    // Every referenced placeholder declared, braces well formed, word cap positive.
    void validate() const;
    const std::string& fine_tuning_instruction() const { return instruction.empty() ? role_preamble : instruction; }
};

PromptTemplate template_from_json(const nlohmann::json& document);
nlohmann::json template_to_json(const PromptTemplate& tmpl);
PromptTemplate load_template(const std::filesystem::path& path);

// Exact substitution of every {name} in the body; extra bindings are ignored.
// Throws Error{MissingPlaceholder} whose subject() is the unbound name.
std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

}  // namespace bgm
