#include <cstdlib>

#include <httplib.h>

#include "bgm/backend.hpp"
#include "bgm/error.hpp"
#include "bgm/text_util.hpp"

namespace bgm {

RemoteBackendConfig RemoteBackendConfig::from_json(const nlohmann::json& doc) {
    RemoteBackendConfig c;
    try {
        c.base_url = doc.at("base_url").get<std::string>();
        c.model = doc.at("model").get<std::string>();
        c.api_key_env = doc.value("api_key_env", c.api_key_env);
        if (doc.contains("timeout_seconds")) {
            c.timeout = std::chrono::milliseconds(static_cast<long>(doc["timeout_seconds"].get<double>() * 1000.0));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, std::string("remote backend: ") + e.what(), "backend");
    }
    return c;
}

RemoteBackend::RemoteBackend(RemoteBackendConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::ConfigInvalid, "base_url must start with http:// or https://", "base_url");
    }
    const auto path_start = config_.base_url.find('/', scheme_end + 3);
    scheme_host_port_ = config_.base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    if (config_.model.empty()) throw Error(ErrorCode::ConfigInvalid, "model must not be empty", "model");
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
}

GenerationResult RemoteBackend::complete(const GenerationRequest& request) {
    request.validate();
    const auto start = std::chrono::steady_clock::now();

    nlohmann::json messages = nlohmann::json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    messages.push_back({{"role", "user"}, {"content", request.prompt}});
    nlohmann::json body = {
        {"model", request.params.model.empty() ? config_.model : request.params.model},
        {"messages", messages},
        {"temperature", request.params.temperature},
        {"max_tokens", request.params.max_tokens},
    };
    if (request.params.seed) body["seed"] = *request.params.seed;

    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const std::string path = path_prefix_ + "/chat/completions";
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw Error(ErrorCode::BackendUnavailable,
                    scheme_host_port_ + path + ": " + httplib::to_string(res.error()), scheme_host_port_);
    }
    if (res->status < 200 || res->status >= 300) {
        std::string snippet = res->body.substr(0, 200);
        throw Error(ErrorCode::BackendUnavailable,
                    scheme_host_port_ + path + " returned HTTP " + std::to_string(res->status) + ": " + snippet,
                    scheme_host_port_, res->status);
    }

    GenerationResult result;
    try {
        const auto reply = nlohmann::json::parse(res->body);
        result.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        if (reply.contains("usage") && reply["usage"].contains("completion_tokens")) {
            result.length = reply["usage"]["completion_tokens"].get<std::size_t>();
            result.length_from_backend = true;
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ResponseMalformed, std::string("chat completion reply: ") + e.what(), scheme_host_port_,
                    res->status);
    }
    if (!result.length_from_backend) result.length = text::word_count(result.text);
    result.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

bool is_transient(const Error& error) {
    if (error.code() != ErrorCode::BackendUnavailable) return false;
    const int status = error.http_status();
    return status == 0 || status == 429 || status >= 500;
}

}  // namespace bgm
