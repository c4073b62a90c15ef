#include <fstream>
#include <ostream>

#include <httplib.h>

#include "bgm/error.hpp"
#include "bgm/scheduler.hpp"

namespace bgm {

namespace {

std::string_view kind_name(SinkKind kind) {
    switch (kind) {
        case SinkKind::JsonlFile: return "jsonl";
        case SinkKind::HttpPost: return "http";
        case SinkKind::Stdout: return "stdout";
    }
    return "stdout";
}

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

std::optional<UrlParts> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return std::nullopt;
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") return std::nullopt;
    const auto path_start = url.find('/', scheme_end + 3);
    UrlParts parts{url.substr(0, path_start), path_start == std::string::npos ? "/" : url.substr(path_start)};
    if (parts.origin.size() <= scheme_end + 3) return std::nullopt;
    return parts;
}

class JsonlFileSink final : public Sink {
public:
    explicit JsonlFileSink(SinkSpec spec) : spec_(std::move(spec)) {
        out_.open(spec_.target, spec_.truncate ? std::ios::trunc : std::ios::app);
        if (!out_) throw Error(ErrorCode::SinkUnavailable, "cannot open " + spec_.target + " for writing", spec_.target);
    }

    void emit(const SegmentRecord& record) override {
        out_ << canonical_json(record, spec_.timings) << '\n';
        out_.flush();
        if (!out_) throw Error(ErrorCode::SinkUnavailable, "write to " + spec_.target + " failed", spec_.target);
    }

    const SinkSpec& spec() const override { return spec_; }

private:
    SinkSpec spec_;
    std::ofstream out_;
};

class HttpPostSink final : public Sink {
public:
    explicit HttpPostSink(SinkSpec spec) : spec_(std::move(spec)) {
        url_ = *split_url(spec_.target);
    }

    void emit(const SegmentRecord& record) override {
        httplib::Client client(url_.origin);
        client.set_connection_timeout(2, 0);
        client.set_read_timeout(5, 0);
        auto res = client.Post(url_.path, canonical_json(record, spec_.timings), "application/json");
        if (!res) {
            throw Error(ErrorCode::SinkUnavailable, spec_.target + ": " + httplib::to_string(res.error()), spec_.target);
        }
        if (res->status < 200 || res->status >= 300) {
            throw Error(ErrorCode::SinkUnavailable, spec_.target + " returned HTTP " + std::to_string(res->status),
                        spec_.target, res->status);
        }
    }

    const SinkSpec& spec() const override { return spec_; }

private:
    SinkSpec spec_;
    UrlParts url_;
};

class StdoutSink final : public Sink {
public:
    StdoutSink(SinkSpec spec, std::ostream& out) : spec_(std::move(spec)), out_(out) {}

    void emit(const SegmentRecord& record) override {
        out_ << record.description.text << '\n';
        out_.flush();
        if (!out_) throw Error(ErrorCode::SinkUnavailable, "standard output is not writable", "stdout");
    }

    const SinkSpec& spec() const override { return spec_; }

private:
    SinkSpec spec_;
    std::ostream& out_;
};

}  // namespace

SinkSpec SinkSpec::from_json(const nlohmann::json& doc) {
    SinkSpec spec;
    try {
        const std::string kind = doc.at("kind").get<std::string>();
        if (kind == "jsonl") {
            spec.kind = SinkKind::JsonlFile;
        } else if (kind == "http") {
            spec.kind = SinkKind::HttpPost;
        } else if (kind == "stdout") {
            spec.kind = SinkKind::Stdout;
        } else {
            throw Error(ErrorCode::FatalConfig, "unknown sink kind '" + kind + "'", "kind");
        }
        spec.target = doc.value("target", std::string());
        spec.timings = doc.value("timings", true);
        spec.truncate = doc.value("truncate", false);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FatalConfig, std::string("sink spec: ") + e.what(), "sinks");
    }
    spec.validate();
    return spec;
}

nlohmann::json SinkSpec::to_json() const {
    nlohmann::json out = {{"kind", std::string(kind_name(kind))}, {"timings", timings}};
    if (kind != SinkKind::Stdout) out["target"] = target;
    if (kind == SinkKind::JsonlFile) out["truncate"] = truncate;
    return out;
}

void SinkSpec::validate() const {
    switch (kind) {
        case SinkKind::JsonlFile:
            if (target.empty()) throw Error(ErrorCode::FatalConfig, "jsonl sink needs a file path", "target");
            break;
        case SinkKind::HttpPost:
            if (!split_url(target)) {
                throw Error(ErrorCode::FatalConfig, "http sink needs an http:// or https:// URL, got '" + target + "'",
                            "target");
            }
            break;
        case SinkKind::Stdout:
            break;
    }
}

std::unique_ptr<Sink> open_sink(const SinkSpec& spec, std::ostream& out) {
    spec.validate();
    switch (spec.kind) {
        case SinkKind::JsonlFile: return std::make_unique<JsonlFileSink>(spec);
        case SinkKind::HttpPost: return std::make_unique<HttpPostSink>(spec);
        case SinkKind::Stdout: return std::make_unique<StdoutSink>(spec, out);
    }
    throw Error(ErrorCode::FatalConfig, "unknown sink kind");
}

}  // namespace bgm
