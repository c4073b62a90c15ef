#pragma once
// Test doubles layered over TextBackend.

#include <algorithm>
#include <atomic>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "bgm/backend.hpp"
#include "bgm/error.hpp"

namespace bgm::testing {

// Wraps a backend and fails every call made while processing chosen segments.
// A segment starts at each narrative request whose prompt differs from the
// previous one, so retries of the same prompt stay within the segment.
class FaultInjectingBackend final : public TextBackend {
public:
    FaultInjectingBackend(TextBackend& inner, std::vector<std::size_t> failing_segments, int http_status = 503)
        : inner_(inner), failing_(std::move(failing_segments)), status_(http_status) {}

    GenerationResult complete(const GenerationRequest& request) override {
        std::lock_guard lock(mutex_);
        if (request.task == GenerationTask::Narrative && request.prompt != last_narrative_prompt_) {
            last_narrative_prompt_ = request.prompt;
            segment_ = segment_ ? *segment_ + 1 : 0;
        }
        ++calls_;
        if (segment_ && std::find(failing_.begin(), failing_.end(), *segment_) != failing_.end()) {
            ++failures_;
            throw Error(ErrorCode::BackendUnavailable, "injected fault", "fault", status_);
        }
        return inner_.complete(request);
    }

    std::string model_id() const override { return inner_.model_id(); }
    std::size_t calls() const { return calls_; }
    std::size_t failures() const { return failures_; }

private:
    TextBackend& inner_;
    std::vector<std::size_t> failing_;
    int status_;
    std::mutex mutex_;
    std::string last_narrative_prompt_;
    std::optional<std::size_t> segment_;
    std::size_t calls_ = 0;
    std::size_t failures_ = 0;
};

// Replies from a function of the request; records every request.
class ScriptedBackend final : public TextBackend {
public:
    using Script = std::function<std::string(const GenerationRequest&, std::size_t call)>;

    explicit ScriptedBackend(Script script) : script_(std::move(script)) {}

    GenerationResult complete(const GenerationRequest& request) override {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        GenerationResult r;
        r.text = script_(request, requests_.size() - 1);
        r.length = r.text.size();
        return r;
    }

    std::string model_id() const override { return "scripted"; }
    std::vector<GenerationRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

private:
    Script script_;
    mutable std::mutex mutex_;
    std::vector<GenerationRequest> requests_;
};

}  // namespace bgm::testing
