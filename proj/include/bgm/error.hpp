#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bgm {

enum class ErrorCode {
    MalformedJson,
    SchemaViolation,
    ConfigInvalid,
    BindFailure,
    TimedOut,
    CollectorStopped,
    ConsumerBusy,
    NoDataEver,
    ScenarioInvalid,
    ConnectionRefused,
    TemplateInvalid,
    MissingPlaceholder,
    BackendUnavailable,
    ResponseMalformed,
    EmptyGeneration,
    FatalConfig,
    SinkUnavailable,
    EmptyHypothesis,
    NoPairs,
    IoFailure,
};

std::string_view to_string(ErrorCode code);

// Every failure the library reports is an Error carrying a code. `subject`
// names the offending field/placeholder/path when there is one;
// `http_status` is set for errors caused by an HTTP response.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string subject = {}, int http_status = 0)
        : std::runtime_error(std::string(to_string(code)) + ": " + message),
          code_(code),
          subject_(std::move(subject)),
          http_status_(http_status) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }
    int http_status() const noexcept { return http_status_; }

private:
    ErrorCode code_;
    std::string subject_;
    int http_status_;
};

}  // namespace bgm
