#include "bgm/error.hpp"

namespace bgm {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedJson: return "MalformedJson";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::BindFailure: return "BindFailure";
        case ErrorCode::TimedOut: return "TimedOut";
        case ErrorCode::CollectorStopped: return "CollectorStopped";
        case ErrorCode::ConsumerBusy: return "ConsumerBusy";
        case ErrorCode::NoDataEver: return "NoDataEver";
        case ErrorCode::ScenarioInvalid: return "ScenarioInvalid";
        case ErrorCode::ConnectionRefused: return "ConnectionRefused";
        case ErrorCode::TemplateInvalid: return "TemplateInvalid";
        case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::ResponseMalformed: return "ResponseMalformed";
        case ErrorCode::EmptyGeneration: return "EmptyGeneration";
        case ErrorCode::FatalConfig: return "FatalConfig";
        case ErrorCode::SinkUnavailable: return "SinkUnavailable";
        case ErrorCode::EmptyHypothesis: return "EmptyHypothesis";
        case ErrorCode::NoPairs: return "NoPairs";
        case ErrorCode::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

}  // namespace bgm
