#include "convexdp/error.hpp"

namespace cdp {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Parse: return "Parse";
        case ErrorCode::OrphanNode: return "OrphanNode";
        case ErrorCode::ProbabilityMass: return "ProbabilityMass";
        case ErrorCode::StageGap: return "StageGap";
        case ErrorCode::StageOrder: return "StageOrder";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::BackendClash: return "BackendClash";
        case ErrorCode::NotPerp: return "NotPerp";
        case ErrorCode::NotMarkov: return "NotMarkov";
        case ErrorCode::TreeTooLarge: return "TreeTooLarge";
        case ErrorCode::UnboundedBelow: return "UnboundedBelow";
        case ErrorCode::NonLinearRecession: return "NonLinearRecession";
        case ErrorCode::RowBlowup: return "RowBlowup";
        case ErrorCode::Unbounded: return "Unbounded";
        case ErrorCode::Infeasible: return "Infeasible";
        case ErrorCode::IterationLimit: return "IterationLimit";
        case ErrorCode::SingularRiccati: return "SingularRiccati";
        case ErrorCode::NotConditionallyIndependent: return "NotConditionallyIndependent";
        case ErrorCode::ArbitrageRefusal: return "ArbitrageRefusal";
        case ErrorCode::UnboundedExp: return "UnboundedExp";
        case ErrorCode::NonMonotone: return "NonMonotone";
    }
    return "Unknown";
}

bool is_validation_error(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Parse:
        case ErrorCode::OrphanNode:
        case ErrorCode::ProbabilityMass:
        case ErrorCode::StageGap:
        case ErrorCode::StageOrder:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::BackendClash:
        case ErrorCode::NotPerp:
        case ErrorCode::NotMarkov:
        case ErrorCode::TreeTooLarge:
        case ErrorCode::NonMonotone:
            return true;
        default:
            return false;
    }
}

namespace {

std::string compose(ErrorCode code, const std::string& message, const std::optional<std::string>& node) {
    std::string out(to_string(code));
    if (node) out += " at node '" + *node + "'";
    if (!message.empty()) out += ": " + message;
    return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::optional<std::string> node)
    : std::runtime_error(compose(code, message, node)),
      code_(code),
      node_(std::move(node)),
      base_message_(message) {}

Error Error::at_node(const std::string& node) const {
    if (node_) return *this;
    return Error(code_, base_message_, node);
}

}  // namespace cdp
