#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cdp {

enum class ErrorCode {
    Parse,
    OrphanNode,
    ProbabilityMass,
    StageGap,
    StageOrder,
    DimensionMismatch,
    BackendClash,
    NotPerp,
    NotMarkov,
    TreeTooLarge,
    UnboundedBelow,
    NonLinearRecession,
    RowBlowup,
    Unbounded,
    Infeasible,
    IterationLimit,
    SingularRiccati,
    NotConditionallyIndependent,
    ArbitrageRefusal,
    UnboundedExp,
    NonMonotone,
};

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

/// True for errors caused by malformed or inconsistent input rather than
/// by the optimization itself.
[[nodiscard]] bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<std::string> node = std::nullopt);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    [[nodiscard]] const std::optional<std::string>& node() const noexcept { return node_; }

    /// Same error with the node id filled in if it was missing.
    [[nodiscard]] Error at_node(const std::string& node) const;

private:
    ErrorCode code_;
    std::optional<std::string> node_;
    std::string base_message_;
};

}  // namespace cdp
