#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace damtl
{
    using Vector = Eigen::VectorXd;
    using Matrix = Eigen::MatrixXd;

    using NodeId = int;
    using GroupId = int;

    enum class ErrorCode : std::uint8_t
    {
        InvalidArgument,
        DimensionMismatch,
        DisconnectedGroup,
        MessengerConflict,
        InvalidTopology,
        SingularOmega,
        NotSPD,
        SingularTheta,
        NonpositiveTrace,
        NonpositiveConstant,
        MissingColumn,
        InsufficientRows,
        ZeroVariance,
        NoGroundTruth,
        ConfigError,
        IoError,
        RunError,
    };

    inline constexpr std::string_view to_string(ErrorCode code) noexcept
    {
        switch (code)
        {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::DisconnectedGroup: return "DisconnectedGroup";
        case ErrorCode::MessengerConflict: return "MessengerConflict";
        case ErrorCode::InvalidTopology: return "InvalidTopology";
        case ErrorCode::SingularOmega: return "SingularOmega";
        case ErrorCode::NotSPD: return "NotSPD";
        case ErrorCode::SingularTheta: return "SingularTheta";
        case ErrorCode::NonpositiveTrace: return "NonpositiveTrace";
        case ErrorCode::NonpositiveConstant: return "NonpositiveConstant";
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::InsufficientRows: return "InsufficientRows";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::NoGroundTruth: return "NoGroundTruth";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::RunError: return "RunError";
        }
        return "Unknown";
    }

    class Error : public std::runtime_error
    {
    public:
        Error(ErrorCode code, const std::string &what)
            : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
        {
        }

        [[nodiscard]] ErrorCode code() const noexcept { return code_; }

    private:
        ErrorCode code_;
    };

    inline void require_dims(bool ok, const char *where)
    {
        if (!ok)
        {
            throw Error(ErrorCode::DimensionMismatch, where);
        }
    }

    // Smallest eigenvalue of a symmetric matrix (0x0 -> +inf is never useful, so callers check).
    inline double min_eigenvalue(const Matrix &sym)
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }
} // namespace damtl
