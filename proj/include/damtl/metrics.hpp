#pragma once

#include "damtl/common.hpp"
#include "damtl/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace damtl
{
    // U = 1/2 |W - W*|_F^2
    inline double regularity(const Matrix &w, const Matrix &w_star)
    {
        require_dims(w.rows() == w_star.rows() && w.cols() == w_star.cols(), "regularity");
        return 0.5 * (w - w_star).squaredNorm();
    }

    // V = 1/(2q) sum_j |Theta_j - Theta*|_F^2
    inline double consistency(const std::vector<Matrix> &thetas, const std::optional<Matrix> &theta_star)
    {
        if (!theta_star)
        {
            throw Error(ErrorCode::NoGroundTruth, "consistency needs the true precision matrix");
        }
        if (thetas.empty())
        {
            throw Error(ErrorCode::InvalidArgument, "consistency needs at least one estimate");
        }
        double acc = 0.0;
        for (const auto &t : thetas)
        {
            require_dims(t.rows() == theta_star->rows() && t.cols() == theta_star->cols(), "consistency");
            acc += (t - *theta_star).squaredNorm();
        }
        return acc / (2.0 * static_cast<double>(thetas.size()));
    }

    // Est = 1/q sum_l |W^(l) - W*|_F
    inline double estimation_error(const std::vector<Matrix> &w_groups, const std::optional<Matrix> &w_star)
    {
        if (!w_star)
        {
            throw Error(ErrorCode::NoGroundTruth, "estimation error needs the true coefficients");
        }
        if (w_groups.empty())
        {
            throw Error(ErrorCode::InvalidArgument, "estimation error needs at least one group");
        }
        double acc = 0.0;
        for (const auto &w : w_groups)
        {
            require_dims(w.rows() == w_star->rows() && w.cols() == w_star->cols(), "estimation_error");
            acc += (w - *w_star).norm();
        }
        return acc / static_cast<double>(w_groups.size());
    }

    // |y - X w|
    inline double prediction_error(const Matrix &x, const Vector &y, const Vector &w)
    {
        require_dims(x.cols() == w.size() && x.rows() == y.size(), "prediction_error");
        return (y - x * w).norm();
    }

    struct MetricRecord
    {
        double time = 0.0;
        std::string metric;
        double value = 0.0;
    };

    /// Append-only (time, metric, value) log. Times are nondecreasing per metric id.
    class MetricsLog
    {
    public:
        void record(double time, std::string_view metric, double value)
        {
            auto [it, inserted] = last_time_.try_emplace(std::string(metric), time);
            if (!inserted)
            {
                if (time < it->second)
                {
                    throw Error(ErrorCode::InvalidArgument, "metric '" + std::string(metric) + "' went back in time");
                }
                it->second = time;
            }
            records_.push_back({time, std::string(metric), value});
        }

        [[nodiscard]] const std::vector<MetricRecord> &records() const noexcept { return records_; }

        [[nodiscard]] std::vector<std::pair<double, double>> series(std::string_view metric) const
        {
            std::vector<std::pair<double, double>> out;
            for (const auto &r : records_)
            {
                if (r.metric == metric)
                {
                    out.emplace_back(r.time, r.value);
                }
            }
            return out;
        }

        [[nodiscard]] std::optional<double> last(std::string_view metric) const
        {
            for (auto it = records_.rbegin(); it != records_.rend(); ++it)
            {
                if (it->metric == metric)
                {
                    return it->value;
                }
            }
            return std::nullopt;
        }

        [[nodiscard]] std::vector<std::string> metric_ids() const
        {
            std::vector<std::string> ids;
            for (const auto &r : records_)
            {
                if (std::find(ids.begin(), ids.end(), r.metric) == ids.end())
                {
                    ids.push_back(r.metric);
                }
            }
            return ids;
        }

        std::uint64_t seed = 0;
        std::uint64_t config_hash = 0;

        void write_csv(std::ostream &os) const
        {
            os << "time,metric,value\n";
            for (const auto &r : records_)
            {
                os << io::format_double(r.time) << ',' << r.metric << ',' << io::format_double(r.value) << '\n';
            }
        }

        static MetricsLog read_csv(std::istream &is)
        {
            const auto table = io::read_csv(is);
            if (table.header != std::vector<std::string>{"time", "metric", "value"})
            {
                throw Error(ErrorCode::IoError, "metrics file header must be 'time,metric,value'");
            }
            MetricsLog log;
            for (const auto &row : table.rows)
            {
                log.record(io::parse_double(row[0], "metric time"), row[1], io::parse_double(row[2], "metric value"));
            }
            return log;
        }

    private:
        std::vector<MetricRecord> records_;
        std::map<std::string, double, std::less<>> last_time_;
    };
} // namespace damtl
