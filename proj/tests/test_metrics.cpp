#include "damtl/metrics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace damtl;

TEST(Metrics, RegularityIsHalfSquaredDistance)
{
    Matrix w(1, 2), ws(1, 2);
    w << 1, 2;
    ws << 0, 0;
    EXPECT_DOUBLE_EQ(regularity(w, ws), 2.5);
    EXPECT_EQ(regularity(ws, ws), 0.0);
}

TEST(Metrics, ConsistencyAveragesOverGroups)
{
    const Matrix star = Matrix::Identity(2, 2);
    const std::vector<Matrix> th{star, 2.0 * star};
    EXPECT_DOUBLE_EQ(consistency(th, star), (0.0 + 2.0) / 4.0);
    try
    {
        consistency(th, std::nullopt);
        FAIL();
    }
    catch (const Error &e)
    {
        EXPECT_EQ(e.code(), ErrorCode::NoGroundTruth);
    }
}

TEST(Metrics, EstimationErrorUsesFrobeniusNorm)
{
    const Matrix star = Matrix::Zero(2, 2);
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 3;
    a(1, 1) = 4;
    EXPECT_DOUBLE_EQ(estimation_error({a, star}, star), 2.5);
}

TEST(Metrics, PredictionErrorAtZeroIsResponseNorm)
{
    const Matrix x = Matrix::Ones(3, 2);
    Vector y(3);
    y << 1, 2, 2;
    EXPECT_DOUBLE_EQ(prediction_error(x, y, Vector::Zero(2)), 3.0);
}

TEST(Metrics, LogRejectsTimeTravelPerMetric)
{
    MetricsLog log;
    log.record(1.0, "U", 1.0);
    log.record(0.5, "V", 1.0);
    log.record(1.0, "U", 2.0);
    EXPECT_THROW(log.record(0.9, "U", 1.0), Error);
    EXPECT_EQ(log.series("U").size(), 2U);
    EXPECT_EQ(*log.last("U"), 2.0);
    EXPECT_FALSE(log.last("nothing").has_value());
    EXPECT_EQ(log.metric_ids(), (std::vector<std::string>{"U", "V"}));
}

TEST(Metrics, CsvRoundTripIsExact)
{
    MetricsLog log;
    log.record(0.0, "U", 1.0 / 3.0);
    log.record(0.5, "U", 1e-300);
    log.record(0.5, "Err_g1", 2.0107);
    std::stringstream ss;
    log.write_csv(ss);
    const auto back = MetricsLog::read_csv(ss);
    ASSERT_EQ(back.records().size(), 3U);
    for (std::size_t i = 0; i < 3; ++i)
    {
        EXPECT_EQ(back.records()[i].time, log.records()[i].time);
        EXPECT_EQ(back.records()[i].metric, log.records()[i].metric);
        EXPECT_EQ(back.records()[i].value, log.records()[i].value);
    }
}
