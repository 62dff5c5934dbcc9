#include "damtl/topology.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

using namespace damtl;

namespace
{
    std::vector<std::vector<int>> adjacency_lists(const Topology &t, bool with_messengers)
    {
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(t.node_count()));
        for (const auto &[i, j] : t.edges())
        {
            adj[static_cast<std::size_t>(i)].push_back(j);
            adj[static_cast<std::size_t>(j)].push_back(i);
        }
        if (with_messengers)
        {
            for (GroupId g = 0; g < t.group_count(); ++g)
            {
                for (GroupId h : t.messenger_neighbors(g))
                {
                    adj[static_cast<std::size_t>(t.messenger_of(g))].push_back(t.messenger_of(h));
                }
            }
        }
        return adj;
    }

    Topology path_pair()
    {
        ExplicitEdges e;
        e.edges = {{0, 1}};
        return build_topology({2}, e);
    }
} // namespace

TEST(Topology, PathOfTwoHasConnectivityTwo)
{
    const auto t = path_pair();
    EXPECT_NEAR(algebraic_connectivity(laplacian(t)), 2.0, 1e-12);
}

TEST(Topology, CompleteGraphConnectivityEqualsN)
{
    for (int n : {3, 5, 8})
    {
        ExplicitEdges e;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                e.edges.emplace_back(i, j);
        const auto t = build_topology({n}, e);
        EXPECT_NEAR(algebraic_connectivity(laplacian(t)), static_cast<double>(n), 1e-10);
    }
}

TEST(Topology, ConnectivityMatchesJacobiOracle)
{
    RandomGeometric rg;
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        rg.seed = seed;
        rg.link_probability = 0.6;
        const auto t = build_topology({4, 5, 3, 6}, rg);
        const Matrix lap = laplacian(t, true);
        const auto ev = oracle::jacobi_eigenvalues(oracle::to_dense(lap));
        EXPECT_NEAR(algebraic_connectivity(lap), std::max(ev[1], 0.0), 1e-9);
        EXPECT_NEAR(ev[0], 0.0, 1e-9);
    }
}

TEST(Topology, DisconnectedGroupIsRejected)
{
    ExplicitEdges e;
    e.edges = {{0, 1}};
    EXPECT_THROW(
        {
            try
            {
                build_topology({3}, e);
            }
            catch (const Error &err)
            {
                EXPECT_EQ(err.code(), ErrorCode::DisconnectedGroup);
                throw;
            }
        },
        Error);
}

TEST(Topology, TwoMessengersInOneGroupConflict)
{
    ExplicitEdges e;
    e.edges = {{0, 1}};
    e.messengers = {0, 1};
    try
    {
        build_topology({2}, e);
        FAIL() << "expected MessengerConflict";
    }
    catch (const Error &err)
    {
        EXPECT_EQ(err.code(), ErrorCode::MessengerConflict);
    }
}

TEST(Topology, CrossGroupEdgeBetweenNonMessengersIsRejected)
{
    ExplicitEdges e;
    e.edges = {{0, 1}, {2, 3}, {1, 3}};
    try
    {
        build_topology({2, 2}, e);
        FAIL() << "expected InvalidTopology";
    }
    catch (const Error &err)
    {
        EXPECT_EQ(err.code(), ErrorCode::InvalidTopology);
    }
}

TEST(Topology, SingleNodeGroupsAreConnectedTrivially)
{
    const auto t = build_topology({1, 1, 1}, ExplicitEdges{});
    EXPECT_EQ(t.group_count(), 3);
    for (NodeId i = 0; i < 3; ++i)
    {
        EXPECT_TRUE(t.is_messenger(i));
    }
    const auto c = algebraic_connectivity(t);
    EXPECT_GT(c.whole, 0.0);
    for (double v : c.per_group)
    {
        EXPECT_EQ(v, 0.0);
    }
}

// Property: random geometric builds always yield connected groups, one messenger each, and a
// connected messenger overlay; checked by BFS independently of the builder.
TEST(Topology, RandomGeometricInvariants)
{
    for (std::uint64_t seed = 1; seed <= 50; ++seed)
    {
        RandomGeometric rg;
        rg.seed = seed;
        rg.radius = 1.0 + static_cast<double>(seed % 4);
        rg.link_probability = 0.3 + 0.01 * static_cast<double>(seed);
        const std::vector<int> sizes{3, 7, 1, 5, 4};
        const auto t = build_topology(sizes, rg);
        const auto adj = adjacency_lists(t, false);
        int messengers = 0;
        for (NodeId i = 0; i < t.node_count(); ++i)
        {
            messengers += t.is_messenger(i) ? 1 : 0;
            EXPECT_EQ(t.adjacency()(i, i), 0.0);
            for (NodeId j : t.neighbors(i))
            {
                EXPECT_EQ(t.group_of(i), t.group_of(j));
            }
        }
        EXPECT_EQ(messengers, t.group_count());
        for (GroupId g = 0; g < t.group_count(); ++g)
        {
            EXPECT_EQ(oracle::components(adj, t.members(g)), 1) << "seed " << seed << " group " << g;
        }
        std::vector<int> all(static_cast<std::size_t>(t.node_count()));
        std::iota(all.begin(), all.end(), 0);
        EXPECT_EQ(oracle::components(adjacency_lists(t, true), all), 1);
        EXPECT_TRUE(t.adjacency().isApprox(t.adjacency().transpose()));
    }
}

TEST(Topology, RandomGeometricIsDeterministic)
{
    RandomGeometric rg;
    rg.seed = 99;
    rg.link_probability = 0.5;
    const auto a = build_topology({5, 5, 5, 5}, rg);
    const auto b = build_topology({5, 5, 5, 5}, rg);
    EXPECT_EQ(a.edges(), b.edges());
    EXPECT_EQ(a.adjacency(), b.adjacency());
}

TEST(Topology, TextRoundTrip)
{
    RandomGeometric rg;
    rg.seed = 3;
    const auto t = build_topology({3, 4, 2}, rg);
    std::stringstream ss;
    write_topology(ss, t);
    const auto back = read_topology(ss);
    EXPECT_EQ(back.node_count(), t.node_count());
    EXPECT_EQ(back.edges(), t.edges());
    EXPECT_EQ(back.messenger_edges(), t.messenger_edges());
    for (GroupId g = 0; g < t.group_count(); ++g)
    {
        EXPECT_EQ(back.messenger_of(g), t.messenger_of(g));
    }
    for (NodeId i = 0; i < t.node_count(); ++i)
    {
        EXPECT_EQ(back.coordinates()[static_cast<std::size_t>(i)].x, t.coordinates()[static_cast<std::size_t>(i)].x);
    }
}

TEST(Topology, ReaderReportsBadLines)
{
    std::stringstream ss("2 1\ngroup 1 1\ngroup 2 1\nedge 1 3\n");
    EXPECT_THROW(read_topology(ss), Error);
}
