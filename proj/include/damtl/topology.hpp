#pragma once

// Group-partitioned network: within-group links for consensus, one messenger per group,
// and a messenger overlay for cross-group exchange.

#include "damtl/common.hpp"
#include "damtl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace damtl
{
    struct Point
    {
        double x = 0.0;
        double y = 0.0;
    };

    inline double distance(const Point &a, const Point &b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

    // Nodes are numbered contiguously by group: group 0 owns ids [0, n_0), group 1 the next n_1, ...
    class Topology
    {
    public:
        [[nodiscard]] int node_count() const noexcept { return static_cast<int>(group_of_.size()); }
        [[nodiscard]] int group_count() const noexcept { return static_cast<int>(members_.size()); }

        [[nodiscard]] GroupId group_of(NodeId i) const { return group_of_.at(static_cast<std::size_t>(i)); }
        [[nodiscard]] NodeId messenger_of(GroupId g) const { return messenger_of_.at(static_cast<std::size_t>(g)); }
        [[nodiscard]] bool is_messenger(NodeId i) const { return messenger_of(group_of(i)) == i; }

        [[nodiscard]] const std::vector<NodeId> &members(GroupId g) const { return members_.at(static_cast<std::size_t>(g)); }
        [[nodiscard]] const std::vector<NodeId> &neighbors(NodeId i) const { return neighbors_.at(static_cast<std::size_t>(i)); }
        [[nodiscard]] const std::vector<GroupId> &messenger_neighbors(GroupId g) const
        {
            return messenger_neighbors_.at(static_cast<std::size_t>(g));
        }

        // a_{ij}: symmetric, zero diagonal, within-group links only.
        [[nodiscard]] const Matrix &adjacency() const noexcept { return adjacency_; }
        // q x q, indexed by group id; 1 where the two groups' messengers are linked.
        [[nodiscard]] const Matrix &messenger_edges() const noexcept { return messenger_edges_; }

        [[nodiscard]] const std::vector<GroupId> &group_assignment() const noexcept { return group_of_; }
        [[nodiscard]] const std::vector<Point> &coordinates() const noexcept { return coordinates_; }
        [[nodiscard]] bool has_coordinates() const noexcept { return !coordinates_.empty(); }

        // Undirected within-group edges as (i, j) with i < j, sorted.
        [[nodiscard]] std::vector<std::pair<NodeId, NodeId>> edges() const
        {
            std::vector<std::pair<NodeId, NodeId>> out;
            for (NodeId i = 0; i < node_count(); ++i)
            {
                for (NodeId j : neighbors(i))
                {
                    if (i < j)
                    {
                        out.emplace_back(i, j);
                    }
                }
            }
            return out;
        }

    private:
        friend class TopologyBuilder;

        std::vector<GroupId> group_of_;
        std::vector<std::vector<NodeId>> members_;
        std::vector<NodeId> messenger_of_;
        std::vector<std::vector<NodeId>> neighbors_;
        std::vector<std::vector<GroupId>> messenger_neighbors_;
        Matrix adjacency_;
        Matrix messenger_edges_;
        std::vector<Point> coordinates_;
    };

    // Deterministic edge list. Edges joining two different groups are accepted only between the
    // groups' messengers and become messenger-overlay links.
    struct ExplicitEdges
    {
        std::vector<std::pair<NodeId, NodeId>> edges;
        // Claimed messengers; groups without a claim take their lowest node id.
        std::vector<NodeId> messengers;
        bool connect_all_messengers = true;
        std::vector<Point> coordinates;
    };

    // Nodes are placed uniformly inside their group's cell of a rectangular field (groups tile the
    // field row-major on a ceil(sqrt(q)) grid). Within-group pairs closer than `radius` link with
    // probability `link_probability`; every node is then linked to its messenger.
    struct RandomGeometric
    {
        double radius = 2.5;
        double link_probability = 1.0;
        double field_width = 10.0;
        double field_height = 10.0;
        std::uint64_t seed = 1;
        std::vector<NodeId> messengers;
    };

    using EdgeSpec = std::variant<ExplicitEdges, RandomGeometric>;

    class TopologyBuilder
    {
    public:
        static Topology build(const std::vector<int> &n_per_group, const EdgeSpec &spec)
        {
            if (n_per_group.empty())
            {
                throw Error(ErrorCode::InvalidArgument, "topology needs at least one group");
            }
            Topology t = skeleton(n_per_group);
            std::visit([&](const auto &s) { apply(t, s); }, spec);
            finalize(t);
            return t;
        }

    private:
        static Topology skeleton(const std::vector<int> &n_per_group)
        {
            Topology t;
            NodeId next = 0;
            t.members_.resize(n_per_group.size());
            for (std::size_t g = 0; g < n_per_group.size(); ++g)
            {
                if (n_per_group[g] <= 0)
                {
                    throw Error(ErrorCode::InvalidArgument, "group " + std::to_string(g) + " has no nodes");
                }
                for (int k = 0; k < n_per_group[g]; ++k)
                {
                    t.group_of_.push_back(static_cast<GroupId>(g));
                    t.members_[g].push_back(next++);
                }
            }
            const auto n = static_cast<Eigen::Index>(t.group_of_.size());
            const auto q = static_cast<Eigen::Index>(n_per_group.size());
            t.adjacency_ = Matrix::Zero(n, n);
            t.messenger_edges_ = Matrix::Zero(q, q);
            t.messenger_of_.assign(n_per_group.size(), -1);
            return t;
        }

        static void assign_messengers(Topology &t, const std::vector<NodeId> &claims)
        {
            for (NodeId m : claims)
            {
                if (m < 0 || m >= t.node_count())
                {
                    throw Error(ErrorCode::InvalidTopology, "messenger id " + std::to_string(m) + " out of range");
                }
                auto &slot = t.messenger_of_[static_cast<std::size_t>(t.group_of(m))];
                if (slot != -1 && slot != m)
                {
                    throw Error(ErrorCode::MessengerConflict, "group " + std::to_string(t.group_of(m)) +
                                                                  " claims messengers " + std::to_string(slot) +
                                                                  " and " + std::to_string(m));
                }
                slot = m;
            }
            for (GroupId g = 0; g < t.group_count(); ++g)
            {
                if (t.messenger_of_[static_cast<std::size_t>(g)] == -1)
                {
                    t.messenger_of_[static_cast<std::size_t>(g)] = t.members(g).front();
                }
            }
        }

        static void link(Topology &t, NodeId i, NodeId j)
        {
            if (i < 0 || j < 0 || i >= t.node_count() || j >= t.node_count())
            {
                throw Error(ErrorCode::InvalidTopology,
                            "edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
            }
            if (i == j)
            {
                throw Error(ErrorCode::InvalidTopology, "self loop at node " + std::to_string(i));
            }
            const GroupId gi = t.group_of(i);
            const GroupId gj = t.group_of(j);
            if (gi == gj)
            {
                t.adjacency_(i, j) = 1.0;
                t.adjacency_(j, i) = 1.0;
                return;
            }
            if (t.messenger_of(gi) != i || t.messenger_of(gj) != j)
            {
                throw Error(ErrorCode::InvalidTopology, "cross-group edge (" + std::to_string(i) + ", " +
                                                            std::to_string(j) + ") does not join two messengers");
            }
            t.messenger_edges_(gi, gj) = 1.0;
            t.messenger_edges_(gj, gi) = 1.0;
        }

        static void connect_all_messengers(Topology &t)
        {
            for (GroupId a = 0; a < t.group_count(); ++a)
            {
                for (GroupId b = a + 1; b < t.group_count(); ++b)
                {
                    t.messenger_edges_(a, b) = 1.0;
                    t.messenger_edges_(b, a) = 1.0;
                }
            }
        }

        static void apply(Topology &t, const ExplicitEdges &s)
        {
            assign_messengers(t, s.messengers);
            if (!s.coordinates.empty())
            {
                if (static_cast<int>(s.coordinates.size()) != t.node_count())
                {
                    throw Error(ErrorCode::InvalidTopology, "coordinate count does not match node count");
                }
                t.coordinates_ = s.coordinates;
            }
            for (const auto &[i, j] : s.edges)
            {
                link(t, i, j);
            }
            if (s.connect_all_messengers)
            {
                connect_all_messengers(t);
            }
        }

        static void apply(Topology &t, const RandomGeometric &s)
        {
            if (!(s.radius >= 0.0) || !(s.link_probability >= 0.0 && s.link_probability <= 1.0))
            {
                throw Error(ErrorCode::InvalidArgument, "random geometric radius/probability out of range");
            }
            assign_messengers(t, s.messengers);
            Rng rng(stream_seed(s.seed, StreamTag::Topology, 0));
            const int q = t.group_count();
            const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(q))));
            const int rows = (q + cols - 1) / cols;
            const double cw = s.field_width / cols;
            const double ch = s.field_height / rows;
            t.coordinates_.resize(static_cast<std::size_t>(t.node_count()));
            for (NodeId i = 0; i < t.node_count(); ++i)
            {
                const GroupId g = t.group_of(i);
                const double x0 = (g % cols) * cw;
                const double y0 = (g / cols) * ch;
                t.coordinates_[static_cast<std::size_t>(i)] = {x0 + cw * rng.uniform(), y0 + ch * rng.uniform()};
            }
            for (GroupId g = 0; g < q; ++g)
            {
                const auto &mem = t.members(g);
                for (std::size_t a = 0; a < mem.size(); ++a)
                {
                    for (std::size_t b = a + 1; b < mem.size(); ++b)
                    {
                        // Always draw so the stream does not depend on the geometry.
                        const double u = rng.uniform();
                        const auto &pa = t.coordinates_[static_cast<std::size_t>(mem[a])];
                        const auto &pb = t.coordinates_[static_cast<std::size_t>(mem[b])];
                        if (distance(pa, pb) <= s.radius && u < s.link_probability)
                        {
                            link(t, mem[a], mem[b]);
                        }
                    }
                }
                const NodeId m = t.messenger_of(g);
                for (NodeId i : mem)
                {
                    if (i != m)
                    {
                        link(t, i, m);
                    }
                }
            }
            connect_all_messengers(t);
        }

        static bool connected(const std::vector<std::vector<int>> &adj, const std::vector<int> &vertices)
        {
            if (vertices.size() <= 1)
            {
                return true;
            }
            std::vector<char> seen(adj.size(), 0);
            std::queue<int> frontier;
            frontier.push(vertices.front());
            seen[static_cast<std::size_t>(vertices.front())] = 1;
            std::size_t reached = 1;
            while (!frontier.empty())
            {
                const int v = frontier.front();
                frontier.pop();
                for (int u : adj[static_cast<std::size_t>(v)])
                {
                    if (!seen[static_cast<std::size_t>(u)])
                    {
                        seen[static_cast<std::size_t>(u)] = 1;
                        ++reached;
                        frontier.push(u);
                    }
                }
            }
            return reached == vertices.size();
        }

        static void finalize(Topology &t)
        {
            const int n = t.node_count();
            const int q = t.group_count();
            t.neighbors_.assign(static_cast<std::size_t>(n), {});
            for (NodeId i = 0; i < n; ++i)
            {
                for (NodeId j = 0; j < n; ++j)
                {
                    if (t.adjacency_(i, j) != 0.0)
                    {
                        t.neighbors_[static_cast<std::size_t>(i)].push_back(j);
                    }
                }
            }
            for (GroupId g = 0; g < q; ++g)
            {
                if (!connected(t.neighbors_, t.members(g)))
                {
                    throw Error(ErrorCode::DisconnectedGroup, "group " + std::to_string(g) + " is not connected");
                }
            }
            t.messenger_neighbors_.assign(static_cast<std::size_t>(q), {});
            for (GroupId a = 0; a < q; ++a)
            {
                for (GroupId b = 0; b < q; ++b)
                {
                    if (t.messenger_edges_(a, b) != 0.0)
                    {
                        t.messenger_neighbors_[static_cast<std::size_t>(a)].push_back(b);
                    }
                }
            }
            std::vector<int> all_groups(static_cast<std::size_t>(q));
            std::iota(all_groups.begin(), all_groups.end(), 0);
            if (!connected(t.messenger_neighbors_, all_groups))
            {
                throw Error(ErrorCode::InvalidTopology, "messenger overlay is not connected");
            }
        }
    };

    inline Topology build_topology(const std::vector<int> &n_per_group, const EdgeSpec &spec)
    {
        return TopologyBuilder::build(n_per_group, spec);
    }

    // L = D - A over the within-group adjacency; optionally including messenger-overlay links.
    inline Matrix laplacian(const Topology &t, bool include_messenger_links = false)
    {
        Matrix a = t.adjacency();
        if (include_messenger_links)
        {
            for (GroupId g = 0; g < t.group_count(); ++g)
            {
                for (GroupId h : t.messenger_neighbors(g))
                {
                    a(t.messenger_of(g), t.messenger_of(h)) = 1.0;
                }
            }
        }
        Matrix l = -a;
        l.diagonal() = a.rowwise().sum();
        return l;
    }

    // Second-smallest eigenvalue of a Laplacian, clamped at 0; a single vertex reports 0.
    inline double algebraic_connectivity(const Matrix &lap)
    {
        if (lap.rows() < 2)
        {
            return 0.0;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(lap, Eigen::EigenvaluesOnly);
        const double l2 = es.eigenvalues()(1);
        return l2 < 0.0 ? 0.0 : l2;
    }

    struct Connectivity
    {
        double whole = 0.0;            // full graph, messenger links included
        std::vector<double> per_group; // each group's induced subgraph
    };

    inline Connectivity algebraic_connectivity(const Topology &t)
    {
        Connectivity c;
        c.whole = algebraic_connectivity(laplacian(t, true));
        const Matrix lap = laplacian(t);
        for (GroupId g = 0; g < t.group_count(); ++g)
        {
            const auto &mem = t.members(g);
            const auto k = static_cast<Eigen::Index>(mem.size());
            Matrix sub(k, k);
            for (Eigen::Index a = 0; a < k; ++a)
            {
                for (Eigen::Index b = 0; b < k; ++b)
                {
                    sub(a, b) = lap(mem[static_cast<std::size_t>(a)], mem[static_cast<std::size_t>(b)]);
                }
            }
            c.per_group.push_back(algebraic_connectivity(sub));
        }
        return c;
    }

    // Text form (ids 1-based):
    //   N q
    //   group <node> <gid>
    //   messenger <gid> <node>
    //   edge <i> <j>
    //   coord <node> <x> <y>      (optional)
    // '#' starts a comment line. Cross-group edges must join messengers.
    inline void write_topology(std::ostream &os, const Topology &t)
    {
        os << t.node_count() << ' ' << t.group_count() << '\n';
        for (NodeId i = 0; i < t.node_count(); ++i)
        {
            os << "group " << i + 1 << ' ' << t.group_of(i) + 1 << '\n';
        }
        for (GroupId g = 0; g < t.group_count(); ++g)
        {
            os << "messenger " << g + 1 << ' ' << t.messenger_of(g) + 1 << '\n';
        }
        for (const auto &[i, j] : t.edges())
        {
            os << "edge " << i + 1 << ' ' << j + 1 << '\n';
        }
        for (GroupId a = 0; a < t.group_count(); ++a)
        {
            for (GroupId b : t.messenger_neighbors(a))
            {
                if (a < b)
                {
                    os << "edge " << t.messenger_of(a) + 1 << ' ' << t.messenger_of(b) + 1 << '\n';
                }
            }
        }
        if (t.has_coordinates())
        {
            const auto old_prec = os.precision(17);
            for (NodeId i = 0; i < t.node_count(); ++i)
            {
                const auto &p = t.coordinates()[static_cast<std::size_t>(i)];
                os << "coord " << i + 1 << ' ' << p.x << ' ' << p.y << '\n';
            }
            os.precision(old_prec);
        }
    }

    inline Topology read_topology(std::istream &is)
    {
        std::string line;
        int line_no = 0;
        int n = -1;
        int q = -1;
        std::vector<int> gid;
        std::vector<NodeId> messengers;
        std::vector<std::pair<NodeId, NodeId>> edges;
        std::vector<Point> coords;
        bool any_coord = false;
        auto fail = [&](const std::string &msg) {
            throw Error(ErrorCode::IoError, "topology line " + std::to_string(line_no) + ": " + msg);
        };
        auto check_node = [&](int v) {
            if (v < 1 || v > n)
            {
                fail("node id " + std::to_string(v) + " out of range");
            }
        };
        while (std::getline(is, line))
        {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#')
            {
                continue;
            }
            std::istringstream ls(line);
            if (n < 0)
            {
                if (!(ls >> n >> q) || n <= 0 || q <= 0)
                {
                    fail("expected header 'N q'");
                }
                gid.assign(static_cast<std::size_t>(n), 0);
                coords.assign(static_cast<std::size_t>(n), Point{});
                continue;
            }
            std::string kind;
            ls >> kind;
            if (kind == "group")
            {
                int v = 0;
                int g = 0;
                if (!(ls >> v >> g))
                {
                    fail("malformed group line");
                }
                check_node(v);
                if (g < 1 || g > q)
                {
                    fail("group id out of range");
                }
                gid[static_cast<std::size_t>(v - 1)] = g;
            }
            else if (kind == "messenger")
            {
                int g = 0;
                int v = 0;
                if (!(ls >> g >> v))
                {
                    fail("malformed messenger line");
                }
                check_node(v);
                if (g < 1 || g > q || gid[static_cast<std::size_t>(v - 1)] != g)
                {
                    fail("messenger " + std::to_string(v) + " is not a member of group " + std::to_string(g));
                }
                messengers.push_back(v - 1);
            }
            else if (kind == "edge")
            {
                int a = 0;
                int b = 0;
                if (!(ls >> a >> b))
                {
                    fail("malformed edge line");
                }
                check_node(a);
                check_node(b);
                edges.emplace_back(a - 1, b - 1);
            }
            else if (kind == "coord")
            {
                int v = 0;
                Point p;
                if (!(ls >> v >> p.x >> p.y))
                {
                    fail("malformed coord line");
                }
                check_node(v);
                coords[static_cast<std::size_t>(v - 1)] = p;
                any_coord = true;
            }
            else
            {
                fail("unknown record '" + kind + "'");
            }
        }
        if (n < 0)
        {
            throw Error(ErrorCode::IoError, "topology file is empty");
        }
        // Nodes must be numbered contiguously by group.
        std::vector<int> sizes(static_cast<std::size_t>(q), 0);
        int prev = 1;
        for (int v = 0; v < n; ++v)
        {
            const int g = gid[static_cast<std::size_t>(v)];
            if (g == 0)
            {
                throw Error(ErrorCode::IoError, "node " + std::to_string(v + 1) + " has no group");
            }
            if (g < prev)
            {
                throw Error(ErrorCode::IoError, "nodes must be numbered contiguously by group");
            }
            prev = g;
            ++sizes[static_cast<std::size_t>(g - 1)];
        }
        ExplicitEdges spec;
        spec.edges = std::move(edges);
        spec.messengers = std::move(messengers);
        spec.connect_all_messengers = false;
        if (any_coord)
        {
            spec.coordinates = std::move(coords);
        }
        return build_topology(sizes, spec);
    }
} // namespace damtl
