#pragma once

// Asynchronous two-timescale executor. Every gradient indicator, broadcast and messenger
// exchange is its own renewal process on a shared virtual clock; events are drained one at a
// time from a single queue ordered by (time, sequence number).

#include "damtl/common.hpp"
#include "damtl/datagen.hpp"
#include "damtl/metrics.hpp"
#include "damtl/objectives.hpp"
#include "damtl/precision.hpp"
#include "damtl/rng.hpp"
#include "damtl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace damtl
{
    enum class EventKind : std::uint8_t
    {
        InnerGrad,
        ConsensusGrad,
        TaskGrad,
        OuterStep,
        GroupBroadcast,
        MessengerExchange,
    };

    inline constexpr std::string_view to_string(EventKind k) noexcept
    {
        switch (k)
        {
        case EventKind::InnerGrad: return "InnerGrad";
        case EventKind::ConsensusGrad: return "ConsensusGrad";
        case EventKind::TaskGrad: return "TaskGrad";
        case EventKind::OuterStep: return "OuterStep";
        case EventKind::GroupBroadcast: return "GroupBroadcast";
        case EventKind::MessengerExchange: return "MessengerExchange";
        }
        return "Unknown";
    }

    inline constexpr StreamTag stream_tag(EventKind k) noexcept
    {
        switch (k)
        {
        case EventKind::InnerGrad: return StreamTag::EventInner;
        case EventKind::ConsensusGrad: return StreamTag::EventConsensus;
        case EventKind::TaskGrad: return StreamTag::EventTask;
        case EventKind::OuterStep: return StreamTag::EventOuter;
        case EventKind::GroupBroadcast: return StreamTag::EventBroadcast;
        case EventKind::MessengerExchange: return StreamTag::EventOuter;
        }
        return StreamTag::EventInner;
    }

    // Node-indexed kinds carry a node id; the rest carry a group id.
    inline constexpr bool is_node_event(EventKind k) noexcept
    {
        return k == EventKind::InnerGrad || k == EventKind::ConsensusGrad || k == EventKind::TaskGrad;
    }

    enum class ArrivalLaw : std::uint8_t
    {
        Exponential,   // Poisson processes
        Deterministic, // the k-th event at k / rate
    };

    struct Event
    {
        double time = 0.0;
        std::uint64_t sequence = 0;
        EventKind kind = EventKind::InnerGrad;
        int index = 0;

        friend bool operator==(const Event &, const Event &) = default;
    };

    struct ProcessSpec
    {
        EventKind kind = EventKind::InnerGrad;
        int index = 0;
        double rate = 1.0; // events per unit virtual time; 0 disables the process
    };

    /// Merged renewal streams. Each process keeps exactly one pending event in the queue and
    /// draws its inter-arrival times from its own generator, so adding or removing one process
    /// leaves every other process's arrival times untouched.
    class EventSchedule
    {
    public:
        EventSchedule(double horizon, ArrivalLaw law, std::uint64_t seed) : horizon_(horizon), law_(law), seed_(seed)
        {
            if (!(horizon > 0.0))
            {
                throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
            }
        }

        void add_process(const ProcessSpec &p)
        {
            if (!(p.rate >= 0.0) || !std::isfinite(p.rate))
            {
                throw Error(ErrorCode::InvalidArgument, "process rate must be finite and nonnegative");
            }
            if (p.rate == 0.0)
            {
                return;
            }
            Process proc{p, Rng(stream_seed(seed_, stream_tag(p.kind), process_index(p))), 0, 0};
            if (law_ == ArrivalLaw::Deterministic)
            {
                proc.limit = static_cast<std::uint64_t>(std::floor(horizon_ * p.rate + 1e-9));
            }
            processes_.push_back(std::move(proc));
            advance(processes_.size() - 1, 0.0);
        }

        // Next event with time <= horizon, or nullopt when every stream is exhausted.
        std::optional<Event> pop()
        {
            if (queue_.empty())
            {
                return std::nullopt;
            }
            const Pending top = queue_.top();
            queue_.pop();
            const auto &spec = processes_[top.process].spec;
            Event ev{top.time, top.sequence, spec.kind, spec.index};
            advance(top.process, top.time);
            return ev;
        }

        [[nodiscard]] double horizon() const noexcept { return horizon_; }
        [[nodiscard]] bool empty() const noexcept { return queue_.empty(); }

    private:
        struct Process
        {
            ProcessSpec spec;
            Rng rng;
            std::uint64_t fired = 0;
            std::uint64_t limit = 0;
        };

        struct Pending
        {
            double time;
            std::uint64_t sequence;
            std::size_t process;

            bool operator>(const Pending &o) const noexcept
            {
                return time != o.time ? time > o.time : sequence > o.sequence;
            }
        };

        // Messenger exchange and outer-only steps share a tag; keep their streams apart.
        static std::uint64_t process_index(const ProcessSpec &p) noexcept
        {
            return static_cast<std::uint64_t>(p.index) * 8 + static_cast<std::uint64_t>(p.kind);
        }

        void advance(std::size_t idx, double now)
        {
            Process &proc = processes_[idx];
            double next = 0.0;
            if (law_ == ArrivalLaw::Deterministic)
            {
                if (proc.fired >= proc.limit)
                {
                    return;
                }
                next = std::min(static_cast<double>(proc.fired + 1) / proc.spec.rate, horizon_);
            }
            else
            {
                next = now + proc.rng.exponential(proc.spec.rate);
                if (next > horizon_)
                {
                    return;
                }
            }
            ++proc.fired;
            queue_.push({next, sequence_++, idx});
        }

        double horizon_;
        ArrivalLaw law_;
        std::uint64_t seed_;
        std::uint64_t sequence_ = 0;
        std::vector<Process> processes_;
        std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
    };

    inline EventSchedule schedule(const std::vector<ProcessSpec> &processes, double horizon, ArrivalLaw law,
                                  std::uint64_t seed)
    {
        EventSchedule s(horizon, law, seed);
        for (const auto &p : processes)
        {
            s.add_process(p);
        }
        return s;
    }

    struct RunConfig
    {
        double gamma = 1e-3;
        double delta1 = 0.0;
        double delta2 = 0.0;

        // Per-node rates (inner gradient, consensus gradient, task gradient) and per-messenger rates.
        double rate_inner = 1.0;
        double rate_consensus = 1.0;
        double rate_task = 1.0;
        double rate_exchange = 0.1;
        double rate_outer_step = 0.0;
        double rate_broadcast = 0.0;
        // Consensus events refresh the node's neighbour caches before using them.
        bool consensus_pull = true;

        double beta = 1.0;
        Schedule step{ScheduleKind::Inverse, 1.0};
        Schedule ridge{ScheduleKind::Inverse, 1.0};
        double outer_noise = 0.0;
        double eig_floor = 1e-6;
        bool safeguard = true;
        std::optional<Matrix> target; // identity when unset

        double horizon = 100.0;
        std::uint64_t max_events = 0; // 0: no cap
        std::uint64_t seed = 1;
        double cadence = 1.0;
        ArrivalLaw arrival = ArrivalLaw::Exponential;
    };

    inline void validate(const RunConfig &cfg)
    {
        auto bad = [](const std::string &m) { throw Error(ErrorCode::ConfigError, m); };
        if (!(cfg.gamma > 0.0)) bad("gamma must be positive");
        if (!(cfg.horizon > 0.0)) bad("horizon must be positive");
        if (!(cfg.cadence > 0.0)) bad("cadence must be positive");
        if (cfg.delta1 < 0.0 || cfg.delta2 < 0.0) bad("penalty weights must be nonnegative");
        if (cfg.rate_inner < 0.0 || cfg.rate_consensus < 0.0 || cfg.rate_task < 0.0 || cfg.rate_exchange < 0.0 ||
            cfg.rate_outer_step < 0.0 || cfg.rate_broadcast < 0.0)
            bad("rates must be nonnegative");
        if (!(cfg.beta > 0.0) || !(cfg.step.base > 0.0)) bad("outer stepsize must be positive");
        if (cfg.ridge.base < 0.0) bad("ridge parameter must be nonnegative");
        if (cfg.outer_noise < 0.0) bad("outer noise must be nonnegative");
        if (!(cfg.eig_floor > 0.0)) bad("eigenvalue floor must be positive");
    }

    // Streaming node: fresh observations from a generative model.
    struct StreamSource
    {
        NodeDataModel model;
    };

    // Fixed local dataset: each observation is one uniformly drawn row, unit weight.
    struct SampleSource
    {
        Matrix X;
        Vector y;
    };

    using NodeSource = std::variant<StreamSource, SampleSource>;

    struct Problem
    {
        Topology topology;
        std::vector<NodeSource> sources;
        std::optional<Matrix> w_star;     // p x N
        std::optional<Matrix> theta_star; // N x N

        [[nodiscard]] int p() const
        {
            return std::visit(
                [](const auto &s) {
                    if constexpr (std::is_same_v<std::decay_t<decltype(s)>, StreamSource>)
                        return s.model.p();
                    else
                        return static_cast<int>(s.X.cols());
                },
                sources.at(0));
        }
    };

    struct NeighborCache
    {
        NodeId node = 0;
        Vector w;
        double time = -1.0; // -1: never refreshed
    };

    struct NodeState
    {
        NodeId id = 0;
        GroupId group = 0;
        Vector w;
        std::vector<NeighborCache> last_seen;
        Vector task_gradient; // latest v_i pushed by the messenger
        double task_gradient_time = -1.0;
        std::uint64_t observations = 0;
    };

    struct SliceReceipt
    {
        Matrix values; // p x |G_j|
        double time = -1.0;
    };

    struct GroupState
    {
        GroupId id = 0;
        Matrix assembled;                 // W^(l), p x N
        std::vector<double> column_time;  // receipt time of each column, -1 for the initial value
        std::vector<SliceReceipt> inbox;  // latest slice received from each group
        PrecisionState precision;
        Rng noise_rng;
        std::uint64_t exchanges = 0;
    };

    // Ωi^{-1} diagonal for each source (unit weight for dataset nodes).
    inline Vector source_omega_inverse(const NodeSource &src)
    {
        if (const auto *s = std::get_if<StreamSource>(&src))
        {
            return omega_inverse_diagonal(s->model);
        }
        return Vector::Ones(1);
    }

    /// InnerGrad: w <- w - gamma * X^T Omega^{-1} (X w - y) for the supplied observation.
    inline void apply_inner_gradient(NodeState &node, const Observation &obs, const Vector &omega_inv, double gamma)
    {
        node.w -= gamma * inner_gradient(node.w, obs.X, obs.y, omega_inv);
    }

    /// ConsensusGrad: w <- w - gamma * delta1 * sum_j a_ij (w - w_j) over the cached neighbour models.
    inline void apply_consensus_gradient(NodeState &node, double gamma, double delta1)
    {
        Vector g = Vector::Zero(node.w.size());
        for (const auto &n : node.last_seen)
        {
            g += node.w - n.w;
        }
        node.w -= gamma * delta1 * g;
    }

    /// TaskGrad: w <- w - gamma * delta2 * v_i, using the cached v_i however old it is.
    inline void apply_task_gradient(NodeState &node, double gamma, double delta2)
    {
        node.w -= gamma * delta2 * node.task_gradient;
    }

    /// Applies only the term whose indicator fired. `obs`/`omega_inv` are required for InnerGrad.
    inline void apply_inner_update(NodeState &node, EventKind kind, const RunConfig &cfg,
                                   const Observation *obs = nullptr, const Vector *omega_inv = nullptr)
    {
        switch (kind)
        {
        case EventKind::InnerGrad:
            if (obs == nullptr || omega_inv == nullptr)
            {
                throw Error(ErrorCode::InvalidArgument, "InnerGrad needs an observation");
            }
            apply_inner_gradient(node, *obs, *omega_inv, cfg.gamma);
            return;
        case EventKind::ConsensusGrad:
            apply_consensus_gradient(node, cfg.gamma, cfg.delta1);
            return;
        case EventKind::TaskGrad:
            apply_task_gradient(node, cfg.gamma, cfg.delta2);
            return;
        default:
            throw Error(ErrorCode::InvalidArgument, "not an inner update: " + std::string(to_string(kind)));
        }
    }

    inline void refresh_neighbors(NodeState &node, const std::vector<NodeState> &nodes, double time)
    {
        for (auto &c : node.last_seen)
        {
            c.w = nodes[static_cast<std::size_t>(c.node)].w;
            c.time = time;
        }
    }

    /// Every member of group l refreshes its caches of its in-group neighbours.
    inline void broadcast_group(GroupId l, const Topology &topo, std::vector<NodeState> &nodes, double time)
    {
        for (NodeId i : topo.members(l))
        {
            refresh_neighbors(nodes[static_cast<std::size_t>(i)], nodes, time);
        }
    }

    inline Matrix group_slice(GroupId l, const Topology &topo, const std::vector<NodeState> &nodes)
    {
        const auto &mem = topo.members(l);
        Matrix s(nodes.front().w.size(), static_cast<Eigen::Index>(mem.size()));
        for (std::size_t k = 0; k < mem.size(); ++k)
        {
            s.col(static_cast<Eigen::Index>(k)) = nodes[static_cast<std::size_t>(mem[k])].w;
        }
        return s;
    }

    // Copies a slice into W^(l) unless the stored columns are at least as recent.
    inline void absorb_slice(GroupState &g, GroupId from, const Topology &topo, const Matrix &values, double time)
    {
        const auto &mem = topo.members(from);
        for (std::size_t k = 0; k < mem.size(); ++k)
        {
            const auto col = static_cast<std::size_t>(mem[k]);
            if (time > g.column_time[col])
            {
                g.assembled.col(static_cast<Eigen::Index>(col)) = values.col(static_cast<Eigen::Index>(k));
                g.column_time[col] = time;
            }
        }
    }

    // v_i = 2 (W^(l) - M) Theta_l[:, i] for every member of group l, M the ensemble mean of W^(l).
    inline void push_task_gradients(const GroupState &g, const Topology &topo, std::vector<NodeState> &nodes,
                                    double time)
    {
        const Matrix m = ensemble_mean(g.assembled);
        for (NodeId i : topo.members(g.id))
        {
            auto &node = nodes[static_cast<std::size_t>(i)];
            node.task_gradient = task_penalty_gradient(i, g.assembled, m, g.precision.theta);
            node.task_gradient_time = time;
        }
    }

    /// Messenger of group l: refresh its own slice, deliver it to every linked messenger (zero
    /// latency), absorb the newest slices in its inbox, take one precision step on W^(l), and push
    /// fresh task-penalty gradients to its group. Slices that never arrived keep their old values.
    inline PrecisionStepReport messenger_exchange(GroupId l, std::vector<GroupState> &groups, const Topology &topo,
                                                  std::vector<NodeState> &nodes, const RunConfig &cfg, double time)
    {
        GroupState &g = groups[static_cast<std::size_t>(l)];
        const Matrix slice = group_slice(l, topo, nodes);
        absorb_slice(g, l, topo, slice, time);
        for (GroupId h : topo.messenger_neighbors(l))
        {
            auto &receipt = groups[static_cast<std::size_t>(h)].inbox[static_cast<std::size_t>(l)];
            receipt.values = slice;
            receipt.time = time;
        }
        for (GroupId j = 0; j < topo.group_count(); ++j)
        {
            const auto &receipt = g.inbox[static_cast<std::size_t>(j)];
            if (j != l && receipt.time >= 0.0)
            {
                absorb_slice(g, j, topo, receipt.values, receipt.time);
            }
        }
        const auto rep = precision_step(g.precision, g.assembled, cfg.outer_noise, g.noise_rng);
        ++g.exchanges;
        push_task_gradients(g, topo, nodes, time);
        return rep;
    }

    /// Outer step without communication: own slice refresh, precision step, gradient push.
    inline PrecisionStepReport outer_only_step(GroupId l, std::vector<GroupState> &groups, const Topology &topo,
                                               std::vector<NodeState> &nodes, const RunConfig &cfg, double time)
    {
        GroupState &g = groups[static_cast<std::size_t>(l)];
        absorb_slice(g, l, topo, group_slice(l, topo, nodes), time);
        const auto rep = precision_step(g.precision, g.assembled, cfg.outer_noise, g.noise_rng);
        push_task_gradients(g, topo, nodes, time);
        return rep;
    }

    struct EventCounts
    {
        std::uint64_t inner = 0;
        std::uint64_t consensus = 0;
        std::uint64_t task = 0;
        std::uint64_t outer = 0; // exchanges plus outer-only steps
        std::uint64_t broadcast = 0;

        [[nodiscard]] std::uint64_t total() const noexcept { return inner + consensus + task + outer + broadcast; }
    };

    class Simulation
    {
    public:
        using Observer = std::function<void(double time, const Simulation &)>;

        Simulation(Problem problem, RunConfig cfg)
            : problem_(std::move(problem)), cfg_(std::move(cfg)), schedule_(cfg_.horizon, cfg_.arrival, cfg_.seed)
        {
            validate(cfg_);
            const Topology &topo = problem_.topology;
            const int n = topo.node_count();
            const int q = topo.group_count();
            if (static_cast<int>(problem_.sources.size()) != n)
            {
                throw Error(ErrorCode::DimensionMismatch, "need one data source per node");
            }
            p_ = problem_.p();
            common_dim_ = 0;
            for (NodeId i = 0; i < n; ++i)
            {
                const auto &src = problem_.sources[static_cast<std::size_t>(i)];
                if (const auto *s = std::get_if<StreamSource>(&src))
                {
                    damtl::validate(s->model);
                    require_dims(s->model.p() == p_, "all nodes must share p");
                    require_dims(common_dim_ == 0 || common_dim_ == s->model.m(), "stream nodes must share m");
                    common_dim_ = s->model.m();
                }
                else
                {
                    const auto &d = std::get<SampleSource>(src);
                    require_dims(d.X.cols() == p_ && d.X.rows() == d.y.size() && d.X.rows() > 0, "dataset node");
                }
                omega_inv_.push_back(source_omega_inverse(src));
                data_rng_.emplace_back(stream_seed(cfg_.seed, StreamTag::NodeData, static_cast<std::uint64_t>(i)));
            }
            if (problem_.w_star)
            {
                require_dims(problem_.w_star->rows() == p_ && problem_.w_star->cols() == n, "w_star shape");
            }
            if (problem_.theta_star)
            {
                require_dims(problem_.theta_star->rows() == n && problem_.theta_star->cols() == n, "theta_star shape");
            }
            const Matrix target = cfg_.target ? *cfg_.target : Matrix::Identity(n, n);
            require_dims(target.rows() == n && target.cols() == n, "target shape");

            nodes_.resize(static_cast<std::size_t>(n));
            for (NodeId i = 0; i < n; ++i)
            {
                auto &node = nodes_[static_cast<std::size_t>(i)];
                node.id = i;
                node.group = topo.group_of(i);
                node.w = Vector::Zero(p_);
                node.task_gradient = Vector::Zero(p_);
                for (NodeId j : topo.neighbors(i))
                {
                    node.last_seen.push_back({j, Vector::Zero(p_), -1.0});
                }
            }
            groups_.reserve(static_cast<std::size_t>(q));
            for (GroupId l = 0; l < q; ++l)
            {
                GroupState g;
                g.id = l;
                g.assembled = Matrix::Zero(p_, n);
                g.column_time.assign(static_cast<std::size_t>(n), -1.0);
                g.inbox.resize(static_cast<std::size_t>(q));
                g.precision = make_precision_state(n);
                g.precision.target = target;
                g.precision.beta = cfg_.beta;
                g.precision.step = cfg_.step;
                g.precision.ridge = cfg_.ridge;
                g.precision.eig_floor = cfg_.eig_floor;
                g.precision.safeguard = cfg_.safeguard;
                g.noise_rng = Rng(stream_seed(cfg_.seed, StreamTag::OuterNoise, static_cast<std::uint64_t>(l)));
                groups_.push_back(std::move(g));
            }

            for (NodeId i = 0; i < n; ++i)
            {
                schedule_.add_process({EventKind::InnerGrad, i, cfg_.rate_inner});
                schedule_.add_process({EventKind::ConsensusGrad, i, cfg_.delta1 > 0.0 ? cfg_.rate_consensus : 0.0});
                schedule_.add_process({EventKind::TaskGrad, i, cfg_.delta2 > 0.0 ? cfg_.rate_task : 0.0});
            }
            for (GroupId l = 0; l < q; ++l)
            {
                schedule_.add_process({EventKind::MessengerExchange, l, cfg_.rate_exchange});
                schedule_.add_process({EventKind::OuterStep, l, cfg_.rate_outer_step});
                schedule_.add_process({EventKind::GroupBroadcast, l, cfg_.rate_broadcast});
            }
            is_dataset_ = std::all_of(problem_.sources.begin(), problem_.sources.end(),
                                      [](const NodeSource &s) { return std::holds_alternative<SampleSource>(s); });
            log_.seed = cfg_.seed;
        }

        void set_observer(Observer obs) { observer_ = std::move(obs); }
        void set_event_trace(std::vector<Event> *trace) { trace_ = trace; }

        // Processes the next event; false once the schedule is drained (or the event cap is hit).
        bool step()
        {
            if (cfg_.max_events != 0 && counts_.total() >= cfg_.max_events)
            {
                return false;
            }
            const auto ev = schedule_.pop();
            if (!ev)
            {
                return false;
            }
            flush_metrics_before(ev->time);
            now_ = ev->time;
            if (trace_ != nullptr)
            {
                trace_->push_back(*ev);
            }
            try
            {
                dispatch(*ev);
            }
            catch (const Error &e)
            {
                throw Error(ErrorCode::RunError, "t=" + io::format_double(ev->time) + " " +
                                                     std::string(to_string(ev->kind)) + "(" +
                                                     std::to_string(ev->index) + "): " + e.what());
            }
            return true;
        }

        MetricsLog run()
        {
            while (step())
            {
            }
            const double end = cfg_.max_events != 0 && !schedule_.empty() ? now_ : cfg_.horizon;
            flush_metrics_through(end);
            log_.record(end, "events_inner", static_cast<double>(counts_.inner));
            log_.record(end, "events_consensus", static_cast<double>(counts_.consensus));
            log_.record(end, "events_task", static_cast<double>(counts_.task));
            log_.record(end, "events_outer", static_cast<double>(counts_.outer));
            return log_;
        }

        [[nodiscard]] const std::vector<NodeState> &nodes() const noexcept { return nodes_; }
        [[nodiscard]] const std::vector<GroupState> &groups() const noexcept { return groups_; }
        [[nodiscard]] const Problem &problem() const noexcept { return problem_; }
        [[nodiscard]] const RunConfig &config() const noexcept { return cfg_; }
        [[nodiscard]] const EventCounts &counts() const noexcept { return counts_; }
        [[nodiscard]] const MetricsLog &log() const noexcept { return log_; }
        [[nodiscard]] double now() const noexcept { return now_; }

        [[nodiscard]] Matrix live_estimates() const
        {
            Matrix w(p_, static_cast<Eigen::Index>(nodes_.size()));
            for (std::size_t i = 0; i < nodes_.size(); ++i)
            {
                w.col(static_cast<Eigen::Index>(i)) = nodes_[i].w;
            }
            return w;
        }

        // W^(l) as the messenger sees it now: its own group's columns are always current (the
        // within-group exchange keeps them fresh), the rest are the latest received slices.
        [[nodiscard]] Matrix group_view(GroupId l) const
        {
            Matrix w = groups_[static_cast<std::size_t>(l)].assembled;
            for (NodeId i : problem_.topology.members(l))
            {
                w.col(i) = nodes_[static_cast<std::size_t>(i)].w;
            }
            return w;
        }

        [[nodiscard]] std::vector<Matrix> thetas() const
        {
            std::vector<Matrix> out;
            for (const auto &g : groups_)
            {
                out.push_back(g.precision.theta);
            }
            return out;
        }

        // Err_k per node on its full local dataset (dataset runs only).
        [[nodiscard]] std::vector<double> node_prediction_errors() const
        {
            std::vector<double> out;
            for (std::size_t i = 0; i < nodes_.size(); ++i)
            {
                const auto &d = std::get<SampleSource>(problem_.sources[i]);
                out.push_back(prediction_error(d.X, d.y, nodes_[i].w));
            }
            return out;
        }

        [[nodiscard]] std::vector<double> group_prediction_errors() const
        {
            const auto per_node = node_prediction_errors();
            const auto &topo = problem_.topology;
            std::vector<double> out;
            for (GroupId l = 0; l < topo.group_count(); ++l)
            {
                double acc = 0.0;
                for (NodeId i : topo.members(l))
                {
                    acc += per_node[static_cast<std::size_t>(i)];
                }
                out.push_back(acc / static_cast<double>(topo.members(l).size()));
            }
            return out;
        }

        // Common noise for the k-th observation of any node; random access by index.
        [[nodiscard]] Vector common_noise(std::uint64_t k) const
        {
            CounterRng rng(stream_seed(cfg_.seed, StreamTag::CommonNoise, k));
            Vector xi(common_dim_);
            for (int r = 0; r < common_dim_; ++r)
            {
                xi(r) = rng.normal();
            }
            return xi;
        }

    private:
        void dispatch(const Event &ev)
        {
            const Topology &topo = problem_.topology;
            switch (ev.kind)
            {
            case EventKind::InnerGrad:
                inner_event(nodes_[static_cast<std::size_t>(ev.index)]);
                ++counts_.inner;
                break;
            case EventKind::ConsensusGrad: {
                auto &node = nodes_[static_cast<std::size_t>(ev.index)];
                if (cfg_.consensus_pull)
                {
                    refresh_neighbors(node, nodes_, ev.time);
                }
                apply_consensus_gradient(node, cfg_.gamma, cfg_.delta1);
                ++counts_.consensus;
                break;
            }
            case EventKind::TaskGrad:
                apply_task_gradient(nodes_[static_cast<std::size_t>(ev.index)], cfg_.gamma, cfg_.delta2);
                ++counts_.task;
                break;
            case EventKind::GroupBroadcast:
                broadcast_group(ev.index, topo, nodes_, ev.time);
                ++counts_.broadcast;
                break;
            case EventKind::MessengerExchange:
                note(messenger_exchange(ev.index, groups_, topo, nodes_, cfg_, ev.time));
                ++counts_.outer;
                break;
            case EventKind::OuterStep:
                note(outer_only_step(ev.index, groups_, topo, nodes_, cfg_, ev.time));
                ++counts_.outer;
                break;
            }
        }

        void note(const PrecisionStepReport &rep)
        {
            if (rep.floor_clamped > 0)
            {
                ++floor_events_;
            }
            if (rep.shrunk)
            {
                ++shrink_events_;
            }
        }

        void inner_event(NodeState &node)
        {
            const auto i = static_cast<std::size_t>(node.id);
            const auto &src = problem_.sources[i];
            Rng &rng = data_rng_[i];
            if (const auto *s = std::get_if<StreamSource>(&src))
            {
                const Vector xi = common_noise(node.observations);
                if (s->model.identity_design)
                {
                    // X = I: the gradient is Omega^{-1} (w - y); skip forming the identity.
                    const Vector y = gen_identity_response(s->model, xi, rng);
                    node.w -= cfg_.gamma * omega_inv_[i].cwiseProduct(node.w - y);
                }
                else
                {
                    const Observation obs = gen_observation(s->model, xi, rng, node.observations, node.id);
                    apply_inner_gradient(node, obs, omega_inv_[i], cfg_.gamma);
                }
            }
            else
            {
                const auto &d = std::get<SampleSource>(src);
                const auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(d.X.rows())));
                Observation obs;
                obs.X = d.X.row(r);
                obs.y = d.y.segment(r, 1);
                obs.node = node.id;
                obs.tick = node.observations;
                apply_inner_gradient(node, obs, omega_inv_[i], cfg_.gamma);
            }
            ++node.observations;
        }

        void record_metrics(double t)
        {
            if (problem_.w_star)
            {
                log_.record(t, "U", regularity(live_estimates(), *problem_.w_star));
                std::vector<Matrix> views;
                for (GroupId l = 0; l < problem_.topology.group_count(); ++l)
                {
                    views.push_back(group_view(l));
                }
                log_.record(t, "Est", estimation_error(views, problem_.w_star));
            }
            if (problem_.theta_star)
            {
                log_.record(t, "V", consistency(thetas(), problem_.theta_star));
            }
            if (is_dataset_)
            {
                const auto per_group = group_prediction_errors();
                double acc = 0.0;
                for (std::size_t l = 0; l < per_group.size(); ++l)
                {
                    log_.record(t, "Err_g" + std::to_string(l + 1), per_group[l]);
                    acc += per_group[l];
                }
                log_.record(t, "Err", acc / static_cast<double>(per_group.size()));
            }
            double f = 0.0;
            for (const auto &g : groups_)
            {
                const double b = g.precision.ridge.at(std::max<std::uint64_t>(g.precision.update_count, 1));
                f += outer_objective(g.precision.theta, g.precision.s, b, g.precision.target);
            }
            log_.record(t, "outer_objective", f / static_cast<double>(groups_.size()));
            log_.record(t, "safeguard_floor", static_cast<double>(floor_events_));
            log_.record(t, "safeguard_shrink", static_cast<double>(shrink_events_));
            if (observer_)
            {
                observer_(t, *this);
            }
        }

        // Records every cadence point strictly before t (events at exactly t count toward t).
        void flush_metrics_before(double t)
        {
            while (next_metric_time() < t && next_metric_time() <= cfg_.horizon)
            {
                record_metrics(next_metric_time());
                ++metric_index_;
            }
        }

        void flush_metrics_through(double t)
        {
            while (next_metric_time() <= t)
            {
                record_metrics(next_metric_time());
                ++metric_index_;
            }
        }

        [[nodiscard]] double next_metric_time() const noexcept
        {
            return static_cast<double>(metric_index_) * cfg_.cadence;
        }

        Problem problem_;
        RunConfig cfg_;
        EventSchedule schedule_;
        int p_ = 0;
        int common_dim_ = 0;
        bool is_dataset_ = false;
        std::vector<Vector> omega_inv_;
        std::vector<Rng> data_rng_;
        std::vector<NodeState> nodes_;
        std::vector<GroupState> groups_;
        MetricsLog log_;
        EventCounts counts_;
        std::uint64_t floor_events_ = 0;
        std::uint64_t shrink_events_ = 0;
        std::uint64_t metric_index_ = 0;
        double now_ = 0.0;
        Observer observer_;
        std::vector<Event> *trace_ = nullptr;
    };

    inline MetricsLog run(Problem problem, const RunConfig &cfg)
    {
        Simulation sim(std::move(problem), cfg);
        return sim.run();
    }
} // namespace damtl
