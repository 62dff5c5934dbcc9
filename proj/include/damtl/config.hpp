#pragma once

// Flat `key = value` files. `#` starts a comment anywhere on a line; blank lines are ignored.
// Keys are case-sensitive and may appear at most once.

#include "damtl/common.hpp"
#include "damtl/engine.hpp"
#include "damtl/io.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace damtl
{
    class KeyValueFile
    {
    public:
        static KeyValueFile parse(const std::string &text, const std::string &origin = "<config>")
        {
            KeyValueFile kv;
            kv.origin_ = origin;
            std::istringstream in(text);
            std::string raw;
            int line_no = 0;
            while (std::getline(in, raw))
            {
                ++line_no;
                std::string_view line(raw);
                if (const auto hash = line.find('#'); hash != std::string_view::npos)
                {
                    line = line.substr(0, hash);
                }
                line = io::trim(line);
                if (line.empty())
                {
                    continue;
                }
                const auto eq = line.find('=');
                if (eq == std::string_view::npos)
                {
                    throw Error(ErrorCode::ConfigError, kv.where(line_no) + "expected 'key = value'");
                }
                const std::string key(io::trim(line.substr(0, eq)));
                const std::string value(io::trim(line.substr(eq + 1)));
                if (key.empty())
                {
                    throw Error(ErrorCode::ConfigError, kv.where(line_no) + "empty key");
                }
                if (kv.entries_.contains(key))
                {
                    throw Error(ErrorCode::ConfigError, kv.where(line_no) + "key '" + key + "' given twice (first on line " +
                                                            std::to_string(kv.entries_.at(key).line) + ")");
                }
                kv.entries_.emplace(key, Entry{value, line_no});
                kv.order_.push_back(key);
            }
            return kv;
        }

        [[nodiscard]] bool has(const std::string &key) const { return entries_.contains(key); }

        [[nodiscard]] std::string get_string(const std::string &key, const std::string &fallback) const
        {
            const Entry *e = find(key);
            return e != nullptr ? e->value : fallback;
        }

        [[nodiscard]] std::string require_string(const std::string &key) const
        {
            const Entry *e = find(key);
            if (e == nullptr)
            {
                throw Error(ErrorCode::ConfigError, origin_ + ": missing required key '" + key + "'");
            }
            return e->value;
        }

        [[nodiscard]] double get_double(const std::string &key, double fallback) const
        {
            const Entry *e = find(key);
            if (e == nullptr)
            {
                return fallback;
            }
            return to_double(key, *e, e->value);
        }

        [[nodiscard]] std::int64_t get_int(const std::string &key, std::int64_t fallback) const
        {
            const Entry *e = find(key);
            if (e == nullptr)
            {
                return fallback;
            }
            return to_int(key, *e, e->value);
        }

        [[nodiscard]] bool get_bool(const std::string &key, bool fallback) const
        {
            const Entry *e = find(key);
            if (e == nullptr)
            {
                return fallback;
            }
            if (e->value == "true" || e->value == "yes" || e->value == "1" || e->value == "on")
            {
                return true;
            }
            if (e->value == "false" || e->value == "no" || e->value == "0" || e->value == "off")
            {
                return false;
            }
            throw bad(key, *e, "expected a boolean");
        }

        // Comma-separated list; empty value gives an empty list.
        [[nodiscard]] std::vector<std::string> get_list(const std::string &key,
                                                        const std::vector<std::string> &fallback = {}) const
        {
            const Entry *e = find(key);
            if (e == nullptr)
            {
                return fallback;
            }
            return split_list(e->value, ',');
        }

        [[nodiscard]] std::vector<double> get_double_list(const std::string &key) const
        {
            std::vector<double> out;
            const Entry *e = find(key);
            if (e == nullptr)
            {
                return out;
            }
            for (const auto &item : split_list(e->value, ','))
            {
                out.push_back(to_double(key, *e, item));
            }
            return out;
        }

        // Restricts `key` to one of `allowed`.
        [[nodiscard]] std::string get_choice(const std::string &key, const std::string &fallback,
                                             const std::vector<std::string> &allowed) const
        {
            const Entry *e = find(key);
            if (e == nullptr)
            {
                return fallback;
            }
            for (const auto &a : allowed)
            {
                if (e->value == a)
                {
                    return a;
                }
            }
            std::string list;
            for (const auto &a : allowed)
            {
                list += (list.empty() ? "" : ", ") + a;
            }
            throw bad(key, *e, "expected one of {" + list + "}");
        }

        // Throws for the first key never read through an accessor.
        void reject_unknown() const
        {
            for (const auto &k : order_)
            {
                if (!used_.contains(k))
                {
                    throw Error(ErrorCode::ConfigError, where(entries_.at(k).line) + "unknown key '" + k + "'");
                }
            }
        }

        // Validation failure attributed to the line that set `key` (or to the file if unset).
        [[nodiscard]] Error error(const std::string &key, const std::string &message) const
        {
            const auto it = entries_.find(key);
            if (it == entries_.end())
            {
                return Error(ErrorCode::ConfigError, origin_ + ": key '" + key + "': " + message);
            }
            return bad(key, it->second, message);
        }

        [[nodiscard]] const std::vector<std::string> &keys() const noexcept { return order_; }
        [[nodiscard]] const std::string &origin() const noexcept { return origin_; }

        static std::vector<std::string> split_list(std::string_view s, char sep)
        {
            std::vector<std::string> out;
            if (io::trim(s).empty())
            {
                return out;
            }
            std::size_t start = 0;
            while (true)
            {
                const auto pos = s.find(sep, start);
                out.emplace_back(io::trim(s.substr(start, pos - start)));
                if (pos == std::string_view::npos)
                {
                    break;
                }
                start = pos + 1;
            }
            return out;
        }

    private:
        struct Entry
        {
            std::string value;
            int line = 0;
        };

        const Entry *find(const std::string &key) const
        {
            const auto it = entries_.find(key);
            if (it == entries_.end())
            {
                return nullptr;
            }
            used_.insert(key);
            return &it->second;
        }

        [[nodiscard]] std::string where(int line) const { return origin_ + ":" + std::to_string(line) + ": "; }

        [[nodiscard]] Error bad(const std::string &key, const Entry &e, const std::string &what) const
        {
            return Error(ErrorCode::ConfigError, where(e.line) + "key '" + key + "': " + what + " (got '" + e.value + "')");
        }

        double to_double(const std::string &key, const Entry &e, const std::string &s) const
        {
            try
            {
                return io::parse_double(s, key);
            }
            catch (const Error &)
            {
                throw bad(key, e, "expected a number");
            }
        }

        std::int64_t to_int(const std::string &key, const Entry &e, const std::string &s) const
        {
            std::size_t used = 0;
            long long v = 0;
            try
            {
                v = std::stoll(s, &used);
            }
            catch (const std::exception &)
            {
                throw bad(key, e, "expected an integer");
            }
            if (used != s.size())
            {
                throw bad(key, e, "expected an integer");
            }
            return v;
        }

        std::string origin_;
        std::map<std::string, Entry> entries_;
        std::vector<std::string> order_;
        mutable std::set<std::string> used_;
    };

    inline Schedule parse_schedule(const KeyValueFile &kv, const std::string &prefix, Schedule fallback)
    {
        Schedule s = fallback;
        const auto kind = kv.get_choice(prefix + "_schedule", fallback.kind == ScheduleKind::Constant ? "constant" : "inverse",
                                        {"constant", "inverse"});
        s.kind = kind == "constant" ? ScheduleKind::Constant : ScheduleKind::Inverse;
        s.base = kv.get_double(prefix + "_base", fallback.base);
        return s;
    }

    /// RunConfig keys:
    ///   gamma, delta1, delta2, rate_inner, rate_consensus, rate_task, rate_exchange,
    ///   rate_outer_step, rate_broadcast, consensus_pull, beta, step_schedule, step_base,
    ///   ridge_schedule, ridge_base, outer_noise, eig_floor, safeguard, horizon, max_events,
    ///   cadence, arrival (exponential | deterministic), seed.
    inline RunConfig parse_run_config(const KeyValueFile &kv, RunConfig cfg = {})
    {
        cfg.gamma = kv.get_double("gamma", cfg.gamma);
        cfg.delta1 = kv.get_double("delta1", cfg.delta1);
        cfg.delta2 = kv.get_double("delta2", cfg.delta2);
        cfg.rate_inner = kv.get_double("rate_inner", cfg.rate_inner);
        cfg.rate_consensus = kv.get_double("rate_consensus", cfg.rate_consensus);
        cfg.rate_task = kv.get_double("rate_task", cfg.rate_task);
        cfg.rate_exchange = kv.get_double("rate_exchange", cfg.rate_exchange);
        cfg.rate_outer_step = kv.get_double("rate_outer_step", cfg.rate_outer_step);
        cfg.rate_broadcast = kv.get_double("rate_broadcast", cfg.rate_broadcast);
        cfg.consensus_pull = kv.get_bool("consensus_pull", cfg.consensus_pull);
        cfg.beta = kv.get_double("beta", cfg.beta);
        cfg.step = parse_schedule(kv, "step", cfg.step);
        cfg.ridge = parse_schedule(kv, "ridge", cfg.ridge);
        cfg.outer_noise = kv.get_double("outer_noise", cfg.outer_noise);
        cfg.eig_floor = kv.get_double("eig_floor", cfg.eig_floor);
        cfg.safeguard = kv.get_bool("safeguard", cfg.safeguard);
        cfg.horizon = kv.get_double("horizon", cfg.horizon);
        const auto max_events = kv.get_int("max_events", static_cast<std::int64_t>(cfg.max_events));
        if (max_events < 0)
        {
            throw kv.error("max_events", "must be nonnegative");
        }
        cfg.max_events = static_cast<std::uint64_t>(max_events);
        cfg.cadence = kv.get_double("cadence", cfg.cadence);
        cfg.arrival = kv.get_choice("arrival", cfg.arrival == ArrivalLaw::Deterministic ? "deterministic" : "exponential",
                                    {"exponential", "deterministic"}) == "deterministic"
                          ? ArrivalLaw::Deterministic
                          : ArrivalLaw::Exponential;
        const auto seed = kv.get_int("seed", static_cast<std::int64_t>(cfg.seed));
        if (seed < 0)
        {
            throw kv.error("seed", "must be nonnegative");
        }
        cfg.seed = static_cast<std::uint64_t>(seed);

        auto positive = [&](const char *key, double v) {
            if (!(v > 0.0))
            {
                throw kv.error(key, "must be positive");
            }
        };
        auto nonnegative = [&](const char *key, double v) {
            if (!(v >= 0.0))
            {
                throw kv.error(key, "must be nonnegative");
            }
        };
        positive("gamma", cfg.gamma);
        positive("horizon", cfg.horizon);
        positive("cadence", cfg.cadence);
        positive("beta", cfg.beta);
        positive("step_base", cfg.step.base);
        positive("eig_floor", cfg.eig_floor);
        nonnegative("delta1", cfg.delta1);
        nonnegative("delta2", cfg.delta2);
        nonnegative("ridge_base", cfg.ridge.base);
        nonnegative("outer_noise", cfg.outer_noise);
        for (const char *k : {"rate_inner", "rate_consensus", "rate_task", "rate_exchange", "rate_outer_step",
                              "rate_broadcast"})
        {
            nonnegative(k, kv.get_double(k, 0.0));
        }
        return cfg;
    }

    inline std::string describe(const RunConfig &cfg)
    {
        std::ostringstream os;
        auto kv = [&](const char *k, const std::string &v) { os << k << " = " << v << '\n'; };
        auto num = [&](const char *k, double v) { kv(k, io::format_double(v)); };
        auto sched = [](const Schedule &s) { return s.kind == ScheduleKind::Constant ? "constant" : "inverse"; };
        num("gamma", cfg.gamma);
        num("delta1", cfg.delta1);
        num("delta2", cfg.delta2);
        num("rate_inner", cfg.rate_inner);
        num("rate_consensus", cfg.rate_consensus);
        num("rate_task", cfg.rate_task);
        num("rate_exchange", cfg.rate_exchange);
        num("rate_outer_step", cfg.rate_outer_step);
        num("rate_broadcast", cfg.rate_broadcast);
        kv("consensus_pull", cfg.consensus_pull ? "true" : "false");
        num("beta", cfg.beta);
        kv("step_schedule", sched(cfg.step));
        num("step_base", cfg.step.base);
        kv("ridge_schedule", sched(cfg.ridge));
        num("ridge_base", cfg.ridge.base);
        num("outer_noise", cfg.outer_noise);
        num("eig_floor", cfg.eig_floor);
        kv("safeguard", cfg.safeguard ? "true" : "false");
        num("horizon", cfg.horizon);
        kv("max_events", std::to_string(cfg.max_events));
        num("cadence", cfg.cadence);
        kv("arrival", cfg.arrival == ArrivalLaw::Deterministic ? "deterministic" : "exponential");
        kv("seed", std::to_string(cfg.seed));
        return os.str();
    }
} // namespace damtl
