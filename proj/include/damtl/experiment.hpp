#pragma once

// Experiment specs, problem construction, multi-seed runs and result aggregation.

#include "damtl/common.hpp"
#include "damtl/config.hpp"
#include "damtl/datagen.hpp"
#include "damtl/engine.hpp"
#include "damtl/io.hpp"
#include "damtl/metrics.hpp"
#include "damtl/rng.hpp"
#include "damtl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace damtl
{
    enum class ExperimentKind : std::uint8_t
    {
        Temperature,
        Tabular,
        Synthetic,
    };

    enum class Variant : std::uint8_t
    {
        Damtl,
        Sg,
        SgTask,
        SgConsensus,
    };

    inline constexpr std::string_view to_string(ExperimentKind k) noexcept
    {
        switch (k)
        {
        case ExperimentKind::Temperature: return "temperature";
        case ExperimentKind::Tabular: return "tabular";
        case ExperimentKind::Synthetic: return "synthetic";
        }
        return "unknown";
    }

    inline constexpr std::string_view to_string(Variant v) noexcept
    {
        switch (v)
        {
        case Variant::Damtl: return "damtl";
        case Variant::Sg: return "sg";
        case Variant::SgTask: return "sg+task";
        case Variant::SgConsensus: return "sg+consensus";
        }
        return "unknown";
    }

    inline std::optional<Variant> parse_variant(std::string_view s)
    {
        for (Variant v : {Variant::Damtl, Variant::Sg, Variant::SgTask, Variant::SgConsensus})
        {
            if (s == to_string(v))
            {
                return v;
            }
        }
        return std::nullopt;
    }

    // Baselines drop penalty terms; their event streams go silent with them. Data streams,
    // exchanges and every other setting stay shared so variants are paired by seed.
    inline RunConfig apply_variant(RunConfig cfg, Variant v)
    {
        if (v == Variant::Sg || v == Variant::SgTask)
        {
            cfg.delta1 = 0.0;
        }
        if (v == Variant::Sg || v == Variant::SgConsensus)
        {
            cfg.delta2 = 0.0;
        }
        return cfg;
    }

    enum class TopologyKind : std::uint8_t
    {
        RandomGeometric,
        Complete,
        Ring,
        File,
    };

    struct TopologySpec
    {
        TopologyKind kind = TopologyKind::RandomGeometric;
        int groups = 4;
        int nodes_per_group = 5;
        double radius = 2.5;
        double link_probability = 1.0;
        double field_width = 10.0;
        double field_height = 10.0;
        std::string file;
    };

    struct TemperatureSpec
    {
        FieldConfig field;
        double sigma_max = 5.0;    // upper end of the individual noise variance range
        double sigma_min = 0.01;
        double lambda_scale = 1.0; // multiplies the distance-decay loading of the common noise
    };

    struct SyntheticSpec
    {
        int p = 5;
        int rows = 0; // rows per observation; 0 means p
        bool identity_design = false;
        double sigma = 1.0;
        double lambda = 0.0;
        double cov_diag = 1.0;
        double cov_within = 0.0;
        double cov_across = 0.0;
        double prior_mean = 0.0;
        bool average_within_groups = true;
    };

    struct TabularSpec
    {
        std::string data_file;
        std::string group_map_file;
        std::string node_column = "school";
        std::string response = "score5";
        std::vector<std::string> predictors{"gender", "social", "raven", "english", "math"};
    };

    struct ExperimentSpec
    {
        ExperimentKind kind = ExperimentKind::Synthetic;
        std::vector<Variant> variants{Variant::Damtl};
        RunConfig run;
        TopologySpec topology;
        TemperatureSpec temperature;
        SyntheticSpec synthetic;
        TabularSpec tabular;
        std::string out_dir = "results";
        std::vector<std::uint64_t> seeds;
        std::string source_text; // spec file contents, echoed into run metadata
    };

    inline std::vector<HeatSource> parse_sources(const KeyValueFile &kv, const std::string &key)
    {
        std::vector<HeatSource> out;
        for (const auto &item : KeyValueFile::split_list(kv.get_string(key, ""), ';'))
        {
            std::istringstream in(item);
            HeatSource s;
            if (!(in >> s.position.x >> s.position.y >> s.peak) || !(in >> std::ws).eof())
            {
                throw kv.error(key, "each source is 'x y peak', separated by ';'");
            }
            out.push_back(s);
        }
        return out;
    }

    // "1,2,5-8" style seed lists.
    inline std::vector<std::uint64_t> parse_seed_list(const std::string &text)
    {
        std::vector<std::uint64_t> out;
        for (const auto &item : KeyValueFile::split_list(text, ','))
        {
            auto to_u64 = [&](const std::string &s) {
                std::size_t used = 0;
                unsigned long long v = 0;
                try
                {
                    if (s.empty() || s.front() == '-')
                    {
                        throw std::invalid_argument(s);
                    }
                    v = std::stoull(s, &used);
                }
                catch (const std::exception &)
                {
                    used = std::string::npos;
                }
                if (used != s.size())
                {
                    throw Error(ErrorCode::ConfigError, "bad seed '" + s + "'");
                }
                return static_cast<std::uint64_t>(v);
            };
            const auto dash = item.find('-', 1);
            if (dash == std::string::npos)
            {
                out.push_back(to_u64(item));
                continue;
            }
            const auto lo = to_u64(std::string(io::trim(item.substr(0, dash))));
            const auto hi = to_u64(std::string(io::trim(item.substr(dash + 1))));
            if (hi < lo || hi - lo > 100000)
            {
                throw Error(ErrorCode::ConfigError, "bad seed range '" + item + "'");
            }
            for (auto s = lo; s <= hi; ++s)
            {
                out.push_back(s);
            }
        }
        return out;
    }

    inline std::string resolve_path(const std::string &path, const std::string &base_dir)
    {
        if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute())
        {
            return path;
        }
        return (std::filesystem::path(base_dir) / path).lexically_normal().string();
    }

    /// Parses an experiment spec. Relative file paths resolve against `base_dir`. Unknown keys
    /// and out-of-range values raise ConfigError naming the key and line.
    inline ExperimentSpec parse_experiment_spec(const std::string &text, const std::string &origin = "<spec>",
                                                const std::string &base_dir = "")
    {
        const KeyValueFile kv = KeyValueFile::parse(text, origin);
        ExperimentSpec spec;
        spec.source_text = text;
        static_cast<void>(kv.require_string("experiment"));
        const auto kind = kv.get_choice("experiment", "synthetic", {"temperature", "tabular", "synthetic"});
        spec.kind = kind == "temperature" ? ExperimentKind::Temperature
                    : kind == "tabular"   ? ExperimentKind::Tabular
                                          : ExperimentKind::Synthetic;

        spec.variants.clear();
        for (const auto &v : kv.get_list("variants", {"damtl"}))
        {
            const auto parsed = parse_variant(v);
            if (!parsed)
            {
                throw kv.error("variants", "unknown variant '" + v + "'");
            }
            if (std::find(spec.variants.begin(), spec.variants.end(), *parsed) != spec.variants.end())
            {
                throw kv.error("variants", "variant '" + v + "' listed twice");
            }
            spec.variants.push_back(*parsed);
        }
        if (spec.variants.empty())
        {
            throw kv.error("variants", "at least one variant is required");
        }
        try
        {
            spec.seeds = parse_seed_list(kv.get_string("seeds", "1"));
        }
        catch (const Error &e)
        {
            throw kv.error("seeds", e.what());
        }
        spec.out_dir = resolve_path(kv.get_string("out", spec.out_dir), base_dir);
        spec.run = parse_run_config(kv);

        auto &topo = spec.topology;
        const auto tkind = kv.get_choice("topology", spec.kind == ExperimentKind::Tabular ? "complete" : "random_geometric",
                                         {"random_geometric", "complete", "ring", "file"});
        topo.kind = tkind == "complete" ? TopologyKind::Complete
                    : tkind == "ring"   ? TopologyKind::Ring
                    : tkind == "file"   ? TopologyKind::File
                                        : TopologyKind::RandomGeometric;
        topo.groups = static_cast<int>(kv.get_int("groups", topo.groups));
        topo.nodes_per_group = static_cast<int>(kv.get_int("nodes_per_group", topo.nodes_per_group));
        topo.radius = kv.get_double("radius", topo.radius);
        topo.link_probability = kv.get_double("link_probability", topo.link_probability);
        topo.field_width = kv.get_double("field_width", topo.field_width);
        topo.field_height = kv.get_double("field_height", topo.field_height);
        topo.file = resolve_path(kv.get_string("topology_file", ""), base_dir);
        if (topo.groups < 1)
        {
            throw kv.error("groups", "must be at least 1");
        }
        if (topo.nodes_per_group < 1)
        {
            throw kv.error("nodes_per_group", "must be at least 1");
        }
        if (!(topo.link_probability >= 0.0 && topo.link_probability <= 1.0))
        {
            throw kv.error("link_probability", "must lie in [0, 1]");
        }
        if (topo.kind == TopologyKind::File && topo.file.empty())
        {
            throw kv.error("topology_file", "required when topology = file");
        }

        if (spec.kind == ExperimentKind::Temperature)
        {
            auto &t = spec.temperature;
            t.field.grid = static_cast<int>(kv.get_int("grid", t.field.grid));
            t.field.cell_size = kv.get_double("cell_size", t.field.cell_size);
            t.field.sources = parse_sources(kv, "sources");
            t.field.drop_rate = kv.get_double("drop_rate", t.field.drop_rate);
            t.field.radius = kv.get_double("heat_radius", t.field.radius);
            t.field.base_level = kv.get_double("base_level", t.field.base_level);
            t.field.gmrf_tau = kv.get_double("gmrf_tau", t.field.gmrf_tau);
            t.field.gmrf_eps = kv.get_double("gmrf_eps", t.field.gmrf_eps);
            t.field.gmrf_amplitude = kv.get_double("gmrf_amplitude", t.field.gmrf_amplitude);
            t.field.group_offset = kv.get_double("group_offset", t.field.group_offset);
            t.sigma_max = kv.get_double("sigma_max", t.sigma_max);
            t.sigma_min = kv.get_double("sigma_min", t.sigma_min);
            t.lambda_scale = kv.get_double("lambda_scale", t.lambda_scale);
            if (t.field.grid < 1)
            {
                throw kv.error("grid", "must be at least 1");
            }
            for (const auto &s : t.field.sources)
            {
                if (!(s.peak >= 0.0 && s.peak <= 255.0))
                {
                    throw kv.error("sources", "peaks must lie in [0, 255]");
                }
            }
            if (!(t.sigma_max >= 1.0 && t.sigma_max <= 5.0))
            {
                throw kv.error("sigma_max", "must lie in [1, 5]");
            }
            if (!(t.sigma_min > 0.0 && t.sigma_min <= t.sigma_max))
            {
                throw kv.error("sigma_min", "must lie in (0, sigma_max]");
            }
            if (!(t.field.gmrf_tau > 0.0) || !(t.field.gmrf_eps > 0.0))
            {
                throw kv.error("gmrf_tau", "GMRF precision parameters must be positive");
            }
        }
        else if (spec.kind == ExperimentKind::Synthetic)
        {
            auto &s = spec.synthetic;
            s.p = static_cast<int>(kv.get_int("p", s.p));
            s.rows = static_cast<int>(kv.get_int("rows", s.rows));
            s.identity_design = kv.get_choice("design", "gaussian", {"gaussian", "identity"}) == "identity";
            s.sigma = kv.get_double("sigma", s.sigma);
            s.lambda = kv.get_double("lambda", s.lambda);
            s.cov_diag = kv.get_double("cov_diag", s.cov_diag);
            s.cov_within = kv.get_double("cov_within", s.cov_within);
            s.cov_across = kv.get_double("cov_across", s.cov_across);
            s.prior_mean = kv.get_double("prior_mean", s.prior_mean);
            s.average_within_groups = kv.get_bool("average_within_groups", s.average_within_groups);
            if (s.p < 1)
            {
                throw kv.error("p", "must be at least 1");
            }
            if (s.rows < 0 || (s.identity_design && s.rows != 0 && s.rows != s.p))
            {
                throw kv.error("rows", "must be nonnegative and equal p for the identity design");
            }
            if (!(s.sigma >= 0.0))
            {
                throw kv.error("sigma", "must be nonnegative");
            }
            if (s.sigma * s.sigma + s.lambda * s.lambda <= 0.0)
            {
                throw kv.error("sigma", "sigma and lambda cannot both be zero (singular error covariance)");
            }
        }
        else
        {
            auto &t = spec.tabular;
            t.data_file = resolve_path(kv.require_string("data_file"), base_dir);
            t.group_map_file = resolve_path(kv.require_string("group_map"), base_dir);
            t.node_column = kv.get_string("node_column", t.node_column);
            t.response = kv.get_string("response", t.response);
            t.predictors = kv.get_list("predictors", t.predictors);
            if (t.predictors.empty())
            {
                throw kv.error("predictors", "at least one predictor is required");
            }
        }
        kv.reject_unknown();
        return spec;
    }

    inline ExperimentSpec load_experiment_spec(const std::string &path)
    {
        std::string text;
        try
        {
            text = io::read_file(path);
        }
        catch (const Error &e)
        {
            throw Error(ErrorCode::ConfigError, e.what());
        }
        return parse_experiment_spec(text, path, std::filesystem::path(path).parent_path().string());
    }

    // Checks that referenced files exist; the spec itself was validated by the parser.
    inline void check_inputs(const ExperimentSpec &spec)
    {
        auto need = [](const std::string &path, const char *what) {
            if (!std::filesystem::is_regular_file(path))
            {
                throw Error(ErrorCode::ConfigError, std::string(what) + " '" + path + "' does not exist");
            }
        };
        if (spec.seeds.empty())
        {
            throw Error(ErrorCode::ConfigError, "seed list is empty");
        }
        if (spec.topology.kind == TopologyKind::File)
        {
            need(spec.topology.file, "topology file");
        }
        if (spec.kind == ExperimentKind::Tabular)
        {
            need(spec.tabular.data_file, "data file");
            need(spec.tabular.group_map_file, "group map");
        }
    }

    inline ExplicitEdges ring_or_complete_edges(const std::vector<int> &sizes, bool complete)
    {
        ExplicitEdges e;
        int start = 0;
        for (int n : sizes)
        {
            for (int a = 0; a < n; ++a)
            {
                if (complete)
                {
                    for (int b = a + 1; b < n; ++b)
                    {
                        e.edges.emplace_back(start + a, start + b);
                    }
                }
                else if (n > 1 && (a + 1 < n || n > 2))
                {
                    e.edges.emplace_back(start + a, start + (a + 1) % n);
                }
            }
            start += n;
        }
        return e;
    }

    inline Topology build_spec_topology(const TopologySpec &t, const std::vector<int> &sizes, std::uint64_t seed)
    {
        switch (t.kind)
        {
        case TopologyKind::File: {
            std::ifstream in(t.file);
            if (!in)
            {
                throw Error(ErrorCode::IoError, "cannot open topology file '" + t.file + "'");
            }
            Topology topo = read_topology(in);
            std::vector<int> got;
            for (GroupId g = 0; g < topo.group_count(); ++g)
            {
                got.push_back(static_cast<int>(topo.members(g).size()));
            }
            if (got != sizes)
            {
                throw Error(ErrorCode::DimensionMismatch, "topology file group sizes do not match the experiment");
            }
            return topo;
        }
        case TopologyKind::Complete: return build_topology(sizes, ring_or_complete_edges(sizes, true));
        case TopologyKind::Ring: return build_topology(sizes, ring_or_complete_edges(sizes, false));
        case TopologyKind::RandomGeometric: break;
        }
        RandomGeometric rg;
        rg.radius = t.radius;
        rg.link_probability = t.link_probability;
        rg.field_width = t.field_width;
        rg.field_height = t.field_height;
        rg.seed = stream_seed(seed, StreamTag::Topology, 0);
        return build_topology(sizes, rg);
    }

    /// Builds the problem for one seed. Topology, ground truth, field and per-node noise levels
    /// all derive from the seed, so every variant run with that seed sees the same world.
    inline Problem build_problem(const ExperimentSpec &spec, std::uint64_t seed)
    {
        const auto &ts = spec.topology;
        if (spec.kind == ExperimentKind::Tabular)
        {
            const auto &t = spec.tabular;
            const auto ds = load_tabular_dataset(t.data_file, t.response, t.predictors, t.node_column,
                                                 load_group_map(t.group_map_file));
            Problem pr{build_spec_topology(ts, ds.group_sizes(), seed), {}, std::nullopt, std::nullopt};
            for (int i = 0; i < ds.node_count(); ++i)
            {
                pr.sources.emplace_back(SampleSource{ds.X[static_cast<std::size_t>(i)], ds.y[static_cast<std::size_t>(i)]});
            }
            return pr;
        }

        const std::vector<int> sizes(static_cast<std::size_t>(ts.groups), ts.nodes_per_group);
        Topology topo = build_spec_topology(ts, sizes, seed);
        const int n = topo.node_count();
        const int q = topo.group_count();
        Rng model_rng(stream_seed(seed, StreamTag::NodeModel, 0));

        if (spec.kind == ExperimentKind::Temperature)
        {
            const auto &t = spec.temperature;
            Rng field_rng(stream_seed(seed, StreamTag::Field, 0));
            const MrfField field = gen_mrf_field(t.field, q, field_rng);
            const int cells = t.field.grid * t.field.grid;
            Matrix w_star(cells, n);
            std::vector<NodeSource> sources;
            for (NodeId i = 0; i < n; ++i)
            {
                const GroupId g = topo.group_of(i);
                w_star.col(i) = field.per_group.col(g);
                NodeDataModel m;
                m.identity_design = true;
                m.w_star = field.per_group.col(g);
                m.sigma = std::sqrt(model_rng.uniform(t.sigma_min, t.sigma_max));
                const Point at = topo.has_coordinates() ? topo.coordinates()[static_cast<std::size_t>(i)]
                                                        : Point{0.5 * t.field.grid, 0.5 * t.field.grid};
                m.lambda = t.lambda_scale * sensor_loading(t.field, at);
                sources.emplace_back(StreamSource{std::move(m)});
            }
            return Problem{std::move(topo), std::move(sources), std::move(w_star), std::nullopt};
        }

        const auto &s = spec.synthetic;
        Rng gt_rng(stream_seed(seed, StreamTag::GroundTruth, 0));
        const Matrix sigma = block_covariance(topo.group_assignment(), s.cov_diag, s.cov_within, s.cov_across);
        const GroundTruth gt = sample_ground_truth(s.p, topo.group_assignment(), q, Vector::Constant(s.p, s.prior_mean),
                                                   sigma, gt_rng, s.average_within_groups);
        const int rows = s.rows == 0 ? s.p : s.rows;
        std::vector<NodeSource> sources;
        for (NodeId i = 0; i < n; ++i)
        {
            NodeDataModel m;
            m.identity_design = s.identity_design;
            m.w_star = gt.W_star.col(i);
            m.sigma = s.sigma;
            m.lambda = Vector::Constant(rows, s.lambda);
            if (!s.identity_design)
            {
                m.design_mean = Vector::Zero(s.p);
                m.design_cov = Matrix::Identity(s.p, s.p);
            }
            sources.emplace_back(StreamSource{std::move(m)});
        }
        return Problem{std::move(topo), std::move(sources), gt.W_star, gt.Theta_star};
    }

    inline RunConfig run_config_for(const ExperimentSpec &spec, Variant v, std::uint64_t seed)
    {
        RunConfig cfg = apply_variant(spec.run, v);
        cfg.seed = seed;
        return cfg;
    }

    inline std::uint64_t config_hash(const ExperimentSpec &spec, const RunConfig &cfg, Variant v)
    {
        std::string blob = describe(cfg);
        blob += "variant = ";
        blob += to_string(v);
        blob += '\n';
        blob += spec.source_text;
        return io::fnv1a(blob);
    }

    inline MetricsLog run_single(const ExperimentSpec &spec, Variant v, std::uint64_t seed)
    {
        const RunConfig cfg = run_config_for(spec, v, seed);
        MetricsLog log = run(build_problem(spec, seed), cfg);
        log.config_hash = config_hash(spec, cfg, v);
        return log;
    }

    // Type-7 (linear interpolation) sample quantile of an unsorted sample.
    inline double quantile(std::vector<double> values, double prob)
    {
        if (values.empty())
        {
            throw Error(ErrorCode::InvalidArgument, "quantile of an empty sample");
        }
        std::sort(values.begin(), values.end());
        const double h = (static_cast<double>(values.size()) - 1.0) * prob;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        if (lo + 1 >= values.size())
        {
            return values.back();
        }
        return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
    }

    struct CurvePoint
    {
        double time = 0.0;
        double median = 0.0;
        double q25 = 0.0;
        double q75 = 0.0;
        std::size_t count = 0;
    };

    // metric -> time -> per-seed values
    using SeedSamples = std::map<std::string, std::map<double, std::vector<double>>>;

    struct VariantRuns
    {
        Variant variant = Variant::Damtl;
        std::vector<std::uint64_t> seeds;
        std::vector<MetricsLog> logs;
    };

    inline std::map<std::string, std::vector<CurvePoint>> aggregate(const std::vector<MetricsLog> &logs)
    {
        SeedSamples samples;
        for (const auto &log : logs)
        {
            for (const auto &r : log.records())
            {
                samples[r.metric][r.time].push_back(r.value);
            }
        }
        std::map<std::string, std::vector<CurvePoint>> out;
        for (const auto &[metric, by_time] : samples)
        {
            auto &curve = out[metric];
            for (const auto &[t, vals] : by_time)
            {
                curve.push_back({t, quantile(vals, 0.5), quantile(vals, 0.25), quantile(vals, 0.75), vals.size()});
            }
        }
        return out;
    }

    // Metrics shown in the summary table when present.
    inline const std::vector<std::string> &summary_metrics()
    {
        static const std::vector<std::string> ids{"U", "Est", "V", "Err", "outer_objective", "safeguard_floor",
                                                  "safeguard_shrink"};
        return ids;
    }

    inline std::string pad(std::string s, std::size_t width)
    {
        if (s.size() < width)
        {
            s.append(width - s.size(), ' ');
        }
        return s;
    }

    inline std::string short_double(double v)
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return buf;
    }

    inline std::string summary_table(const std::vector<VariantRuns> &runs)
    {
        std::ostringstream os;
        os << pad("variant", 14) << pad("metric", 18) << pad("time", 10) << pad("median", 14) << pad("q25", 14)
           << pad("q75", 14) << "seeds\n";
        for (const auto &vr : runs)
        {
            const auto agg = aggregate(vr.logs);
            std::vector<std::string> ids;
            for (const auto &m : summary_metrics())
            {
                if (agg.contains(m))
                {
                    ids.push_back(m);
                }
            }
            for (const auto &[m, curve] : agg)
            {
                if (m.rfind("Err_g", 0) == 0)
                {
                    ids.push_back(m);
                }
            }
            for (const auto &m : ids)
            {
                const auto &last = agg.at(m).back();
                os << pad(std::string(to_string(vr.variant)), 14) << pad(m, 18) << pad(short_double(last.time), 10)
                   << pad(short_double(last.median), 14) << pad(short_double(last.q25), 14)
                   << pad(short_double(last.q75), 14) << last.count << '\n';
            }
        }
        return os.str();
    }

    inline void write_text(const std::filesystem::path &path, const std::string &text)
    {
        std::ofstream out(path, std::ios::binary);
        out << text;
        if (!out)
        {
            throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
        }
    }

    inline std::string curve_csv(const std::vector<CurvePoint> &curve)
    {
        std::ostringstream os;
        os << "time,median,q25,q75\n";
        for (const auto &c : curve)
        {
            os << io::format_double(c.time) << ',' << io::format_double(c.median) << ',' << io::format_double(c.q25)
               << ',' << io::format_double(c.q75) << '\n';
        }
        return os.str();
    }

    struct ResultFiles
    {
        std::vector<std::filesystem::path> metric_files;
        std::vector<std::filesystem::path> curve_files;
        std::filesystem::path aggregate;
        std::filesystem::path summary;
    };

    /// Aggregate file (variant, metric, time, median, q25, q75, n), one curve file per
    /// (variant, metric) under curves/, and summary.txt.
    inline ResultFiles emit_results(const std::vector<VariantRuns> &runs, const std::filesystem::path &out_dir)
    {
        ResultFiles files;
        std::filesystem::create_directories(out_dir / "curves");
        std::ostringstream agg_csv;
        agg_csv << "variant,metric,time,median,q25,q75,n\n";
        for (const auto &vr : runs)
        {
            const auto agg = aggregate(vr.logs);
            for (const auto &[metric, curve] : agg)
            {
                for (const auto &c : curve)
                {
                    agg_csv << to_string(vr.variant) << ',' << metric << ',' << io::format_double(c.time) << ','
                            << io::format_double(c.median) << ',' << io::format_double(c.q25) << ','
                            << io::format_double(c.q75) << ',' << c.count << '\n';
                }
                const auto path = out_dir / "curves" / ("curve_" + std::string(to_string(vr.variant)) + "_" + metric + ".csv");
                write_text(path, curve_csv(curve));
                files.curve_files.push_back(path);
            }
        }
        files.aggregate = out_dir / "aggregate.csv";
        write_text(files.aggregate, agg_csv.str());
        files.summary = out_dir / "summary.txt";
        write_text(files.summary, summary_table(runs));
        return files;
    }

    inline std::string metadata_text(const ExperimentSpec &spec, Variant v, std::uint64_t seed, const MetricsLog &log)
    {
        std::ostringstream os;
        os << "# run metadata\n";
        os << "experiment = " << to_string(spec.kind) << '\n';
        os << "variant = " << to_string(v) << '\n';
        os << "seed = " << seed << '\n';
        char hash[32];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(log.config_hash));
        os << "config_hash = " << hash << '\n';
        os << "# effective run configuration\n" << describe(run_config_for(spec, v, seed));
        os << "# spec file\n";
        std::istringstream in(spec.source_text);
        for (std::string line; std::getline(in, line);)
        {
            os << "#| " << line << '\n';
        }
        return os.str();
    }

    struct ExperimentResult
    {
        std::vector<VariantRuns> runs;
        ResultFiles files;
    };

    /// Runs every (variant, seed) pair and writes <out>/<variant>/seed_<s>.csv with a .meta
    /// companion, then the aggregate outputs. Fails before writing anything if the spec does not
    /// validate.
    inline ExperimentResult run_experiment(const ExperimentSpec &spec)
    {
        check_inputs(spec);
        const std::filesystem::path out(spec.out_dir);
        ExperimentResult res;
        for (Variant v : spec.variants)
        {
            VariantRuns vr;
            vr.variant = v;
            const auto dir = out / std::string(to_string(v));
            std::filesystem::create_directories(dir);
            for (std::uint64_t seed : spec.seeds)
            {
                MetricsLog log = run_single(spec, v, seed);
                std::ostringstream csv;
                log.write_csv(csv);
                const auto stem = "seed_" + std::to_string(seed);
                write_text(dir / (stem + ".csv"), csv.str());
                write_text(dir / (stem + ".meta"), metadata_text(spec, v, seed, log));
                res.files.metric_files.push_back(dir / (stem + ".csv"));
                vr.seeds.push_back(seed);
                vr.logs.push_back(std::move(log));
            }
            res.runs.push_back(std::move(vr));
        }
        const auto metric_files = res.files.metric_files;
        res.files = emit_results(res.runs, out);
        res.files.metric_files = metric_files;
        return res;
    }

    /// Re-reads the per-seed metric files under `dir` (one subdirectory per variant), rewrites
    /// the aggregate outputs and returns the summary table.
    inline std::string summarize(const std::filesystem::path &dir)
    {
        if (!std::filesystem::is_directory(dir))
        {
            throw Error(ErrorCode::IoError, "'" + dir.string() + "' is not a directory");
        }
        std::vector<VariantRuns> runs;
        for (Variant v : {Variant::Damtl, Variant::Sg, Variant::SgTask, Variant::SgConsensus})
        {
            const auto sub = dir / std::string(to_string(v));
            if (!std::filesystem::is_directory(sub))
            {
                continue;
            }
            std::vector<std::pair<std::uint64_t, std::filesystem::path>> files;
            for (const auto &entry : std::filesystem::directory_iterator(sub))
            {
                const auto name = entry.path().filename().string();
                if (entry.is_regular_file() && name.rfind("seed_", 0) == 0 && entry.path().extension() == ".csv")
                {
                    const auto stem = entry.path().stem().string().substr(5);
                    files.emplace_back(std::stoull(stem), entry.path());
                }
            }
            if (files.empty())
            {
                continue;
            }
            std::sort(files.begin(), files.end());
            VariantRuns vr;
            vr.variant = v;
            for (const auto &[seed, path] : files)
            {
                std::ifstream in(path);
                vr.seeds.push_back(seed);
                vr.logs.push_back(MetricsLog::read_csv(in));
            }
            runs.push_back(std::move(vr));
        }
        if (runs.empty())
        {
            throw Error(ErrorCode::IoError, "no metric files found under '" + dir.string() + "'");
        }
        emit_results(runs, dir);
        return summary_table(runs);
    }
} // namespace damtl
