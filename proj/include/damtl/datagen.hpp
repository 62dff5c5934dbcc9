#pragma once

// Synthetic data streams with individual and common noise, ground-truth coefficient draws,
// grid temperature fields, and tabular dataset ingestion.

#include "damtl/common.hpp"
#include "damtl/io.hpp"
#include "damtl/rng.hpp"
#include "damtl/topology.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace damtl
{
    /// Per-node generator for y = X w* + eps + Lambda xi.
    ///
    /// Rows of X are i.i.d. N(design_mean, design_cov); eps ~ N(0, sigma^2 I); xi is the common
    /// noise vector shared by every node at the same observation index and loaded through the
    /// diagonal matrix Lambda = diag(lambda). With `identity_design` the design is fixed at X = I
    /// (m == p) and design_mean/design_cov are ignored.
    struct NodeDataModel
    {
        Vector design_mean;
        Matrix design_cov;
        Vector w_star;
        double sigma = 0.0;
        Vector lambda;
        bool identity_design = false;

        [[nodiscard]] int p() const noexcept { return static_cast<int>(w_star.size()); }
        [[nodiscard]] int m() const noexcept { return static_cast<int>(lambda.size()); }
    };

    struct Observation
    {
        Vector y;
        Matrix X;
        std::uint64_t tick = 0;
        NodeId node = 0;
    };

    inline void validate(const NodeDataModel &model)
    {
        if (model.sigma < 0.0 || !std::isfinite(model.sigma))
        {
            throw Error(ErrorCode::InvalidArgument, "sigma must be nonnegative");
        }
        if (model.m() <= 0 || model.p() <= 0)
        {
            throw Error(ErrorCode::DimensionMismatch, "node model needs m > 0 and p > 0");
        }
        if (model.identity_design)
        {
            require_dims(model.m() == model.p(), "identity design requires m == p");
            return;
        }
        require_dims(model.design_mean.size() == model.p() && model.design_cov.rows() == model.p() &&
                         model.design_cov.cols() == model.p(),
                     "design mean/covariance must be p-dimensional");
        if (!model.design_cov.isApprox(model.design_cov.transpose()) ||
            Eigen::LLT<Matrix>(model.design_cov).info() != Eigen::Success)
        {
            throw Error(ErrorCode::NotSPD, "design covariance is not symmetric positive definite");
        }
    }

    /// Error covariance sigma^2 I + Lambda^2 (diagonal).
    inline Matrix omega(const NodeDataModel &model)
    {
        const double s2 = model.sigma * model.sigma;
        Matrix out = Matrix::Zero(model.m(), model.m());
        for (int k = 0; k < model.m(); ++k)
        {
            const double v = s2 + model.lambda(k) * model.lambda(k);
            if (v <= 0.0)
            {
                throw Error(ErrorCode::SingularOmega, "error covariance is singular at entry " + std::to_string(k));
            }
            out(k, k) = v;
        }
        return out;
    }

    // Diagonal of omega^{-1}.
    inline Vector omega_inverse_diagonal(const NodeDataModel &model)
    {
        return omega(model).diagonal().cwiseInverse();
    }

    /// Draws one observation. The draw order is fixed (X row-major, then eps) so a seeded rng
    /// and a fixed xi sequence reproduce the stream bit-exactly.
    inline Observation gen_observation(const NodeDataModel &model, const Vector &common_noise, Rng &rng,
                                       std::uint64_t tick = 0, NodeId node = 0)
    {
        const int m = model.m();
        const int p = model.p();
        require_dims(common_noise.size() == m, "common noise must be m-dimensional");
        Observation obs;
        obs.tick = tick;
        obs.node = node;
        if (model.identity_design)
        {
            obs.X = Matrix::Identity(m, p);
        }
        else
        {
            const Eigen::LLT<Matrix> llt(model.design_cov);
            const Matrix l = llt.matrixL();
            obs.X.resize(m, p);
            Vector z(p);
            for (int r = 0; r < m; ++r)
            {
                for (int c = 0; c < p; ++c)
                {
                    z(c) = rng.normal();
                }
                obs.X.row(r) = (model.design_mean + l * z).transpose();
            }
        }
        Vector eps(m);
        for (int r = 0; r < m; ++r)
        {
            eps(r) = rng.normal();
        }
        obs.y = obs.X * model.w_star + model.sigma * eps + model.lambda.cwiseProduct(common_noise);
        return obs;
    }

    // Response of an identity-design model; same draws and values as gen_observation(...).y.
    inline Vector gen_identity_response(const NodeDataModel &model, const Vector &common_noise, Rng &rng)
    {
        const int m = model.m();
        require_dims(model.identity_design && common_noise.size() == m, "identity response");
        Vector eps(m);
        for (int r = 0; r < m; ++r)
        {
            eps(r) = rng.normal();
        }
        return model.w_star + model.sigma * eps + model.lambda.cwiseProduct(common_noise);
    }

    inline Vector standard_normal_vector(int n, Rng &rng)
    {
        Vector v(n);
        for (int k = 0; k < n; ++k)
        {
            v(k) = rng.normal();
        }
        return v;
    }

    struct GroundTruth
    {
        Matrix W_star;     // p x N
        Matrix M_star;     // p x q
        Matrix Sigma_star; // N x N
        Matrix Theta_star; // Sigma^{-1}
        bool has_theta = true;
    };

    inline Matrix spd_inverse(const Matrix &a, const char *what)
    {
        if (!a.isApprox(a.transpose(), 1e-12) || a.rows() != a.cols())
        {
            throw Error(ErrorCode::NotSPD, std::string(what) + " is not symmetric");
        }
        const Eigen::LLT<Matrix> llt(a);
        if (llt.info() != Eigen::Success)
        {
            throw Error(ErrorCode::NotSPD, std::string(what) + " is not positive definite");
        }
        Matrix inv = llt.solve(Matrix::Identity(a.rows(), a.cols()));
        return 0.5 * (inv + inv.transpose());
    }

    /// W* ~ MN(M*, I (x) Sigma): each of the p rows is an independent N(m*_r 1, Sigma) draw over
    /// the N nodes. With `average_within_groups` each group's columns are then replaced by their
    /// mean so that group members share one coefficient vector.
    inline GroundTruth sample_ground_truth(int p, const std::vector<GroupId> &group_of, int q, const Vector &mean,
                                           const Matrix &sigma, Rng &rng, bool average_within_groups = true)
    {
        const auto n = static_cast<int>(group_of.size());
        require_dims(mean.size() == p && sigma.rows() == n && sigma.cols() == n, "sample_ground_truth dimensions");
        GroundTruth gt;
        gt.Theta_star = spd_inverse(sigma, "Sigma");
        gt.Sigma_star = sigma;
        const Matrix l = Eigen::LLT<Matrix>(sigma).matrixL();
        gt.W_star.resize(p, n);
        for (int r = 0; r < p; ++r)
        {
            const Vector z = standard_normal_vector(n, rng);
            gt.W_star.row(r) = (Vector::Constant(n, mean(r)) + l * z).transpose();
        }
        if (average_within_groups)
        {
            for (GroupId g = 0; g < q; ++g)
            {
                Vector acc = Vector::Zero(p);
                int count = 0;
                for (int i = 0; i < n; ++i)
                {
                    if (group_of[static_cast<std::size_t>(i)] == g)
                    {
                        acc += gt.W_star.col(i);
                        ++count;
                    }
                }
                if (count == 0)
                {
                    continue;
                }
                acc /= count;
                for (int i = 0; i < n; ++i)
                {
                    if (group_of[static_cast<std::size_t>(i)] == g)
                    {
                        gt.W_star.col(i) = acc;
                    }
                }
            }
        }
        gt.M_star = mean.replicate(1, q);
        return gt;
    }

    // Sigma_ii = diag, Sigma_ij = within (same group) or across (different groups).
    inline Matrix block_covariance(const std::vector<GroupId> &group_of, double diag, double within, double across)
    {
        const auto n = static_cast<Eigen::Index>(group_of.size());
        Matrix s(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
        {
            for (Eigen::Index j = 0; j < n; ++j)
            {
                if (i == j)
                {
                    s(i, j) = diag;
                }
                else
                {
                    s(i, j) = group_of[static_cast<std::size_t>(i)] == group_of[static_cast<std::size_t>(j)] ? within
                                                                                                            : across;
                }
            }
        }
        return s;
    }

    struct HeatSource
    {
        Point position;
        double peak = 255.0;
    };

    /// Square grid temperature field. Cells are `cell_size` wide and indexed row-major with the
    /// cell (col, row) centred at ((col + 0.5) * cell_size, (row + 0.5) * cell_size).
    struct FieldConfig
    {
        int grid = 10;
        double cell_size = 1.0;
        std::vector<HeatSource> sources;
        double drop_rate = 25.0; // degrees per unit distance
        double radius = 5.0;     // region of influence of each source
        double base_level = 60.0;
        double gmrf_tau = 1.0;
        double gmrf_eps = 0.01;
        double gmrf_amplitude = 1.0; // 0 gives a constant base field
        double group_offset = 5.0;   // per-group offsets drawn from U[-group_offset, group_offset]
    };

    inline Point cell_center(const FieldConfig &cfg, int cell)
    {
        const int col = cell % cfg.grid;
        const int row = cell / cfg.grid;
        return {(col + 0.5) * cfg.cell_size, (row + 0.5) * cfg.cell_size};
    }

    // Each source sets peak - drop_rate * d inside its radius; the hottest influence wins over the
    // base value. Outside every radius the base value is returned.
    inline double heat_at(const FieldConfig &cfg, const Point &at, double base)
    {
        double v = base;
        for (const auto &s : cfg.sources)
        {
            const double d = distance(at, s.position);
            if (d <= cfg.radius)
            {
                v = std::max(v, s.peak - cfg.drop_rate * d);
            }
        }
        return v;
    }

    // tau * (4-neighbour grid Laplacian + eps I).
    inline Matrix grid_precision(int grid, double tau, double eps)
    {
        const int n = grid * grid;
        Matrix q = Matrix::Zero(n, n);
        for (int r = 0; r < grid; ++r)
        {
            for (int c = 0; c < grid; ++c)
            {
                const int i = r * grid + c;
                auto link = [&](int j) {
                    q(i, j) -= 1.0;
                    q(i, i) += 1.0;
                };
                if (c > 0) link(i - 1);
                if (c + 1 < grid) link(i + 1);
                if (r > 0) link(i - grid);
                if (r + 1 < grid) link(i + grid);
            }
        }
        q.diagonal().array() += eps;
        return tau * q;
    }

    struct MrfField
    {
        Vector base;       // cells
        Matrix per_group;  // cells x q
        Vector offsets;    // q
    };

    /// Base field: GMRF sample (factor the precision, solve against white noise) around
    /// base_level, then heat sources, then clamping to [0, 255]. Group g's field is the base field
    /// plus offset_g, clamped again.
    inline MrfField gen_mrf_field(const FieldConfig &cfg, int q, Rng &rng)
    {
        for (const auto &s : cfg.sources)
        {
            if (!(s.peak >= 0.0 && s.peak <= 255.0))
            {
                throw Error(ErrorCode::InvalidArgument, "heat source peak must lie in [0, 255]");
            }
        }
        if (cfg.grid <= 0 || q <= 0)
        {
            throw Error(ErrorCode::InvalidArgument, "field grid and group count must be positive");
        }
        const int n = cfg.grid * cfg.grid;
        Vector noise = standard_normal_vector(n, rng);
        Vector sample = Vector::Zero(n);
        if (cfg.gmrf_amplitude != 0.0)
        {
            const Eigen::LLT<Matrix> llt(grid_precision(cfg.grid, cfg.gmrf_tau, cfg.gmrf_eps));
            // Q = L L^T, x = L^{-T} z has covariance Q^{-1}.
            sample = llt.matrixU().solve(noise);
        }
        MrfField f;
        f.base.resize(n);
        for (int i = 0; i < n; ++i)
        {
            const double b = cfg.base_level + cfg.gmrf_amplitude * sample(i);
            f.base(i) = std::clamp(heat_at(cfg, cell_center(cfg, i), b), 0.0, 255.0);
        }
        f.offsets.resize(q);
        f.per_group.resize(n, q);
        for (int g = 0; g < q; ++g)
        {
            f.offsets(g) = rng.uniform(-cfg.group_offset, cfg.group_offset);
            f.per_group.col(g) = (f.base.array() + f.offsets(g)).cwiseMax(0.0).cwiseMin(255.0).matrix();
        }
        return f;
    }

    // Sensor loading of the common noise on each cell: 1 / (1 + distance to the cell centre).
    inline Vector sensor_loading(const FieldConfig &cfg, const Point &sensor)
    {
        const int n = cfg.grid * cfg.grid;
        Vector l(n);
        for (int i = 0; i < n; ++i)
        {
            l(i) = 1.0 / (1.0 + distance(sensor, cell_center(cfg, i)));
        }
        return l;
    }

    // Per-node regression data with an intercept column at index 0.
    struct TabularDataset
    {
        std::vector<std::string> node_keys;
        std::vector<GroupId> group_of;
        std::vector<Matrix> X;
        std::vector<Vector> y;
        std::vector<std::string> columns; // response then predictors
        Vector column_mean;
        Vector column_std;

        [[nodiscard]] int node_count() const noexcept { return static_cast<int>(X.size()); }
        [[nodiscard]] int p() const noexcept { return X.empty() ? 0 : static_cast<int>(X.front().cols()); }
        [[nodiscard]] std::vector<int> group_sizes() const
        {
            std::vector<int> sizes;
            for (GroupId g : group_of)
            {
                if (g >= static_cast<int>(sizes.size()))
                {
                    sizes.resize(static_cast<std::size_t>(g) + 1, 0);
                }
                ++sizes[static_cast<std::size_t>(g)];
            }
            return sizes;
        }
    };

    // Raw numeric columns from a header-ed csv, in the requested order, with the node key column.
    struct RawTable
    {
        std::vector<std::string> node_key;
        Matrix values; // rows x requested columns
    };

    inline RawTable read_raw_columns(const io::CsvTable &table, const std::string &node_column,
                                     const std::vector<std::string> &columns)
    {
        const int key_col = table.column(node_column);
        if (key_col < 0)
        {
            throw Error(ErrorCode::MissingColumn, "column '" + node_column + "' not found");
        }
        std::vector<int> idx;
        for (const auto &c : columns)
        {
            const int k = table.column(c);
            if (k < 0)
            {
                throw Error(ErrorCode::MissingColumn, "column '" + c + "' not found");
            }
            idx.push_back(k);
        }
        RawTable raw;
        raw.values.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < table.rows.size(); ++r)
        {
            raw.node_key.push_back(table.rows[r][static_cast<std::size_t>(key_col)]);
            for (std::size_t c = 0; c < idx.size(); ++c)
            {
                raw.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = io::parse_double(
                    table.rows[r][static_cast<std::size_t>(idx[c])], "row " + std::to_string(r + 1) + " column " + columns[c]);
            }
        }
        return raw;
    }

    /// Builds one (X_i, y_i) per node. Every column (response included) is z-scored with the
    /// global mean and sample standard deviation; X gets a leading column of ones. Nodes are
    /// ordered by group, then by first appearance in the file. `group_map` values are 0-based.
    inline TabularDataset build_tabular_dataset(const io::CsvTable &table, const std::string &response_column,
                                                const std::vector<std::string> &predictor_columns,
                                                const std::string &node_column,
                                                const std::map<std::string, GroupId> &group_map)
    {
        std::vector<std::string> cols{response_column};
        cols.insert(cols.end(), predictor_columns.begin(), predictor_columns.end());
        const RawTable raw = read_raw_columns(table, node_column, cols);
        const auto rows = raw.values.rows();
        if (rows < 2)
        {
            throw Error(ErrorCode::InsufficientRows, "dataset needs at least two rows");
        }
        TabularDataset ds;
        ds.columns = cols;
        ds.column_mean = raw.values.colwise().mean().transpose();
        ds.column_std.resize(raw.values.cols());
        for (Eigen::Index c = 0; c < raw.values.cols(); ++c)
        {
            const double var = (raw.values.col(c).array() - ds.column_mean(c)).square().sum() / static_cast<double>(rows - 1);
            if (!(var > 0.0))
            {
                throw Error(ErrorCode::ZeroVariance, "column '" + cols[static_cast<std::size_t>(c)] + "' is constant");
            }
            ds.column_std(c) = std::sqrt(var);
        }

        std::vector<std::string> order;
        std::map<std::string, std::vector<Eigen::Index>> rows_of;
        for (Eigen::Index r = 0; r < rows; ++r)
        {
            const auto &key = raw.node_key[static_cast<std::size_t>(r)];
            if (!group_map.contains(key))
            {
                throw Error(ErrorCode::InvalidArgument, "node '" + key + "' has no group assignment");
            }
            auto &list = rows_of[key];
            if (list.empty())
            {
                order.push_back(key);
            }
            list.push_back(r);
        }
        std::stable_sort(order.begin(), order.end(),
                         [&](const std::string &a, const std::string &b) { return group_map.at(a) < group_map.at(b); });

        const auto p = static_cast<Eigen::Index>(predictor_columns.size()) + 1;
        GroupId expect = 0;
        for (const auto &key : order)
        {
            const GroupId g = group_map.at(key);
            if (g > expect)
            {
                throw Error(ErrorCode::InvalidArgument, "group " + std::to_string(expect) + " has no rows");
            }
            expect = g + 1;
            const auto &list = rows_of.at(key);
            if (static_cast<Eigen::Index>(list.size()) < p)
            {
                throw Error(ErrorCode::InsufficientRows, "node '" + key + "' has " + std::to_string(list.size()) +
                                                             " rows, needs at least " + std::to_string(p));
            }
            Matrix x(static_cast<Eigen::Index>(list.size()), p);
            Vector y(static_cast<Eigen::Index>(list.size()));
            for (std::size_t k = 0; k < list.size(); ++k)
            {
                const auto r = list[k];
                const auto kk = static_cast<Eigen::Index>(k);
                y(kk) = (raw.values(r, 0) - ds.column_mean(0)) / ds.column_std(0);
                x(kk, 0) = 1.0;
                for (Eigen::Index c = 1; c < p; ++c)
                {
                    x(kk, c) = (raw.values(r, c) - ds.column_mean(c)) / ds.column_std(c);
                }
            }
            ds.node_keys.push_back(key);
            ds.group_of.push_back(g);
            ds.X.push_back(std::move(x));
            ds.y.push_back(std::move(y));
        }
        return ds;
    }

    inline TabularDataset load_tabular_dataset(const std::string &path, const std::string &response_column,
                                               const std::vector<std::string> &predictor_columns,
                                               const std::string &node_column,
                                               const std::map<std::string, GroupId> &group_map)
    {
        return build_tabular_dataset(io::read_csv_file(path), response_column, predictor_columns, node_column, group_map);
    }

    // Group map file: csv with header "node,group"; group ids are 1-based in the file.
    inline std::map<std::string, GroupId> load_group_map(const std::string &path)
    {
        const auto table = io::read_csv_file(path);
        if (table.header.size() < 2)
        {
            throw Error(ErrorCode::IoError, "group map needs two columns");
        }
        std::map<std::string, GroupId> out;
        for (const auto &row : table.rows)
        {
            const double g = io::parse_double(row[1], "group map");
            if (g < 1 || g != std::floor(g))
            {
                throw Error(ErrorCode::IoError, "group ids in a group map must be positive integers");
            }
            out[row[0]] = static_cast<GroupId>(g) - 1;
        }
        return out;
    }
} // namespace damtl
