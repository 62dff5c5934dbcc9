#pragma once

#include "damtl/common.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace damtl::io
{
    // Shortest text that parses back to the same double (17 significant digits).
    inline std::string format_double(double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    inline std::string_view trim(std::string_view s) noexcept
    {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos)
        {
            return {};
        }
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    // Comma-separated fields; double quotes may wrap a field containing commas.
    inline std::vector<std::string> split_csv_line(std::string_view line)
    {
        std::vector<std::string> out;
        std::string cur;
        bool quoted = false;
        for (char c : line)
        {
            if (c == '"')
            {
                quoted = !quoted;
            }
            else if (c == ',' && !quoted)
            {
                out.emplace_back(trim(cur));
                cur.clear();
            }
            else
            {
                cur.push_back(c);
            }
        }
        out.emplace_back(trim(cur));
        return out;
    }

    inline double parse_double(std::string_view s, const std::string &context)
    {
        const std::string tmp(trim(s));
        char *end = nullptr;
        const double v = std::strtod(tmp.c_str(), &end);
        if (tmp.empty() || end != tmp.c_str() + tmp.size())
        {
            throw Error(ErrorCode::IoError, context + ": not a number '" + tmp + "'");
        }
        return v;
    }

    struct CsvTable
    {
        std::vector<std::string> header;
        std::vector<std::vector<std::string>> rows;

        [[nodiscard]] int column(std::string_view name) const
        {
            for (std::size_t i = 0; i < header.size(); ++i)
            {
                if (header[i] == name)
                {
                    return static_cast<int>(i);
                }
            }
            return -1;
        }
    };

    inline CsvTable read_csv(std::istream &is)
    {
        CsvTable t;
        std::string line;
        bool have_header = false;
        while (std::getline(is, line))
        {
            const auto s = trim(line);
            if (s.empty() || s.front() == '#')
            {
                continue;
            }
            auto fields = split_csv_line(s);
            if (!have_header)
            {
                t.header = std::move(fields);
                have_header = true;
                continue;
            }
            if (fields.size() != t.header.size())
            {
                throw Error(ErrorCode::IoError, "csv row " + std::to_string(t.rows.size() + 1) + " has " +
                                                    std::to_string(fields.size()) + " fields, header has " +
                                                    std::to_string(t.header.size()));
            }
            t.rows.push_back(std::move(fields));
        }
        if (!have_header)
        {
            throw Error(ErrorCode::IoError, "csv input has no header row");
        }
        return t;
    }

    inline CsvTable read_csv_file(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw Error(ErrorCode::IoError, "cannot open " + path);
        }
        return read_csv(in);
    }

    // Matrix text form: first line "rows cols", then one comma-separated row per line.
    inline void write_matrix(std::ostream &os, const Matrix &m)
    {
        os << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index r = 0; r < m.rows(); ++r)
        {
            for (Eigen::Index c = 0; c < m.cols(); ++c)
            {
                if (c > 0)
                {
                    os << ',';
                }
                os << format_double(m(r, c));
            }
            os << '\n';
        }
    }

    inline Matrix read_matrix(std::istream &is)
    {
        std::string line;
        Eigen::Index rows = -1;
        Eigen::Index cols = -1;
        while (std::getline(is, line))
        {
            const auto s = trim(line);
            if (s.empty() || s.front() == '#')
            {
                continue;
            }
            std::istringstream hs{std::string(s)};
            if (!(hs >> rows >> cols) || rows < 0 || cols < 0)
            {
                throw Error(ErrorCode::IoError, "matrix header must be 'rows cols'");
            }
            break;
        }
        if (rows < 0)
        {
            throw Error(ErrorCode::IoError, "matrix input is empty");
        }
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
        {
            if (!std::getline(is, line))
            {
                throw Error(ErrorCode::IoError, "matrix truncated at row " + std::to_string(r));
            }
            const auto fields = split_csv_line(trim(line));
            if (static_cast<Eigen::Index>(fields.size()) != cols)
            {
                throw Error(ErrorCode::IoError, "matrix row " + std::to_string(r) + " has wrong width");
            }
            for (Eigen::Index c = 0; c < cols; ++c)
            {
                m(r, c) = parse_double(fields[static_cast<std::size_t>(c)], "matrix entry");
            }
        }
        return m;
    }

    inline void write_matrix_file(const std::string &path, const Matrix &m)
    {
        std::ofstream out(path);
        if (!out)
        {
            throw Error(ErrorCode::IoError, "cannot write " + path);
        }
        write_matrix(out, m);
    }

    inline Matrix read_matrix_file(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
        {
            throw Error(ErrorCode::IoError, "cannot open " + path);
        }
        return read_matrix(in);
    }

    // 64-bit FNV-1a, used for config hashes and output fingerprints.
    inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept
    {
        for (unsigned char c : bytes)
        {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    inline std::string read_file(const std::string &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
        {
            throw Error(ErrorCode::IoError, "cannot open " + path);
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
} // namespace damtl::io
