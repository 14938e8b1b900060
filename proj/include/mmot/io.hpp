#pragma once

#include "mmot/calibrate.hpp"
#include "mmot/marginal.hpp"
#include "mmot/solver.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace mmot {

using nlohmann::json;

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("io: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError("io: malformed json in " + path + ": " + e.what());
    }
    return j;
}

inline void save_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ValidationError("io: cannot write " + path);
    out << j.dump(2) << "\n";
}

// ---- marginal sequence file: {"grid":[...], "times":[...], "weights":[[...]]}

struct MarginalFile {
    MarginalSequence seq;
    std::vector<double> delta_cal;  // optional calibration radii
};

inline void save_marginals(const std::string& path, const MarginalSequence& seq,
                           const std::vector<double>& delta_cal = {}) {
    json j;
    j["grid"] = seq.grid().points();
    j["times"] = seq.times();
    json w = json::array();
    for (int t = 0; t <= seq.periods(); ++t) {
        const VectorXd& v = seq.at(t).weights();
        w.push_back(std::vector<double>(v.data(), v.data() + v.size()));
    }
    j["weights"] = std::move(w);
    if (!delta_cal.empty()) j["delta_cal"] = delta_cal;
    save_json(path, j);
}

inline MarginalFile load_marginals(const std::string& path) {
    json j = load_json(path);
    try {
        auto grid = std::make_shared<Grid>(j.at("grid").get<std::vector<double>>());
        auto times = j.at("times").get<std::vector<double>>();
        auto rows = j.at("weights").get<std::vector<std::vector<double>>>();
        if (rows.size() != times.size())
            throw ValidationError("io: weights/times length mismatch in " + path);
        std::vector<Marginal> ms;
        for (const auto& r : rows) {
            if (r.size() != static_cast<size_t>(grid->size()))
                throw ValidationError("io: weight row does not match the grid in " + path);
            ms.emplace_back(grid, Eigen::Map<const VectorXd>(r.data(),
                                                             static_cast<Eigen::Index>(r.size())));
        }
        MarginalFile f{MarginalSequence(std::move(ms), std::move(times)), {}};
        if (j.contains("delta_cal")) f.delta_cal = j["delta_cal"].get<std::vector<double>>();
        return f;
    } catch (const json::exception& e) {
        throw ValidationError("io: bad marginal file " + path + ": " + e.what());
    }
}

// ---- solution file: {"u","h","epsilon","grid","times","report"}

struct SolutionFile {
    DualPotentials potentials;
    double epsilon = 0.0;
    std::vector<double> grid_points;
    std::vector<double> times;
};

inline void save_solution(const std::string& path, const SolveResult& res,
                          const MarginalSequence& seq, double epsilon) {
    json j;
    auto mat_to_json = [](const MatrixXd& m) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            std::vector<double> row(m.cols());
            for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<size_t>(c)] = m(r, c);
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["u"] = mat_to_json(res.potentials.u);
    j["h"] = mat_to_json(res.potentials.h);
    j["epsilon"] = epsilon;
    j["grid"] = seq.grid().points();
    j["times"] = seq.times();
    j["report"] = {{"iters", res.report.iters},
                   {"converged", res.report.converged},
                   {"final_sup_change", res.report.final_sup_change},
                   {"max_drift", res.report.max_drift},
                   {"marginal_defect", res.report.marginal_defect},
                   {"dual_value", res.report.dual_value},
                   {"primal_value", res.report.primal_value},
                   {"primal_cost", res.report.primal_cost},
                   {"duality_gap", res.report.duality_gap},
                   {"clamped_rows", res.report.clamped_rows},
                   {"frozen_iters", res.report.frozen_iters},
                   {"refine_iters", res.report.refine_iters},
                   {"wall_ms", res.report.wall_ms}};
    save_json(path, j);
}

inline SolutionFile load_solution(const std::string& path) {
    json j = load_json(path);
    try {
        SolutionFile f;
        auto to_mat = [](const json& rows) {
            auto v = rows.get<std::vector<std::vector<double>>>();
            if (v.empty()) return MatrixXd();
            MatrixXd m(static_cast<Eigen::Index>(v.size()),
                       static_cast<Eigen::Index>(v[0].size()));
            for (size_t r = 0; r < v.size(); ++r) {
                if (v[r].size() != v[0].size())
                    throw ValidationError("io: ragged matrix in solution file");
                for (size_t c = 0; c < v[r].size(); ++c)
                    m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c];
            }
            return m;
        };
        f.potentials.u = to_mat(j.at("u"));
        f.potentials.h = to_mat(j.at("h"));
        f.epsilon = j.at("epsilon").get<double>();
        f.grid_points = j.at("grid").get<std::vector<double>>();
        f.times = j.at("times").get<std::vector<double>>();
        return f;
    } catch (const json::exception& e) {
        throw ValidationError("io: bad solution file " + path + ": " + e.what());
    }
}

// ---- quote file: CSV maturity,strike,mid,spread with a header row

inline std::vector<OptionQuote> load_quotes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("io: cannot open " + path);
    std::vector<OptionQuote> quotes;
    std::string line;
    bool first = true;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.find("maturity") != std::string::npos) continue;  // header
        }
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) {
            try {
                size_t pos = 0;
                vals.push_back(std::stod(cell, &pos));
            } catch (const std::exception&) {
                throw ValidationError("io: bad number in " + path + " line " +
                                      std::to_string(lineno));
            }
        }
        if (vals.size() != 4)
            throw ValidationError("io: expected 4 columns in " + path + " line " +
                                  std::to_string(lineno));
        quotes.push_back({vals[1], vals[0], vals[2], vals[3]});
    }
    if (quotes.empty()) throw ValidationError("io: no quotes in " + path);
    return quotes;
}

inline void save_quotes(const std::string& path, const std::vector<OptionQuote>& quotes) {
    std::ofstream out(path);
    if (!out) throw ValidationError("io: cannot write " + path);
    out << "maturity,strike,mid,spread\n";
    for (const auto& q : quotes)
        out << format_double(q.maturity) << ',' << format_double(q.strike) << ','
            << format_double(q.mid) << ',' << format_double(q.spread) << "\n";
}

// ---- fixed-dialect CSV writer (comma, '.', LF, header row)

inline void save_csv(const std::string& path, const std::vector<std::string>& columns,
                     const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("io: cannot write " + path);
    for (size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << "\n";
    for (const auto& r : rows) {
        for (size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << format_double(r[c]);
        out << "\n";
    }
}

}  // namespace mmot
