#include "rrx/model_io.hpp"

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rrx {

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    try {
        json j;
        in >> j;
        return j;
    } catch (const std::exception& e) {
        throw ValidationError("cannot parse '" + path + "': " + e.what());
    }
}

Vector to_vector(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), values.size());
}

json from_vector(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

int label_index(const Partition& part, const std::string& label) {
    for (int j = 0; j < part.size(); ++j)
        if (part.labels[j] == label) return j;
    throw ValidationError("partition '" + part.name + "' has no cell labeled '" + label +
                          "'");
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    return s.substr(begin, s.find_last_not_of(" \t\r") - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

Model load_model(const std::string& path) {
    const json j = read_json(path);
    try {
        std::vector<Partition> parts;
        for (const auto& p : j.at("partitions"))
            parts.push_back(Partition{p.at("name").get<std::string>(),
                                      p.at("labels").get<std::vector<std::string>>()});
        const auto& cells = j.at("cells");
        IntMatrix labels(cells.size(), parts.size());
        Vector probs(cells.size());
        int c = 0;
        for (const auto& cell : cells) {
            const auto names = cell.at("labels").get<std::vector<std::string>>();
            if (names.size() != parts.size())
                throw ValidationError("'" + path + "': cell " + std::to_string(c) +
                                      " must name one label per partition");
            for (std::size_t k = 0; k < parts.size(); ++k)
                labels(c, k) = label_index(parts[k], names[k]);
            probs[c] = cell.at("p").get<double>();
            c += 1;
        }
        CellGrid grid(std::move(parts), std::move(labels), std::move(probs));
        std::vector<PiecewiseFunction> functions;
        if (j.contains("functions")) {
            for (const auto& f : j.at("functions")) {
                auto fn = make_piecewise_function(f.at("name").get<std::string>(),
                                                  to_vector(f.at("mean")),
                                                  to_vector(f.at("var")),
                                                  f.value("bound", 1.0));
                validate_function(grid, fn);
                functions.push_back(std::move(fn));
            }
        }
        return Model{std::move(grid), std::move(functions)};
    } catch (const json::exception& e) {
        throw ValidationError("'" + path + "': " + std::string(e.what()));
    }
}

void save_model(const Model& model, const std::string& path) {
    json j;
    j["partitions"] = json::array();
    for (const auto& p : model.grid.partitions())
        j["partitions"].push_back({{"name", p.name}, {"labels", p.labels}});
    j["cells"] = json::array();
    for (int c = 0; c < model.grid.num_cells(); ++c) {
        std::vector<std::string> names;
        for (int k = 0; k < model.grid.num_partitions(); ++k)
            names.push_back(
                model.grid.partition(k).labels[model.grid.labels()(c, k)]);
        j["cells"].push_back({{"labels", names}, {"p", model.grid.probabilities()[c]}});
    }
    j["functions"] = json::array();
    for (const auto& f : model.functions)
        j["functions"].push_back({{"name", f.name},
                                  {"mean", from_vector(f.mean)},
                                  {"var", from_vector(f.var)},
                                  {"bound", f.bound}});
    write_text_atomic(path, j.dump(2) + "\n");
}

RakingSchedule load_targets(const std::string& path, const CellGrid& grid) {
    const json j = read_json(path);
    try {
        std::vector<MarginalTarget> targets;
        for (const auto& t : j.at("targets")) {
            const auto name = t.at("partition").get<std::string>();
            const int k = grid.partition_index(name);
            if (k < 0)
                throw ValidationError("'" + path + "': unknown partition '" + name + "'");
            Vector probs = to_vector(t.at("probs"));
            if (probs.size() != grid.partition(k).size())
                throw ValidationError("'" + path + "': target for '" + name + "' has " +
                                      std::to_string(probs.size()) + " entries, partition has " +
                                      std::to_string(grid.partition(k).size()));
            targets.push_back(make_marginal_target(k, std::move(probs)));
        }
        return make_schedule(std::move(targets));
    } catch (const json::exception& e) {
        throw ValidationError("'" + path + "': " + std::string(e.what()));
    }
}

CellGrid read_contingency_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    if (rows.size() < 3)
        throw ValidationError("'" + path + "': need a header and at least 2 rows");
    const auto& header = rows[0];
    if (header.size() < 3)
        throw ValidationError("'" + path + "': need at least 2 columns");
    Partition row_part{header[0].empty() ? "rows" : header[0], {}};
    Partition col_part{"cols", {header.begin() + 1, header.end()}};

    const int ncols = col_part.size();
    const int nrows = static_cast<int>(rows.size()) - 1;
    Matrix counts(nrows, ncols);
    for (int r = 0; r < nrows; ++r) {
        const auto& fields = rows[r + 1];
        if (static_cast<int>(fields.size()) != ncols + 1)
            throw ValidationError("'" + path + "': row " + std::to_string(r + 1) +
                                  " has " + std::to_string(fields.size() - 1) +
                                  " entries, expected " + std::to_string(ncols));
        if (fields[0].empty())
            throw ValidationError("'" + path + "': row " + std::to_string(r + 1) +
                                  " is missing its label");
        row_part.labels.push_back(fields[0]);
        for (int c = 0; c < ncols; ++c) {
            try {
                std::size_t used = 0;
                counts(r, c) = std::stod(fields[c + 1], &used);
                if (used != fields[c + 1].size()) throw std::invalid_argument(fields[c + 1]);
            } catch (const std::exception&) {
                throw ValidationError("'" + path + "': cannot read count '" +
                                      fields[c + 1] + "'");
            }
            if (counts(r, c) < 0.0)
                throw ValidationError("'" + path + "': negative count");
        }
    }
    const double total = counts.sum();
    if (total <= 0.0) throw ValidationError("'" + path + "': table total is zero");

    IntMatrix labels(nrows * ncols, 2);
    Vector probs(nrows * ncols);
    for (int r = 0; r < nrows; ++r) {
        for (int c = 0; c < ncols; ++c) {
            labels(r * ncols + c, 0) = r;
            labels(r * ncols + c, 1) = c;
            probs[r * ncols + c] = counts(r, c) / total;
        }
    }
    return CellGrid({std::move(row_part), std::move(col_part)}, std::move(labels),
                    std::move(probs));
}

void write_text_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw ValidationError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw ValidationError("cannot replace '" + path + "'");
    }
}

std::string format_full(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string format_short(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", x);
    return buf;
}

}  // namespace rrx
