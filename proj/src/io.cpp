#include "metabr/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace metabr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, sep)) out.push_back(trim(field));
    if (!line.empty() && line.back() == sep) out.push_back("");
    return out;
}

double parse_double(const std::string& s, int row, int col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        std::ostringstream msg;
        msg << "row " << row << ", column " << col + 1 << ": cannot parse '" << s
            << "' as a number";
        throw CsvError(msg.str());
    }
}

}  // namespace

StudyTable read_study_table(std::istream& in, bool se_column) {
    std::string line;
    if (!std::getline(in, line)) throw CsvError("empty input");
    const auto header = split(line, ',');
    if (header.size() < 3)
        throw CsvError("header must have at least columns study,y,se|var");

    StudyTable table;
    table.third_column_is_se = se_column;
    for (std::size_t c = 3; c < header.size(); ++c)
        table.covariate_names.push_back(header[c]);

    std::vector<double> ys, ss;
    std::vector<std::vector<double>> covs;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << row << ": expected " << header.size()
                << " fields, got " << fields.size();
            throw CsvError(msg.str());
        }
        table.study.push_back(fields[0]);
        ys.push_back(parse_double(fields[1], row, 1));
        const double sv = parse_double(fields[2], row, 2);
        if (sv <= 0.0) {
            std::ostringstream msg;
            msg << "row " << row << ": se/var must be positive, got " << sv;
            throw CsvError(msg.str());
        }
        ss.push_back(sv);
        std::vector<double> cv;
        for (std::size_t c = 3; c < fields.size(); ++c)
            cv.push_back(parse_double(fields[c], row, static_cast<int>(c)));
        covs.push_back(std::move(cv));
    }
    const auto K = static_cast<Eigen::Index>(ys.size());
    if (K == 0) throw CsvError("no data rows");
    table.y = Eigen::Map<Vector>(ys.data(), K);
    table.se_or_var = Eigen::Map<Vector>(ss.data(), K);
    table.covariates.resize(K, static_cast<Eigen::Index>(table.covariate_names.size()));
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index c = 0; c < table.covariates.cols(); ++c)
            table.covariates(i, c) = covs[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    return table;
}

StudyTable read_study_table_file(const std::string& path, bool se_column) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path);
    return read_study_table(in, se_column);
}

Dataset StudyTable::to_dataset(const std::vector<std::string>& names) const {
    const auto K = y.size();
    std::vector<Eigen::Index> cols;
    if (names.empty()) {
        for (Eigen::Index c = 0; c < covariates.cols(); ++c) cols.push_back(c);
    } else {
        for (const auto& name : names) {
            const auto it = std::find(covariate_names.begin(), covariate_names.end(), name);
            if (it == covariate_names.end())
                throw CsvError("unknown covariate column: " + name);
            cols.push_back(it - covariate_names.begin());
        }
    }
    Matrix X(K, 1 + static_cast<Eigen::Index>(cols.size()));
    X.col(0).setOnes();
    for (std::size_t c = 0; c < cols.size(); ++c)
        X.col(1 + static_cast<Eigen::Index>(c)) = covariates.col(cols[c]);
    Vector sigma2 = third_column_is_se ? se_or_var.array().square().matrix() : se_or_var;
    return Dataset(y, sigma2, X);
}

Config read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    Config cfg;
    std::string line;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            std::ostringstream msg;
            msg << path << ":" << row << ": expected 'key = value'";
            throw std::runtime_error(msg.str());
        }
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        cfg[trim(line.substr(0, eq))] = value;
    }
    return cfg;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& f : split(s, ','))
        if (!f.empty()) out.push_back(std::stod(f));
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& f : split(s, ','))
        if (!f.empty()) out.push_back(std::stoi(f));
    return out;
}

}  // namespace metabr
