#pragma once

#include <istream>
#include <map>
#include <string>
#include <vector>

#include "metabr/model.hpp"

namespace metabr {

/// CSV mirror of Dataset: header `study,y,se` (or `var`) plus optional
/// covariate columns. UTF-8, decimal point.
struct StudyTable {
    std::vector<std::string> study;
    Vector y;
    Vector se_or_var;          // as given in the file
    bool third_column_is_se = true;
    Matrix covariates;         // K x (named columns), may have 0 columns
    std::vector<std::string> covariate_names;

    // Dataset with an intercept column followed by the selected covariates.
    // `names` empty selects all covariate columns in file order.
    Dataset to_dataset(const std::vector<std::string>& names = {}) const;
};

struct CsvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// `se_column` declares whether the third column holds standard errors
// (true) or variances (false); never inferred from the header name.
StudyTable read_study_table(std::istream& in, bool se_column);
StudyTable read_study_table_file(const std::string& path, bool se_column);

// Flat `key = value` config tree ('#' comments, blank lines ignored).
using Config = std::map<std::string, std::string>;
Config read_config_file(const std::string& path);

std::vector<double> parse_double_list(const std::string& s);
std::vector<int> parse_int_list(const std::string& s);

}  // namespace metabr
