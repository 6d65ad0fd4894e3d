#pragma once

// Regression metrics for affinity prediction. Undefined cases (too few
// samples, zero variance, no comparable pairs) raise std::domain_error.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hifdta::metrics {

double mse(std::span<const double> y, std::span<const double> yhat);
double pcc(std::span<const double> y, std::span<const double> yhat);
// Pairs with equal true values are skipped; prediction ties count one half.
double concordance_index(std::span<const double> y, std::span<const double> yhat);
double rm_squared(std::span<const double> y, std::span<const double> yhat);

struct EvalReport {
  double ci = 0, rm2 = 0, pcc = 0, mse = 0;
  std::size_t n = 0;
};

EvalReport evaluate(std::span<const double> y, std::span<const double> yhat);

std::string to_json(const EvalReport& r);
// One row per labelled report, with a header.
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace hifdta::metrics
