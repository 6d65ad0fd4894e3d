#include "hifdta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace hifdta::metrics {
namespace {

void check_sizes(std::span<const double> y, std::span<const double> yhat, std::size_t min, const char* what) {
  if (y.size() != yhat.size())
    throw std::domain_error(std::string(what) + ": length mismatch " + std::to_string(y.size()) + " vs " +
                            std::to_string(yhat.size()));
  if (y.size() < min) throw std::domain_error(std::string(what) + ": needs at least " + std::to_string(min) + " samples");
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Fenwick tree over prediction ranks.
struct Fenwick {
  std::vector<std::uint64_t> t;
  explicit Fenwick(std::size_t n) : t(n + 1, 0) {}
  void add(std::size_t i) {
    for (++i; i < t.size(); i += i & (~i + 1)) ++t[i];
  }
  std::uint64_t prefix(std::size_t i) const {  // count of ranks < i
    std::uint64_t s = 0;
    for (; i > 0; i -= i & (~i + 1)) s += t[i];
    return s;
  }
};

}  // namespace

double mse(std::span<const double> y, std::span<const double> yhat) {
  check_sizes(y, yhat, 1, "mse");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s / y.size();
}

double pcc(std::span<const double> y, std::span<const double> yhat) {
  check_sizes(y, yhat, 2, "pcc");
  const double my = mean_of(y), mp = mean_of(yhat);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxy += (y[i] - my) * (yhat[i] - mp);
    sxx += (y[i] - my) * (y[i] - my);
    syy += (yhat[i] - mp) * (yhat[i] - mp);
  }
  if (sxx == 0 || syy == 0) throw std::domain_error("pcc: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double concordance_index(std::span<const double> y, std::span<const double> yhat) {
  check_sizes(y, yhat, 2, "concordance_index");
  const std::size_t n = y.size();
  std::vector<double> levels(yhat.begin(), yhat.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::size_t> rank(n), order(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = std::lower_bound(levels.begin(), levels.end(), yhat[i]) - levels.begin();
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });

  // Walk true values upwards; every earlier group has a strictly smaller y.
  Fenwick seen(levels.size());
  std::uint64_t pairs = 0, twice_credit = 0, inserted = 0;
  for (std::size_t g = 0; g < n;) {
    std::size_t e = g;
    while (e < n && y[order[e]] == y[order[g]]) ++e;
    for (std::size_t k = g; k < e; ++k) {
      const std::size_t r = rank[order[k]];
      const std::uint64_t below = seen.prefix(r), tied = seen.prefix(r + 1) - below;
      twice_credit += 2 * below + tied;
      pairs += inserted;
    }
    for (std::size_t k = g; k < e; ++k) seen.add(rank[order[k]]);
    inserted += e - g;
    g = e;
  }
  if (pairs == 0) throw std::domain_error("concordance_index: no comparable pairs");
  return static_cast<double>(twice_credit) / 2.0 / static_cast<double>(pairs);
}

double rm_squared(std::span<const double> y, std::span<const double> yhat) {
  check_sizes(y, yhat, 2, "rm_squared");
  const double r = pcc(y, yhat);
  const double r2 = r * r;
  double syp = 0, spp = 0;
  for (std::size_t i = 0; i < y.size(); ++i) syp += y[i] * yhat[i], spp += yhat[i] * yhat[i];
  if (spp == 0) throw std::domain_error("rm_squared: predictions are all zero");
  const double k = syp / spp, my = mean_of(y);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    num += (y[i] - k * yhat[i]) * (y[i] - k * yhat[i]);
    den += (y[i] - my) * (y[i] - my);
  }
  const double r02 = 1.0 - num / den;
  return r2 * (1.0 - std::sqrt(std::fabs(r2 - r02)));
}

EvalReport evaluate(std::span<const double> y, std::span<const double> yhat) {
  return {concordance_index(y, yhat), rm_squared(y, yhat), pcc(y, yhat), mse(y, yhat), y.size()};
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["ci"] = r.ci;
  j["rm2"] = r.rm2;
  j["pcc"] = r.pcc;
  j["mse"] = r.mse;
  j["n"] = r.n;
  return j.dump();
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %8s %8s\n", "split", "n", "CI", "MSE", "PCC", "rm2");
  out += line;
  for (const auto& [name, r] : rows) {
    std::snprintf(line, sizeof line, "%-12s %8zu %8.4f %8.4f %8.4f %8.4f\n", name.c_str(), r.n, r.ci, r.mse, r.pcc,
                  r.rm2);
    out += line;
  }
  return out;
}

}  // namespace hifdta::metrics
