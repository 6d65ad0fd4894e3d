#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "hifdta/metrics.hpp"
#include "hifdta/rng.hpp"

using namespace hifdta::metrics;

namespace {

std::vector<double> random_vector(hifdta::CounterRng& rng, std::size_t n, bool ties) {
  std::vector<double> v(n);
  for (auto& x : v) x = ties ? static_cast<double>(rng.below(6)) : rng.uniform(4.0, 10.0);
  return v;
}

double pearson_squared(const std::vector<double>& y, const std::vector<double>& p) {
  const double r = pcc(y, p);
  return r * r;
}

}  // namespace

TEST_CASE("mse and pcc examples") {
  std::vector<double> y{1, 2, 3}, p{1, 2, 5};
  CHECK(mse(y, p) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(mse(y, y) == 0.0);
  CHECK(pcc(y, y) == 1.0);
  std::vector<double> affine;
  for (double v : y) affine.push_back(2 * v + 3);
  CHECK(pcc(y, affine) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> flat{2, 2, 2};
  CHECK_THROWS_AS(pcc(y, flat), std::domain_error);
  CHECK_THROWS_AS(pcc(std::vector<double>{1}, std::vector<double>{1}), std::domain_error);
  CHECK_THROWS(mse(y, std::vector<double>{1, 2}));
}

TEST_CASE("concordance index examples") {
  std::vector<double> y{1, 2, 3, 4, 5};
  std::vector<double> rev(y.rbegin(), y.rend());
  CHECK(concordance_index(y, y) == 1.0);
  CHECK(concordance_index(y, rev) == 0.0);
  CHECK(concordance_index(y, std::vector<double>(5, 1.0)) == 0.5);
  CHECK_THROWS_AS(concordance_index(std::vector<double>(4, 3.0), y), std::domain_error);
  // Tied true values contribute no pair.
  CHECK(concordance_index(std::vector<double>{1, 1, 2}, std::vector<double>{5, 0, 1}) == 0.5);
}

TEST_CASE("concordance index: brute force and monotone invariance") {
  hifdta::CounterRng rng(17, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    auto y = random_vector(rng, n, trial % 2 == 0);
    auto p = random_vector(rng, n, trial % 3 == 0);
    double credit = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] > y[j]) {
          pairs += 1;
          credit += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
        }
    if (pairs == 0) continue;
    const double ci = concordance_index(y, p);
    CHECK(ci == credit / pairs);
    std::vector<double> warped;
    for (double v : p) warped.push_back(std::exp(3 * v) - 7);
    CHECK(concordance_index(y, warped) == ci);
  }
}

TEST_CASE("rm squared") {
  std::vector<double> y{5.0, 6.2, 7.1, 8.4};
  CHECK(rm_squared(y, y) == doctest::Approx(1.0).epsilon(1e-15));
  hifdta::CounterRng rng(19, 3);
  for (int trial = 0; trial < 30; ++trial) {
    auto a = random_vector(rng, 20, false), b = random_vector(rng, 20, false);
    for (std::size_t i = 0; i < 20; ++i) b[i] = 0.5 * a[i] + 0.5 * b[i];
    CHECK(rm_squared(a, b) <= pearson_squared(a, b) + 1e-15);
  }
  CHECK_THROWS_AS(rm_squared(y, std::vector<double>(4, 0.0)), std::domain_error);
}

TEST_CASE("metrics ignore sample order") {
  hifdta::CounterRng rng(23, 3);
  auto y = random_vector(rng, 40, false), p = random_vector(rng, 40, false);
  EvalReport base = evaluate(y, p);
  std::vector<std::size_t> perm(40);
  for (std::size_t i = 0; i < 40; ++i) perm[i] = i;
  for (std::size_t i = 39; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  std::vector<double> ys, ps;
  for (auto i : perm) {
    ys.push_back(y[i]);
    ps.push_back(p[i]);
  }
  EvalReport shuffled = evaluate(ys, ps);
  CHECK(shuffled.ci == base.ci);
  CHECK(shuffled.mse == doctest::Approx(base.mse).epsilon(1e-14));
  CHECK(shuffled.pcc == doctest::Approx(base.pcc).epsilon(1e-14));
  CHECK(shuffled.rm2 == doctest::Approx(base.rm2).epsilon(1e-12));
  CHECK(base.n == 40);
  CHECK(base.ci >= 0.0);
  CHECK(base.ci <= 1.0);
}

TEST_CASE("report formatting") {
  EvalReport r{0.875, 0.5, 0.75, 0.25, 12};
  const std::string json = to_json(r);
  for (const char* key : {"\"ci\"", "\"rm2\"", "\"pcc\"", "\"mse\"", "\"n\""})
    CHECK(json.find(key) != std::string::npos);
  const std::string table = format_table({{"fold0", r}, {"fold1", r}});
  CHECK(table.find("CI") != std::string::npos);
  CHECK(table.find("fold1") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}
