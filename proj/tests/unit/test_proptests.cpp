#include <gtest/gtest.h>

#include "attnpool/proptests.hpp"

using namespace attnpool;

namespace {

void expect_passed(const props::SuiteResult& r) {
  for (const auto& c : r.checks) EXPECT_TRUE(c.passed) << r.suite << "/" << c.name << ": " << c.detail;
  EXPECT_FALSE(r.checks.empty());
}

}  // namespace

TEST(Props, GradientSuite) { expect_passed(props::run_gradient_suite(0)); }
TEST(Props, OracleSuite) { expect_passed(props::run_oracle_suite(0)); }
TEST(Props, InvariantSuite) { expect_passed(props::run_invariant_suite(0)); }

TEST(Props, FiniteDifferenceAcceptsRightAndCatchesWrongGradient) {
  Matrix x(2, 2, std::vector<double>{0.5, -1.0, 1.5, 2.0});
  const double ok = props::finite_difference_error({&x}, [&](ad::Tape& t) {
    ad::Var v = t.parameter(x);
    return std::pair{ad::sum(ad::mul(v, v)), std::vector<ad::Var>{v}};
  });
  EXPECT_LT(ok, 1e-6);
  // Squares the input but reports the gradient of the identity.
  const double bad = props::finite_difference_error({&x}, [&](ad::Tape& t) {
    ad::Var v = t.parameter(x);
    Matrix sq = v.value();
    for (double& e : sq.values()) e *= e;
    ad::Var y = t.record(std::move(sq), {v}, [v](ad::Tape& tape, const Matrix& g, const Matrix&) { tape.accumulate(v, g); });
    return std::pair{ad::sum(y), std::vector<ad::Var>{v}};
  });
  EXPECT_GT(bad, 0.1);
}

TEST(Props, OraclesAgreeOnSmallCases) {
  Graph k4;
  k4.n = 4;
  k4.edges = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  std::vector<std::size_t> per;
  EXPECT_EQ(props::triangles_by_enumeration(k4, &per), 4u);
  EXPECT_EQ(per, (std::vector<std::size_t>{3, 3, 3, 3}));
  EXPECT_EQ(props::topk_oracle({0.1, 0.4, 0.3, 0.2}, 1, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_DOUBLE_EQ(props::pairwise_auc({0.8, 0.4, 0.4, 0.1}, {true, true, false, false}), 0.875);
}
