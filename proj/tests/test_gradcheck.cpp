#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lgc3d/gradcheck.hpp"
#include "lgc3d/ops.hpp"
#include "lgc3d/rng.hpp"

using namespace lgc3d;

TEST_CASE("a correct backward rule passes") {
  Rng rng(1);
  Tensor<double> xv({6});
  for (int64_t i = 0; i < 6; ++i) xv[i] = rng.normal();
  auto x = ad::make_param(xv);
  auto loss = [&] { return ad::sum_all(ad::scale(x, 2.0)); };
  auto res = finite_difference_check<double>(loss, {x}, 1e-5);
  CHECK(res.entries == 6);
  CHECK(res.ok(1e-6));
}

TEST_CASE("a wrong backward rule is flagged") {
  // forward computes sum(x); backward claims the gradient is 1.5
  auto x = ad::make_param(Tensor<double>::full({4}, 0.3));
  auto loss = [&] {
    Tensor<double> v({1});
    for (int64_t i = 0; i < 4; ++i) v[0] += x->value[i];
    return ad::make_op<double>(std::move(v), {x}, [&x](ad::Node<double>& self) {
      Tensor<double>& g = x->ensure_grad();
      for (int64_t i = 0; i < 4; ++i) g[i] += 1.5 * self.grad[0];
    }, "lying_sum");
  };
  auto res = finite_difference_check<double>(loss, {x}, 1e-5);
  CHECK_FALSE(res.ok(1e-4));
  CHECK(res.max_rel_err > 0.1);
}

TEST_CASE("a sign error is flagged") {
  auto x = ad::make_param(Tensor<double>::full({3}, 1.0));
  auto loss = [&] {
    Tensor<double> v({1});
    for (int64_t i = 0; i < 3; ++i) v[0] += x->value[i];
    return ad::make_op<double>(std::move(v), {x}, [&x](ad::Node<double>& self) {
      Tensor<double>& g = x->ensure_grad();
      for (int64_t i = 0; i < 3; ++i) g[i] -= self.grad[0];
    }, "negated_sum");
  };
  CHECK_FALSE(finite_difference_check<double>(loss, {x}, 1e-5).ok(1e-4));
}

TEST_CASE("entry sampling caps the probes per parameter") {
  auto x = ad::make_param(Tensor<double>::full({100}, 0.5));
  auto loss = [&] { return ad::sum_all(x); };
  auto res = finite_difference_check<double>(loss, {x}, 1e-5, 1e-7, 10);
  CHECK(res.entries <= 10);
  CHECK(res.entries > 0);
  CHECK(res.ok(1e-6));
}

TEST_CASE("no probed entries never passes") {
  auto x = ad::make_param(Tensor<double>::full({1}, 1.0));
  auto always = [&] { return ad::sum_all(x); };
  auto res = finite_difference_check<double>(always, std::vector<ad::NodePtr<double>>{}, 1e-5);
  CHECK(res.entries == 0);
  CHECK_FALSE(res.ok(1.0));
}
