#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "lgc3d/errors.hpp"
#include "lgc3d/tensor.hpp"

using namespace lgc3d;

TEST_CASE("tensor shape, strides and flat layout") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.numel() == 24);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(2) == 4);
  CHECK(t.strides() == std::vector<int64_t>{12, 4, 1});
  CHECK(t.shape_string() == "[2,3,4]");

  // multi-index view is row-major over the flat buffer
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i);
  CHECK(t(0, 0, 0) == 0.0f);
  CHECK(t(0, 1, 2) == 6.0f);
  CHECK(t(1, 2, 3) == 23.0f);
}

TEST_CASE("tensor constructors and fill") {
  Tensor<double> z = Tensor<double>::zeros({3, 3});
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);

  Tensor<double> f = Tensor<double>::full({2, 2}, 1.5);
  for (int64_t i = 0; i < f.numel(); ++i) CHECK(f[i] == 1.5);

  f.fill(-2.0);
  CHECK(f(1, 1) == -2.0);

  Tensor<float> d = Tensor<float>::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(d(1, 0) == 3.0f);
  CHECK_THROWS_AS(Tensor<float>::from_data({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("tensor rejects non-positive dims") {
  CHECK_THROWS_AS(Tensor<float>({2, 0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>({-1}), ShapeError);
}

TEST_CASE("tensor reshape preserves data and checks numel") {
  Tensor<float> t = Tensor<float>::from_data({2, 3}, {0, 1, 2, 3, 4, 5});
  Tensor<float> r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r(2, 1) == 5.0f);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("check_same_shape") {
  Tensor<float> a({2, 2}), b({2, 2}), c({4});
  CHECK_NOTHROW(check_same_shape(a, b, "test"));
  CHECK_THROWS_AS(check_same_shape(a, c, "test"), ShapeError);
}

TEST_CASE("scalar tensor") {
  Tensor<double> s({1});
  s[0] = 7.0;
  CHECK(s.numel() == 1);
  CHECK(s.rank() == 1);
  CHECK(s[0] == 7.0);
}
