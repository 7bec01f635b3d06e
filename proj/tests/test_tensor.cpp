#include "doctest.h"
#include "qmvos/error.hpp"
#include "qmvos/rng.hpp"
#include "qmvos/tensor.hpp"

using namespace qmvos;

TEST_CASE("data length must match the shape") {
  CHECK_NOTHROW(Tensor({2, 3}, std::vector<double>(6, 0.0)));
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), shape_error);
  CHECK_THROWS_AS(Tensor({2, 0}, std::vector<double>{}), shape_error);
  CHECK_THROWS_AS(Tensor({-1}, std::vector<double>{}), shape_error);
}

TEST_CASE("scalars are rank 0 with one element") {
  Tensor s = Tensor::scalar(2.5);
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s.value() == 2.5);
  CHECK_THROWS_AS(Tensor::zeros({2}).value(), contract_error);
}

TEST_CASE("copies share storage and identity") {
  Tensor a = Tensor::full({4}, 1.0);
  Tensor b = a;
  CHECK(a.id() == b.id());
  CHECK(Tensor::full({4}, 1.0).id() != a.id());
}

TEST_CASE("at() indexes row-major") {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(t.at({0, 0}) == 0);
  CHECK(t.at({0, 2}) == 2);
  CHECK(t.at({1, 0}) == 3);
  CHECK_THROWS_AS(t.at({2, 0}), shape_error);
  CHECK_THROWS_AS(t.at({0}), shape_error);
}

TEST_CASE("splitmix64 matches the published test vector") {
  SplitMix64 rng(0);
  CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
  CHECK(rng.next_u64() == 0x6E789E6AA1B965F4ULL);
  CHECK(rng.next_u64() == 0x06C45D188009454FULL);
}

TEST_CASE("splitmix64 uniform doubles stay in [0,1)") {
  SplitMix64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
