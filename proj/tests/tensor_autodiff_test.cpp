#include <doctest.h>

#include <cmath>

#include "tmr/grad_check.hpp"
#include "tmr/gradcheck_suites.hpp"
#include "tmr/tape.hpp"
#include "test_util.hpp"

using namespace tmr;
using tmr::test::fd_grad;
using tmr::test::max_rel_err;
using tmr::test::random_tensor;

using TapeD = Tape<double>;

TEST_CASE("matmul forward") {
  TapeD tape;
  auto eye = tape.input(Tensor<double>::from(2, 2, {1, 0, 0, 1}));
  auto b = tape.input(Tensor<double>::from(2, 2, {3, 4, 5, 6}));
  auto c = tape.matmul(eye, b);
  CHECK(tape.value(c).data == std::vector<double>{3, 4, 5, 6});

  auto r = tape.matmul(tape.input(Tensor<double>::from(1, 2, {1, 2})),
                       tape.input(Tensor<double>::from(2, 1, {3, 4})));
  CHECK(tape.value(r).data[0] == doctest::Approx(11).epsilon(1e-15));

  CHECK_THROWS_AS((void)tape.matmul(b, tape.input(Tensor<double>::zeros(3, 2))), ShapeError);
}

TEST_CASE("matmul gradient matches central finite differences") {
  Rng rng(101);
  ParamSet<double> params;
  Tensor<double>& a = params.create("a", 3, 4);
  Tensor<double>& b = params.create("b", 4, 2);
  a = random_tensor(3, 4, rng);
  b = random_tensor(4, 2, rng);
  a.requires_grad = b.requires_grad = true;

  auto f = [&]() {
    TapeD tape;
    auto c = tape.matmul(tape.param(a), tape.param(b));
    return tape.value(tape.sum_all(tape.mul(c, c))).data[0];
  };
  params.zero_grads();
  {
    TapeD tape;
    auto c = tape.matmul(tape.param(a), tape.param(b));
    tape.backward(tape.sum_all(tape.mul(c, c)));
  }
  CHECK(max_rel_err(a.grad, fd_grad(a, f).data) < 1e-6);
  CHECK(max_rel_err(b.grad, fd_grad(b, f).data) < 1e-6);
}

TEST_CASE("softmax_axis forward") {
  TapeD tape;
  auto flat = tape.softmax(tape.input(Tensor<double>::from(1, 3, {0, 0, 0})), Axis::Rows);
  for (double v : tape.value(flat).data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));

  auto big = tape.softmax(tape.input(Tensor<double>::from(1, 2, {1000, 1000})), Axis::Rows);
  CHECK(tape.value(big).data[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(std::isfinite(tape.value(big).data[1]));

  auto cols = tape.softmax(tape.input(Tensor<double>::from(2, 2, {1, 2, 3, 0})), Axis::Cols);
  const auto& v = tape.value(cols);
  CHECK(v.at(0, 0) + v.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.at(0, 1) + v.at(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax slices sum to one for random inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t r = 1 + rng.index(8), c = 1 + rng.index(8);
    TapeD tape;
    auto x = tape.input(random_tensor(r, c, rng, -50, 50));
    auto sr = tape.softmax(x, Axis::Rows);
    auto sc = tape.softmax(x, Axis::Cols);
    for (std::size_t i = 0; i < r; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < c; ++j) sum += tape.value(sr).at(i, j);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    for (std::size_t j = 0; j < c; ++j) {
      double sum = 0;
      for (std::size_t i = 0; i < r; ++i) sum += tape.value(sc).at(i, j);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("concat_cols forward and identity") {
  TapeD tape;
  auto c = tape.concat_cols({tape.input(Tensor<double>::from(1, 1, {1})),
                             tape.input(Tensor<double>::from(1, 1, {2}))});
  CHECK(tape.value(c).data == std::vector<double>{1, 2});

  auto single = tape.input(Tensor<double>::from(2, 2, {1, 2, 3, 4}));
  auto same = tape.concat_cols({single});
  CHECK(tape.value(same).data == tape.value(single).data);

  CHECK_THROWS_AS((void)tape.concat_cols({tape.input(Tensor<double>::zeros(2, 2)),
                                          tape.input(Tensor<double>::zeros(3, 2))}),
                  ShapeError);
}

TEST_CASE("concat_cols gradient splits by column range") {
  Rng rng(11);
  Tensor<double> a = random_tensor(2, 2, rng);
  Tensor<double> b = random_tensor(2, 3, rng);
  a.requires_grad = b.requires_grad = true;
  Tensor<double> weights = random_tensor(2, 5, rng);

  auto f = [&]() {
    TapeD tape;
    auto c = tape.concat_cols({tape.param(a), tape.param(b)});
    return tape.value(tape.sum_all(tape.mul(c, tape.input(weights)))).data[0];
  };
  a.ensure_grad();
  b.ensure_grad();
  {
    TapeD tape;
    auto c = tape.concat_cols({tape.param(a), tape.param(b)});
    CHECK(tape.value(c).rows == 2);
    CHECK(tape.value(c).cols == 5);
    tape.backward(tape.sum_all(tape.mul(c, tape.input(weights))));
  }
  CHECK(max_rel_err(a.grad, fd_grad(a, f).data) < 1e-6);
  CHECK(max_rel_err(b.grad, fd_grad(b, f).data) < 1e-6);
}

TEST_CASE("elementwise ops") {
  TapeD tape;
  auto m = tape.mul(tape.input(Tensor<double>::from(1, 2, {2, 3})),
                    tape.input(Tensor<double>::from(1, 2, {4, 5})));
  CHECK(tape.value(m).data == std::vector<double>{8, 15});

  auto r = tape.relu(tape.input(Tensor<double>::from(1, 2, {-1, 2})));
  CHECK(tape.value(r).data == std::vector<double>{0, 2});

  CHECK_THROWS_AS((void)tape.add(tape.input(Tensor<double>::zeros(2, 2)),
                                 tape.input(Tensor<double>::zeros(2, 3))),
                  ShapeError);
}

TEST_CASE("sub gradient matches finite differences on random 3x3") {
  Rng rng(13);
  Tensor<double> a = random_tensor(3, 3, rng);
  Tensor<double> b = random_tensor(3, 3, rng);
  a.requires_grad = b.requires_grad = true;
  Tensor<double> w = random_tensor(3, 3, rng);

  auto f = [&]() {
    TapeD tape;
    auto d = tape.sub(tape.param(a), tape.param(b));
    return tape.value(tape.sum_all(tape.mul(d, tape.input(w)))).data[0];
  };
  a.ensure_grad();
  b.ensure_grad();
  {
    TapeD tape;
    auto d = tape.sub(tape.param(a), tape.param(b));
    tape.backward(tape.sum_all(tape.mul(d, tape.input(w))));
  }
  CHECK(max_rel_err(a.grad, fd_grad(a, f).data) < 1e-6);
  CHECK(max_rel_err(b.grad, fd_grad(b, f).data) < 1e-6);
}

TEST_CASE("scalar broadcast in binary ops") {
  TapeD tape;
  auto x = tape.input(Tensor<double>::from(2, 2, {1, 2, 3, 4}));
  auto s = tape.input(Tensor<double>::scalar(2));
  CHECK(tape.value(tape.mul(x, s)).data == std::vector<double>{2, 4, 6, 8});
  CHECK(tape.value(tape.div(x, s)).data == std::vector<double>{0.5, 1, 1.5, 2});
  CHECK(tape.value(tape.sub(s, x)).data == std::vector<double>{1, 0, -1, -2});

  // gradient flows into the scalar as the sum over the broadcast
  Tensor<double> tau = Tensor<double>::scalar(0.5);
  tau.requires_grad = true;
  auto f = [&]() {
    TapeD t2;
    auto y = t2.div(t2.input(Tensor<double>::from(2, 2, {1, 2, 3, 4})), t2.param(tau));
    return t2.value(t2.sum_all(y)).data[0];
  };
  tau.ensure_grad();
  {
    TapeD t2;
    auto y = t2.div(t2.input(Tensor<double>::from(2, 2, {1, 2, 3, 4})), t2.param(tau));
    t2.backward(t2.sum_all(y));
  }
  CHECK(max_rel_err(tau.grad, fd_grad(tau, f).data) < 1e-7);
}

TEST_CASE("reduce ops") {
  TapeD tape;
  auto mx = tape.max_rows(tape.input(Tensor<double>::from(2, 2, {1, 5, 3, 2})));
  CHECK(tape.value(mx).data == std::vector<double>{3, 5});

  auto mr = tape.mean_rows(tape.input(Tensor<double>::from(1, 3, {4, 5, 6})));
  CHECK(tape.value(mr).data == std::vector<double>{4, 5, 6});

  CHECK(tape.value(tape.sum_all(tape.input(Tensor<double>::from(2, 2, {1, 2, 3, 4})))).data[0] ==
        10);
}

TEST_CASE("max_rows ties route gradient to the lowest row index") {
  Tensor<double> x = Tensor<double>::from(3, 2, {2, 1, 2, 7, 2, 7});
  x.requires_grad = true;
  x.ensure_grad();
  TapeD tape;
  auto mx = tape.max_rows(tape.param(x));
  tape.backward(tape.sum_all(mx));
  // column 0: all three rows tie at 2 -> row 0 wins; column 1: rows 1 and 2 tie at 7 -> row 1.
  CHECK(x.grad == std::vector<double>{1, 0, 0, 1, 0, 0});

  // Perturbation oracle: nudging the winning entry moves the max, nudging a
  // tied loser (downward) does not.
  auto value = [&]() {
    TapeD t2;
    return t2.value(t2.sum_all(t2.max_rows(t2.param(x)))).data[0];
  };
  double base = value();
  x.data[0] += 1e-3;
  CHECK(value() == doctest::Approx(base + 1e-3).epsilon(1e-9));
  x.data[0] -= 1e-3;
  x.data[2] -= 1e-3;  // tied loser in column 0
  CHECK(value() == doctest::Approx(base).epsilon(1e-12));
  x.data[2] += 1e-3;
}

TEST_CASE("l2_distance") {
  TapeD tape;
  auto a = tape.input(Tensor<double>::from(1, 2, {3, 0}));
  auto b = tape.input(Tensor<double>::from(1, 2, {0, 4}));
  CHECK(tape.value(tape.l2_distance(a, b)).data[0] == doctest::Approx(5).epsilon(1e-15));
  CHECK(tape.value(tape.l2_distance(a, a)).data[0] == 0);

  Rng rng(17);
  Tensor<double> x = random_tensor(1, 4, rng, 0.5, 1.5);
  Tensor<double> y = random_tensor(1, 4, rng, -1.5, -0.5);  // distance well above 0.1
  x.requires_grad = y.requires_grad = true;
  auto f = [&]() {
    TapeD t2;
    return t2.value(t2.l2_distance(t2.param(x), t2.param(y))).data[0];
  };
  x.ensure_grad();
  y.ensure_grad();
  {
    TapeD t2;
    t2.backward(t2.l2_distance(t2.param(x), t2.param(y)));
  }
  CHECK(max_rel_err(x.grad, fd_grad(x, f).data) < 1e-6);
  CHECK(max_rel_err(y.grad, fd_grad(y, f).data) < 1e-6);
}

TEST_CASE("cosine_similarity") {
  TapeD tape;
  auto a = tape.input(Tensor<double>::from(1, 2, {1, 2}));
  CHECK(tape.value(tape.cosine_similarity(a, a)).data[0] == doctest::Approx(1).epsilon(1e-12));

  auto e1 = tape.input(Tensor<double>::from(1, 2, {1, 0}));
  auto e2 = tape.input(Tensor<double>::from(1, 2, {0, 1}));
  CHECK(tape.value(tape.cosine_similarity(e1, e2)).data[0] == doctest::Approx(0).epsilon(1e-15));

  auto neg = tape.input(Tensor<double>::from(1, 2, {-1, -2}));
  CHECK(tape.value(tape.cosine_similarity(a, neg)).data[0] ==
        doctest::Approx(-1).epsilon(1e-12));

  // zero-norm input hits the epsilon floor instead of dividing by zero
  auto z = tape.input(Tensor<double>::zeros(1, 2));
  CHECK(std::isfinite(tape.value(tape.cosine_similarity(a, z)).data[0]));
}

TEST_CASE("backward basics") {
  Tensor<double> x = Tensor<double>::from(2, 2, {1, 2, 3, 4});
  x.requires_grad = true;
  x.ensure_grad();
  {
    TapeD tape;
    tape.backward(tape.sum_all(tape.param(x)));
    CHECK(x.grad == std::vector<double>{1, 1, 1, 1});
  }
  x.zero_grad();
  {
    TapeD tape;
    auto p = tape.param(x);
    tape.backward(tape.sum_all(tape.add(p, p)));  // fan-out accumulates
    CHECK(x.grad == std::vector<double>{2, 2, 2, 2});
  }
  {
    TapeD tape;
    CHECK_THROWS_AS(tape.backward(tape.param(x)), ShapeError);  // non-scalar loss
  }
}

TEST_CASE("grad_check on a linear function is exact to h^2") {
  ParamSet<double> params;
  Tensor<double>& w = params.create("w", 1, 4);
  w = Tensor<double>::from(1, 4, {0.3, -1.2, 2.0, 0.7});
  w.requires_grad = true;
  Tensor<double> x = Tensor<double>::from(1, 4, {1, 2, 3, 4});

  auto loss = [&](bool with_grad) {
    Tape<double> tape;
    auto dot = tape.sum_all(tape.mul(tape.param(params.get("w")), tape.input(x)));
    double v = tape.value(dot).data[0];
    if (with_grad) tape.backward(dot);
    return v;
  };
  auto report = grad_check(params, loss, 1e-5);
  CHECK(report.pass(1e-9));
}

TEST_CASE("grad_check flags a corrupted gradient rule") {
  ParamSet<double> params;
  Tensor<double>& w = params.create("w", 2, 2);
  w = Tensor<double>::from(2, 2, {0.5, -0.25, 1.5, 2.0});
  w.requires_grad = true;

  auto loss = [&](bool with_grad) {
    Tape<double> tape;
    auto p = tape.param(params.get("w"));
    auto y = tape.sum_all(tape.mul(p, p));
    double v = tape.value(y).data[0];
    if (with_grad) {
      tape.backward(y);
      params.get("w").grad[3] += 0.5;  // deliberate corruption
    }
    return v;
  };
  auto report = grad_check(params, loss, 1e-5);
  CHECK_FALSE(report.pass(1e-5));
  CHECK(report.worst_entry()->name == "w");
  CHECK(report.worst_entry()->worst_index == 3);
}

TEST_CASE("every op backward matches finite differences (composite graphs)") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto report = gradcheck_tensor_ops(1e-5, seed);
    INFO("seed ", seed, "\n", report.summary(1e-5));
    CHECK(report.pass(1e-5));
  }
}

TEST_CASE("matmul associativity at tolerance") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    TapeD tape;
    auto a = tape.input(random_tensor(4, 4, rng));
    auto b = tape.input(random_tensor(4, 4, rng));
    auto c = tape.input(random_tensor(4, 4, rng));
    auto left = tape.matmul(tape.matmul(a, b), c);
    auto right = tape.matmul(a, tape.matmul(b, c));
    for (std::size_t i = 0; i < 16; ++i) {
      double l = tape.value(left).data[i], r = tape.value(right).data[i];
      CHECK(std::abs(l - r) / std::max(1.0, std::abs(l)) < 1e-10);
    }
  }
}

TEST_CASE("relu is idempotent") {
  Rng rng(29);
  TapeD tape;
  auto x = tape.input(random_tensor(5, 5, rng, -2, 2));
  auto once = tape.relu(x);
  auto twice = tape.relu(once);
  CHECK(tape.value(once).data == tape.value(twice).data);
}

TEST_CASE("deterministic replay: same inputs give bit-identical forward values") {
  auto run = []() {
    Rng rng(31);
    TapeD tape;
    auto a = tape.input(random_tensor(4, 4, rng));
    auto b = tape.input(random_tensor(4, 4, rng));
    auto s = tape.softmax(tape.matmul(a, b), Axis::Rows);
    return tape.value(tape.sum_all(tape.mul(s, s))).data[0];
  };
  CHECK(run() == run());
}
