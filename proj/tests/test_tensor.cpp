#include "catch2/catch_amalgamated.hpp"
#include "haqae/grad_check.hpp"
#include "haqae/tensor.hpp"

using haqae::Tensor;
using haqae::Tape;
using haqae::TapeScope;
using T = Tensor<double>;

namespace {

std::vector<double> rand_vals(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("matmul with identity returns the other operand") {
  T id = T::from({2, 2}, {1, 0, 0, 1});
  T m = T::from({2, 2}, {1.5, -2.0, 3.25, 4.0});
  T out = haqae::matmul(id, m);
  REQUIRE(out.values() == m.values());
}

TEST_CASE("softmax of a constant row is uniform") {
  T out = haqae::softmax_rows(T::from({1, 2}, {0.0, 0.0}));
  REQUIRE(out.value(0) == Catch::Approx(0.5));
  REQUIRE(out.value(1) == Catch::Approx(0.5));
}

TEST_CASE("squared l2 distance of a unit displacement is 1") {
  T a = T::from({1, 2}, {1, 0});
  T b = T::from({1, 2}, {0, 0});
  REQUIRE(haqae::squared_l2_distance(a, b).item() == 1.0);
}

TEST_CASE("d(x^2)/dx = 2x") {
  T x = T::param({1, 1}, {3.0});
  Tape<double> tape;
  TapeScope<double> scope(tape);
  T loss = haqae::multiply(x, x);
  haqae::backward(tape, loss);
  REQUIRE(x.grad()[0] == 6.0);
}

TEST_CASE("sum of softmax is constant: zero gradient") {
  T v = T::param({1, 4}, {0.3, -0.7, 1.1, 0.2});
  Tape<double> tape;
  TapeScope<double> scope(tape);
  T loss = haqae::sum_all(haqae::softmax_rows(v));
  haqae::backward(tape, loss);
  for (double g : v.grad()) REQUIRE(std::abs(g) < 1e-15);
}

TEST_CASE("stop_gradient is the identity forward") {
  T x = T::from({1, 2}, {1, 2});
  T y = haqae::stop_gradient(x);
  REQUIRE(y.values() == x.values());
}

TEST_CASE("stop_gradient freezes one factor of a product") {
  // loss = sg(x) * x at x=2: derivative is sg(x)=2, not 2x=4.
  T x = T::param({1, 1}, {2.0});
  Tape<double> tape;
  TapeScope<double> scope(tape);
  T loss = haqae::multiply(haqae::stop_gradient(x), x);
  haqae::backward(tape, loss);
  REQUIRE(x.grad()[0] == 2.0);
}

TEST_CASE("commit-style loss sends no gradient into the frozen embedding") {
  T f = T::param({1, 3}, {0.2, -0.4, 0.9});
  T e = T::param({1, 3}, {0.1, 0.1, 0.1});
  Tape<double> tape;
  TapeScope<double> scope(tape);
  T loss = haqae::scale(haqae::squared_l2_distance(f, haqae::stop_gradient(e)), 0.25);
  haqae::backward(tape, loss);
  REQUIRE(e.grad().empty());  // no contribution, grad never touched
  REQUIRE(f.grad()[0] == Catch::Approx(0.25 * 2 * (0.2 - 0.1)));
}

TEST_CASE("every op matches finite differences on 100 random inputs") {
  std::mt19937_64 rng(414);
  // Each entry builds a scalar from randomly drawn leaves through one op.
  using Builder = std::function<double(std::mt19937_64&)>;
  auto check = [](std::function<T()> fn, std::vector<T> leaves) {
    return haqae::finite_diff_check<double>([&] { return fn(); }, leaves, 1e-5);
  };
  std::vector<std::pair<const char*, Builder>> ops;
  ops.emplace_back("matmul", [&](std::mt19937_64& r) {
    T a = T::param({2, 3}, rand_vals(6, r)), b = T::param({3, 2}, rand_vals(6, r));
    return check([&] { return haqae::mean_all(haqae::matmul(a, b)); }, {a, b});
  });
  ops.emplace_back("matmul_nt", [&](std::mt19937_64& r) {
    T a = T::param({2, 3}, rand_vals(6, r)), b = T::param({4, 3}, rand_vals(12, r));
    return check([&] { return haqae::mean_all(haqae::matmul(a, b, true)); }, {a, b});
  });
  ops.emplace_back("add", [&](std::mt19937_64& r) {
    T a = T::param({2, 3}, rand_vals(6, r)), b = T::param({2, 3}, rand_vals(6, r));
    return check([&] { return haqae::sum_all(haqae::add(a, b)); }, {a, b});
  });
  ops.emplace_back("add_bias_row", [&](std::mt19937_64& r) {
    T a = T::param({3, 2}, rand_vals(6, r)), b = T::param({1, 2}, rand_vals(2, r));
    return check([&] { return haqae::sum_all(haqae::tanh_op(haqae::add(a, b))); }, {a, b});
  });
  ops.emplace_back("multiply", [&](std::mt19937_64& r) {
    T a = T::param({2, 2}, rand_vals(4, r)), b = T::param({2, 2}, rand_vals(4, r));
    return check([&] { return haqae::sum_all(haqae::multiply(a, b)); }, {a, b});
  });
  ops.emplace_back("concat_slice", [&](std::mt19937_64& r) {
    T a = T::param({2, 3}, rand_vals(6, r)), b = T::param({1, 3}, rand_vals(3, r));
    return check(
        [&] {
          T c = haqae::concat_rows<double>({a, b});
          return haqae::sum_all(haqae::multiply(haqae::slice_rows(c, 1, 2),
                                                haqae::slice_rows(c, 1, 2)));
        },
        {a, b});
  });
  ops.emplace_back("concat_cols", [&](std::mt19937_64& r) {
    T a = T::param({2, 2}, rand_vals(4, r)), b = T::param({2, 1}, rand_vals(2, r));
    return check([&] { return haqae::mean_all(haqae::tanh_op(haqae::concat_cols<double>({a, b}))); },
                 {a, b});
  });
  ops.emplace_back("embedding_lookup", [&](std::mt19937_64& r) {
    T tab = T::param({4, 3}, rand_vals(12, r));
    return check(
        [&] { return haqae::sum_all(haqae::tanh_op(haqae::embedding_lookup(tab, {2, 0, 2}))); },
        {tab});
  });
  ops.emplace_back("tanh", [&](std::mt19937_64& r) {
    T a = T::param({2, 3}, rand_vals(6, r));
    return check([&] { return haqae::sum_all(haqae::tanh_op(a)); }, {a});
  });
  ops.emplace_back("sigmoid", [&](std::mt19937_64& r) {
    T a = T::param({2, 3}, rand_vals(6, r));
    return check([&] { return haqae::sum_all(haqae::sigmoid(a)); }, {a});
  });
  ops.emplace_back("softmax_rows", [&](std::mt19937_64& r) {
    T a = T::param({2, 4}, rand_vals(8, r));
    T w = T::from({2, 4}, rand_vals(8, r));
    return check([&] { return haqae::sum_all(haqae::multiply(haqae::softmax_rows(a), w)); }, {a});
  });
  ops.emplace_back("log", [&](std::mt19937_64& r) {
    auto vals = rand_vals(4, r);
    for (auto& v : vals) v = 0.5 + std::abs(v);  // keep strictly positive
    T a = T::param({1, 4}, vals);
    return check([&] { return haqae::sum_all(haqae::log_op(a)); }, {a});
  });
  ops.emplace_back("mean_rows", [&](std::mt19937_64& r) {
    T a = T::param({3, 2}, rand_vals(6, r));
    return check([&] { return haqae::sum_all(haqae::tanh_op(haqae::mean_rows(a))); }, {a});
  });
  ops.emplace_back("mean_all", [&](std::mt19937_64& r) {
    T a = T::param({2, 3}, rand_vals(6, r));
    return check([&] { return haqae::mean_all(haqae::multiply(a, a)); }, {a});
  });
  ops.emplace_back("squared_l2", [&](std::mt19937_64& r) {
    T a = T::param({1, 4}, rand_vals(4, r)), b = T::param({1, 4}, rand_vals(4, r));
    return check([&] { return haqae::squared_l2_distance(a, b); }, {a, b});
  });
  ops.emplace_back("scale", [&](std::mt19937_64& r) {
    T a = T::param({2, 2}, rand_vals(4, r));
    return check([&] { return haqae::sum_all(haqae::scale(a, 3.0)); }, {a});
  });

  for (auto& [name, builder] : ops) {
    INFO(name);
    for (int i = 0; i < 100; ++i) REQUIRE(builder(rng) < 1e-6);
  }
}

TEST_CASE("random 5-op composite matches finite differences") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    T a = T::param({2, 3}, rand_vals(6, rng));
    T b = T::param({3, 3}, rand_vals(9, rng));
    T c = T::param({1, 3}, rand_vals(3, rng));
    double err = haqae::finite_diff_check<double>(
        [&] {
          T h = haqae::tanh_op(haqae::add(haqae::matmul(a, b), c));   // ops 1-3
          T s = haqae::softmax_rows(h);                               // op 4
          return haqae::mean_all(haqae::multiply(s, h));              // op 5 (+reduce)
        },
        {a, b, c}, 1e-5);
    REQUIRE(err < 1e-6);
  }
}

TEST_CASE("finite differences are machine-exact on a linear function") {
  T x = T::param({1, 3}, {0.3, -1.2, 0.8});
  double err =
      haqae::finite_diff_check<double>([&] { return haqae::sum_all(haqae::scale(x, 3.0)); }, {x}, 1e-5);
  REQUIRE(err < 1e-10);
}

TEST_CASE("fan-out accumulates both adjoint contributions") {
  std::mt19937_64 rng(7);
  T x = T::param({1, 3}, rand_vals(3, rng));
  T a = T::from({1, 3}, rand_vals(3, rng));
  T b = T::from({1, 3}, rand_vals(3, rng));
  // loss = sum(x*a) + sum(x*b): x consumed by two multiplies.
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    T loss = haqae::add(haqae::sum_all(haqae::multiply(x, a)),
                        haqae::sum_all(haqae::multiply(x, b)));
    haqae::backward(tape, loss);
  }
  // Single-consumer rewrite: loss = sum(x*(a+b)).
  T x2 = T::param({1, 3}, x.values());
  Tape<double> tape2;
  {
    TapeScope<double> scope(tape2);
    T loss = haqae::sum_all(haqae::multiply(x2, haqae::add(a, b)));
    haqae::backward(tape2, loss);
  }
  for (std::size_t i = 0; i < 3; ++i)
    REQUIRE(x.grad()[i] == Catch::Approx(x2.grad()[i]).margin(1e-14));
}

TEST_CASE("stop_gradient equals a fresh constant leaf, bitwise") {
  std::mt19937_64 rng(21);
  T x = T::param({1, 4}, rand_vals(4, rng));
  T w = T::param({4, 4}, rand_vals(16, rng));
  auto run = [&](bool use_sg) {
    x.zero_grad();
    w.zero_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    T h = haqae::tanh_op(haqae::matmul(x, w));
    T frozen = use_sg ? haqae::stop_gradient(h) : T::from(h.shape(), h.values());
    T loss = haqae::sum_all(haqae::multiply(frozen, haqae::matmul(x, w)));
    haqae::backward(tape, loss);
    auto gx = x.grad(), gw = w.grad();
    return std::make_pair(gx, gw);
  };
  auto [gx1, gw1] = run(true);
  auto [gx2, gw2] = run(false);
  REQUIRE(gx1 == gx2);  // bitwise
  REQUIRE(gw1 == gw2);
}

TEST_CASE("identical graphs give bitwise-identical values and gradients") {
  std::mt19937_64 rng(3);
  auto vals_a = rand_vals(6, rng), vals_b = rand_vals(6, rng);
  auto run = [&] {
    T a = T::param({2, 3}, vals_a);
    T b = T::param({3, 2}, vals_b);
    Tape<double> tape;
    TapeScope<double> scope(tape);
    T loss = haqae::mean_all(haqae::softmax_rows(haqae::matmul(a, b)));
    haqae::backward(tape, loss);
    return std::make_tuple(loss.item(), a.grad(), b.grad());
  };
  REQUIRE(run() == run());
}

TEST_CASE("error contracts") {
  T a = T::from({2, 3}, std::vector<double>(6, 1.0));
  T b = T::from({2, 3}, std::vector<double>(6, 1.0));
  REQUIRE_THROWS(haqae::matmul(a, b));                       // inner dims mismatch
  REQUIRE_THROWS(haqae::log_op(T::scalar(0.0)));             // log of non-positive
  REQUIRE_THROWS(haqae::log_op(T::scalar(-1.0)));
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    T x = T::param({1, 2}, {1, 2});
    T y = haqae::multiply(x, x);
    REQUIRE_THROWS(haqae::backward(tape, y));                // non-scalar loss
  }
  Tape<double> other;
  T off_tape = T::scalar(1.0);
  REQUIRE_THROWS(haqae::backward(other, off_tape));          // loss not on tape
}
