#include <cmath>

#include "doctest.h"
#include "mf/gradcheck.hpp"
#include "mf/nn.hpp"
#include "mf/ops.hpp"

using namespace mf;
using Td = Tensor<double>;
using Tf = Tensor<float>;

TEST_CASE("tensor invariants: shape vs data length") {
  Td t = Td::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK_THROWS_AS(Td::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("matmul identity") {
  Td a = Td::from({2, 2}, {1, 2, 3, 4});
  Td eye = Td::from({2, 2}, {1, 0, 0, 1});
  Td c = matmul(a, eye);
  CHECK(c.values() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("matmul shape errors name both shapes") {
  Td a = Td::zeros({2, 3});
  Td b = Td::zeros({4, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), ShapeError);
}

TEST_CASE("reduce_sum of ones and its gradient") {
  Td x = Td::ones({3, 3});
  x.set_requires_grad(true);
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    Td s = reduce_sum(x);
    CHECK(s.item() == doctest::Approx(9.0));
    tape.backward(s);
  }
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward accumulates: repeated backward doubles leaf grads") {
  Td x = Td::from({2}, {1.5, -2.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Td y = reduce_sum(mul(x, x));
  tape.backward(y);
  const std::vector<double> g1 = x.grad();
  tape.backward(y);
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * g1[i]));
}

TEST_CASE("shared subexpression accumulates additively") {
  // y = s + s with s = sum(x): dy/dx = 2, identical to the unshared graph
  Td x = Td::from({3}, {0.3, -1.2, 2.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  TapeScope<double> scope(tape);
  Td s = reduce_sum(x);
  Td y = add(s, s);
  tape.backward(y);
  for (double g : x.grad()) CHECK(g == doctest::Approx(2.0));

  // unshared duplicate graph gives the same gradient
  Td x2 = x.detach();
  x2.set_requires_grad(true);
  Td y2 = add(reduce_sum(x2), reduce_sum(x2));
  tape.backward(y2);
  for (size_t i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(x2.grad()[i]));
}

TEST_CASE("concat on empty list is an argument error") {
  std::vector<Td> parts;
  CHECK_THROWS_AS(concat(parts, 0), ValueError);
}

TEST_CASE("elementwise broadcast requires suffix shape") {
  Td a = Td::zeros({2, 3});
  Td b = Td::zeros({2});
  CHECK_THROWS_AS(add(a, b), ShapeError);  // 2 is not a suffix of (2,3)'s tail
  Td c = Td::zeros({3});
  CHECK_NOTHROW(add(a, c));
}

TEST_CASE("core op gradients match finite differences on random 4x5 inputs") {
  // the oracle: central differences, 64-bit, h=1e-5, rel tol 1e-4
  Rng rng(99);
  Td a = Td::randn({4, 5}, rng);
  Td b = Td::randn({4, 5}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto fn = [](const std::vector<Td>& in) {
    Td y = mul(add(in[0], in[1]), sub(in[0], in[1]));
    y = add(y, exp_op(scale(in[0], 0.3)));
    return reduce_sum(mul(y, y));
  };
  auto res = gradcheck::check(fn, {a, b});
  CHECK_MESSAGE(res.ok, res.worst);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gradcheck flags a corrupted gradient") {
  // custom op with a deliberately wrong backward: the checker must fail it
  Td x = Td::from({3}, {0.5, 1.5, -0.7});
  x.set_requires_grad(true);
  auto corrupt_square = [](const Td& in) {
    Td out = Td::zeros(in.shape());
    for (size_t i = 0; i < in.numel(); ++i)
      out.values()[i] = in.values()[i] * in.values()[i];
    if (Tape<double>::current() && in.requires_grad()) {
      out.set_requires_grad(true);
      auto id = in.ptr();
      auto od = out.ptr();
      Tape<double>::current()->record({od}, [id, od] {
        if (!grad_live(*od)) return;
        auto& g = ensure_grad(*id);
        for (size_t i = 0; i < g.size(); ++i)
          g[i] += od->g[i] * 3.0 * id->v[i];  // wrong: should be 2x
      });
    }
    return out;
  };
  auto fn = [&](const std::vector<Td>& in) {
    return reduce_sum(corrupt_square(in[0]));
  };
  auto res = gradcheck::check(fn, {x});
  CHECK_FALSE(res.ok);
}

TEST_CASE("adam: first step with unit gradient") {
  // beta1=0: m = g; bias-corrected v-hat = g^2; update = lr*g/(|g|+eps)
  auto p = make_param("p", Tf::from({1}, {1.0f}));
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    Tf loss = mul(p->value, Tf::ones({1}));
    tape.backward(loss);
  }
  adam_step<float>({p}, 0.1f);
  CHECK(p->value.values()[0] == doctest::Approx(0.9).epsilon(1e-5));
  CHECK(p->step == 1);
}

TEST_CASE("adam: zero gradient leaves the parameter unchanged") {
  auto p = make_param("p", Tf::from({2}, {0.7f, -0.3f}));
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    Tf loss = reduce_sum(mul(p->value, Tf::zeros({2})));
    tape.backward(loss);
  }
  adam_step<float>({p}, 0.5f);
  CHECK(p->value.values()[0] == doctest::Approx(0.7f));
  CHECK(p->value.values()[1] == doctest::Approx(-0.3f));
}

TEST_CASE("adam: two steps with constant gradient match the scalar recurrence") {
  const double g = 0.37, lr = 0.05, b2 = 0.99, eps = 1e-8;
  auto p = make_param("p", Td::from({1}, {2.0}));
  double ref = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    p->value.zero_grad();
    Tape<double> tape;
    {
      TapeScope<double> scope(tape);
      Td loss = mul(p->value, Td::from({1}, {g}));
      tape.backward(loss);
    }
    adam_step<double>({p}, lr);
    // oracle recurrence
    m = g;  // beta1 = 0
    v = b2 * v + (1 - b2) * g * g;
    const double vhat = v / (1.0 - std::pow(b2, t));
    ref -= lr * m / (std::sqrt(vhat) + eps);
    CHECK(p->value.values()[0] == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("adam: missing gradient raises a state error naming the parameter") {
  auto p = make_param("enc.block.w", Tf::ones({2}));
  CHECK_THROWS_WITH_AS(adam_step<float>({p}, 0.1f),
                       doctest::Contains("enc.block.w"), StateError);
}

TEST_CASE("checkpoint round-trips parameters, moments and step") {
  Rng rng(5);
  auto a = make_param("m.a", Tf::randn({3, 2}, rng));
  auto b = make_param("m.b", Tf::randn({4}, rng));
  Tape<float> tape;
  {
    TapeScope<float> scope(tape);
    Tf loss = add(reduce_sum(mul(a->value, a->value)),
                  reduce_sum(mul(b->value, b->value)));
    tape.backward(loss);
  }
  adam_step<float>({a, b}, 0.01f);
  const std::string path = "ckpt_roundtrip_test.bin";
  save_checkpoint<float>(path, {a, b}, 123);

  auto a2 = make_param("m.a", Tf::zeros({3, 2}));
  auto b2 = make_param("m.b", Tf::zeros({4}));
  const int64_t step = load_checkpoint<float>(path, {a2, b2});
  CHECK(step == 123);
  CHECK(a2->value.values() == a->value.values());
  CHECK(a2->m == a->m);
  CHECK(a2->v == a->v);
  CHECK(b2->step == 1);

  auto bad = make_param("m.a", Tf::zeros({2, 3}));
  auto bad2 = make_param("m.b", Tf::zeros({4}));
  CHECK_THROWS_AS((load_checkpoint<float>(path, {bad, bad2})), LoadError);
  std::remove(path.c_str());
}
