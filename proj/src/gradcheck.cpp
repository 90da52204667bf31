#include "mf/gradcheck.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>

#include "mf/decoder.hpp"
#include "mf/ops.hpp"

namespace mf::gradcheck {

Result check(const ScalarFn& fn, std::vector<Tensor<double>> inputs,
             const Options& opt) {
  for (auto& in : inputs)
    if (in.requires_grad()) in.zero_grad();
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    Tensor<double> loss = fn(inputs);
    if (loss.numel() != 1)
      throw ValueError("gradcheck: fn must return a scalar tensor");
    tape.backward(loss);
  }

  Result res;
  Rng rng(opt.sample_seed);
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor<double>& in = inputs[ti];
    if (!in.requires_grad()) continue;
    // an input that does not influence the output legitimately has no grad
    const std::vector<double>* analytic = in.has_grad() ? &in.grad() : nullptr;

    std::vector<size_t> idxs;
    const size_t n = in.numel();
    if (opt.max_elems_per_input > 0 && n > opt.max_elems_per_input) {
      for (size_t k = 0; k < opt.max_elems_per_input; ++k)
        idxs.push_back(static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(n) - 1)));
    } else {
      idxs.resize(n);
      std::iota(idxs.begin(), idxs.end(), size_t{0});
    }

    for (size_t i : idxs) {
      const double keep = in.values()[i];
      in.values()[i] = keep + opt.h;
      const double fp = fn(inputs).item();
      in.values()[i] = keep - opt.h;
      const double fm = fn(inputs).item();
      in.values()[i] = keep;
      const double num = (fp - fm) / (2.0 * opt.h);
      const double ana = analytic ? (*analytic)[i] : 0.0;
      const double rel = std::fabs(num - ana) /
                         std::max({std::fabs(num), std::fabs(ana), 1e-4});
      ++res.checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = str_cat("input ", ti, " elem ", i, ": analytic ", ana,
                            " vs numeric ", num);
      }
    }
  }
  res.ok = res.max_rel_err < opt.tol;
  return res;
}

namespace {

using Td = Tensor<double>;

// Scalar projection with fixed random weights so every output element
// contributes a distinct gradient signal.
Td weigh(const Td& t, uint64_t salt) {
  Rng rng(0xabcd0000 + salt);
  Td w = Td::randn(t.shape(), rng);
  return reduce_sum(mul(t, w));
}

struct Suite {
  std::ostream& os;
  bool all_ok = true;
  Options opt;

  void run(const std::string& name, const ScalarFn& fn,
           std::vector<Td> inputs) {
    Result r = check(fn, std::move(inputs), opt);
    all_ok = all_ok && r.ok;
    os << (r.ok ? "  ok   " : "  FAIL ") << std::left << std::setw(34) << name
       << " max rel err " << std::scientific << std::setprecision(2)
       << r.max_rel_err << " over " << r.checked << " elems\n"
       << std::defaultfloat;
    if (!r.ok) os << "       worst: " << r.worst << "\n";
  }
};

Td rg(Td t) {
  t.set_requires_grad(true);
  return t;
}

// Flow values that keep bilinear samples away from the integer lattice and
// the borders, where the sampler is not differentiable.
Td safe_flow(const Shape& shape, Rng& rng) {
  Td f = Td::zeros(shape);
  for (double& v : f.values()) {
    const double mag = rng.uniform(0.1, 0.4);
    v = rng.uniform() < 0.5 ? mag : -mag;
  }
  return f;
}

void check_ops(Suite& s, uint64_t seed) {
  Rng rng(seed);
  auto tag = [&](const char* n) { return str_cat(n, " [seed ", seed, "]"); };

  {
    Td a = rg(Td::randn({4, 5}, rng));
    Td b = rg(Td::randn({5, 3}, rng));
    s.run(tag("matmul 2d"),
          [](const std::vector<Td>& in) {
            return weigh(matmul(in[0], in[1]), 1);
          },
          {a, b});
  }
  {
    Td a = rg(Td::randn({2, 4, 5}, rng));
    Td b = rg(Td::randn({2, 5, 3}, rng));
    s.run(tag("matmul batched"),
          [](const std::vector<Td>& in) {
            return weigh(matmul(in[0], in[1]), 2);
          },
          {a, b});
  }
  {
    Td a = rg(Td::randn({2, 4, 5}, rng));
    Td b = rg(Td::randn({2, 3, 5}, rng));
    s.run(tag("matmul transposed"),
          [](const std::vector<Td>& in) {
            return weigh(matmul(in[0], in[1], true), 3);
          },
          {a, b});
  }
  {
    Td a = rg(Td::randn({3, 4, 5}, rng));
    Td b = rg(Td::randn({5, 4}, rng));
    s.run(tag("matmul shared rhs"),
          [](const std::vector<Td>& in) {
            return weigh(matmul(in[0], in[1]), 4);
          },
          {a, b});
  }
  {
    Td a = rg(Td::randn({4, 5}, rng));
    Td b = rg(Td::randn({4, 5}, rng));
    s.run(tag("add/sub/mul"),
          [](const std::vector<Td>& in) {
            Td y = add(in[0], in[1]);
            y = mul(y, sub(in[0], in[1]));
            return weigh(y, 5);
          },
          {a, b});
  }
  {
    Td a = rg(Td::randn({2, 3, 4}, rng));
    Td b = rg(Td::randn({4}, rng));
    s.run(tag("broadcast add/mul"),
          [](const std::vector<Td>& in) {
            return weigh(mul(add(in[0], in[1]), in[1]), 6);
          },
          {a, b});
  }
  {
    Td a = rg(Td::randn({4, 5}, rng));
    s.run(tag("scale/add_scalar"),
          [](const std::vector<Td>& in) {
            return weigh(add_scalar(scale(in[0], 1.7), -0.3), 7);
          },
          {a});
  }
  {
    Td a = rg(Td::randn({2, 3, 4}, rng));
    Td b = rg(Td::randn({2, 2, 4}, rng));
    s.run(tag("concat/split"),
          [](const std::vector<Td>& in) {
            Td c = concat(std::vector<Td>{in[0], in[1]}, 1);
            auto parts = split(c, 1, {4, 1});
            return add(weigh(parts[0], 8), weigh(parts[1], 9));
          },
          {a, b});
  }
  {
    Td a = rg(Td::randn({2, 3, 4}, rng));
    s.run(tag("reshape/permute"),
          [](const std::vector<Td>& in) {
            Td y = permute(reshape(in[0], {2, 2, 2, 3}), {3, 1, 0, 2});
            return weigh(y, 10);
          },
          {a});
  }
  {
    Td a = rg(Td::randn({4, 5}, rng));
    s.run(tag("reduce_sum/mean"),
          [](const std::vector<Td>& in) {
            return add(reduce_sum(mul(in[0], in[0])), reduce_mean(in[0]));
          },
          {a});
  }
  {
    Td a = rg(add_scalar(Td::randn({4, 5}, rng), 3.0));  // keep |x| > h
    s.run(tag("abs/sqrt/exp"),
          [](const std::vector<Td>& in) {
            Td y = add(sqrt_op(abs_op(in[0])), exp_op(scale(in[0], 0.1)));
            return weigh(y, 11);
          },
          {a});
  }
  {
    Td a = rg(Td::randn({4, 5}, rng));
    Td b = rg(Td::randn({4, 5}, rng));
    s.run(tag("maximum/minimum"),
          [](const std::vector<Td>& in) {
            Td y = add(maximum(in[0], in[1]), minimum(in[0], in[1]));
            y = add(y, maximum_scalar(in[0], 0.25));
            y = add(y, minimum_scalar(in[1], -0.25));
            return weigh(y, 12);
          },
          {a, b});
  }
  {
    Td x = rg(Td::randn({1, 2, 5, 5}, rng));
    Td w = rg(Td::randn({3, 2, 3, 3}, rng, 0.4));
    Td b = rg(Td::randn({3}, rng, 0.2));
    s.run(tag("conv2d s1p1"),
          [](const std::vector<Td>& in) {
            return weigh(conv2d(in[0], in[1], in[2], 1, 1), 13);
          },
          {x, w, b});
    s.run(tag("conv2d s2p1"),
          [](const std::vector<Td>& in) {
            return weigh(conv2d(in[0], in[1], in[2], 2, 1), 14);
          },
          {x, w, b});
  }
  {
    Td x = rg(Td::randn({1, 3, 4, 4}, rng));
    Td w = rg(Td::randn({3, 1, 3, 3}, rng, 0.4));
    Td b = rg(Td::randn({3}, rng, 0.2));
    s.run(tag("depthwise conv3x3"),
          [](const std::vector<Td>& in) {
            return weigh(depthwise_conv3x3(in[0], in[1], in[2]), 15);
          },
          {x, w, b});
  }
  {
    Td x = rg(Td::randn({2, 6, 5}, rng));
    s.run(tag("layer_norm"),
          [](const std::vector<Td>& in) {
            return weigh(layer_norm(in[0], -1, 1e-5), 16);
          },
          {x});
    s.run(tag("softmax"),
          [](const std::vector<Td>& in) {
            return weigh(softmax(in[0], -1), 17);
          },
          {x});
  }
  {
    Td x = rg(Td::randn({3, 7}, rng));
    s.run(tag("gelu/sigmoid/tanh"),
          [](const std::vector<Td>& in) {
            Td y = add(gelu(in[0]), add(sigmoid(in[0]), tanh_op(in[0])));
            return weigh(y, 18);
          },
          {x});
    s.run(tag("leaky_relu"),
          [](const std::vector<Td>& in) {
            return weigh(leaky_relu(in[0], 0.2), 19);
          },
          {x});
  }
  {
    Td x = rg(Td::randn({1, 2, 3, 3}, rng));
    s.run(tag("nearest_upsample_2x"),
          [](const std::vector<Td>& in) {
            return weigh(nearest_upsample_2x(in[0]), 20);
          },
          {x});
  }
  {
    Td feat = rg(Td::randn({1, 1, 4, 4}, rng));
    Td flow = rg(safe_flow({1, 2, 4, 4}, rng));
    s.run(tag("grid_sample (feature+flow)"),
          [](const std::vector<Td>& in) {
            return weigh(grid_sample_bilinear(in[0], in[1]), 21);
          },
          {feat, flow});
  }
  {
    Td x = rg(Td::randn({6, 4}, rng));
    s.run(tag("l2_normalize_rows"),
          [](const std::vector<Td>& in) {
            return weigh(l2_normalize_rows(in[0], 1e-12), 22);
          },
          {x});
  }
}

void check_attention(Suite& s, uint64_t seed) {
  Rng rng(seed);
  AttentionConfig acfg{8, 2, 2, true, false};
  CSWinAttention<double> attn("gc.attn", acfg, rng);
  ParamList<double> params;
  attn.collect(params);

  Td q = rg(Td::randn({1, 16, 8}, rng));
  Td kv = rg(Td::randn({1, 16, 8}, rng));
  std::vector<Td> inputs{q, kv};
  for (auto& p : params) inputs.push_back(p->value);
  s.run(str_cat("cswin cross-attention [seed ", seed, "]"),
        [&attn, q, kv](const std::vector<Td>&) {
          return weigh(attn.forward(q, kv, 4, 4), 30);
        },
        inputs);
}

void check_encoder_block(Suite& s, uint64_t seed) {
  Rng rng(seed);
  AttentionConfig acfg{8, 2, 2, true, false};
  EncoderBlock<double> blk("gc.encblk", acfg, 2, rng);
  ParamList<double> params;
  blk.collect(params);

  Td x = rg(Td::randn({1, 16, 8}, rng));
  std::vector<Td> inputs{x};
  for (auto& p : params) inputs.push_back(p->value);
  s.run(str_cat("encoder block [seed ", seed, "]"),
        [&blk, x](const std::vector<Td>&) {
          return weigh(blk.forward(x, 4, 4), 31);
        },
        inputs);
}

void check_decoder_block(Suite& s, uint64_t seed) {
  Rng rng(seed);
  AttentionConfig acfg{16, 2, 2, true, false};
  DecoderBlock<double> blk("gc.decblk", acfg, 2, rng);
  // a zero-initialized flow head has zero gradient signal through the warp;
  // perturb it so the check exercises the full path
  for (double& v : blk.flow_head.weight->value.values())
    v = rng.uniform(-0.02, 0.02);

  ParamList<double> params;
  blk.collect(params);

  Td x = rg(Td::randn({1, 16, 16}, rng));
  Td sf = rg(Td::randn({1, 16, 16}, rng));
  Td flow_in = rg(safe_flow({1, 2, 4, 4}, rng));
  std::vector<Td> inputs{x, sf, flow_in};
  for (auto& p : params) inputs.push_back(p->value);
  s.run(str_cat("decoder block [seed ", seed, "]"),
        [&blk, x, sf, flow_in](const std::vector<Td>&) {
          auto out = blk.forward(x, sf, flow_in, 4, 4);
          Td y = add(weigh(out.x, 40), weigh(out.flow, 41));
          y = add(y, add(weigh(out.o_w, 42), weigh(out.o_g, 43)));
          return y;
        },
        inputs);
}

}  // namespace

bool run_gradient_suite(std::ostream& os, int seeds) {
  Suite s{os};
  for (int seed = 1; seed <= seeds; ++seed) {
    check_ops(s, static_cast<uint64_t>(seed));
    check_attention(s, static_cast<uint64_t>(seed));
    check_encoder_block(s, static_cast<uint64_t>(seed));
    check_decoder_block(s, static_cast<uint64_t>(seed));
  }
  os << (s.all_ok ? "gradient suite: PASS\n" : "gradient suite: FAIL\n");
  return s.all_ok;
}

}  // namespace mf::gradcheck
