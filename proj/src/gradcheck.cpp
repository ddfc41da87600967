#include "mfnet/gradcheck.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "mfnet/model.hpp"
#include "mfnet/objectives.hpp"
#include "mfnet/ops.hpp"

namespace mfnet {

namespace {

using DTensor = TensorT<double>;
using CheckFn = std::function<double(uint64_t seed)>;

DTensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = scale * rng.normal();
  return DTensor::from_values(shape, std::move(v));
}

// Reduces an op output to a scalar through fixed random weights so the
// incoming gradient is non-uniform across coordinates.
DTensor weighted_sum(const DTensor& x, uint64_t seed) {
  Rng rng(splitmix64(seed) ^ 0x77u);
  std::vector<double> w(x.values().size());
  for (auto& v : w) v = rng.uniform(0.5, 1.5);
  return sum(mul(x, DTensor::from_values(x.shape(), std::move(w))));
}

void randomize_conv(Conv2d<double>& conv, Rng& rng) {
  for (auto& w : conv.weight.values()) w = 0.5 * rng.normal();
  for (auto& b : conv.bias.values()) b = 0.1 * rng.normal();
}

// Checks d(scalar)/d(x) for each tensor `f` depends on by substituting it as
// the differentiated variable. `build` must read all inputs through the
// passed slots so substitution reaches the graph.
double check_against(const std::vector<DTensor*>& slots,
                     const std::function<DTensor()>& forward, double eps = 1e-5) {
  double worst = 0.0;
  for (DTensor* slot : slots) {
    const DTensor original = *slot;
    auto f = [&](const DTensor& x) {
      *slot = x;
      DTensor y = forward();
      *slot = original;
      return y;
    };
    worst = std::max(worst, grad_check(f, original, eps));
  }
  return worst;
}

double check_binary(uint64_t seed,
                    const std::function<DTensor(const DTensor&, const DTensor&)>& op) {
  Rng rng(seed);
  DTensor a = random_tensor({2, 3}, rng);
  DTensor b = random_tensor({2, 3}, rng);
  std::vector<DTensor*> slots{&a, &b};
  return check_against(slots, [&] { return weighted_sum(op(a, b), seed); });
}

double check_unary(uint64_t seed, const std::function<DTensor(const DTensor&)>& op,
                   const Shape& shape = {2, 3}) {
  Rng rng(seed);
  DTensor a = random_tensor(shape, rng);
  std::vector<DTensor*> slots{&a};
  return check_against(slots, [&] { return weighted_sum(op(a), seed); });
}

double check_conv(uint64_t seed, int64_t in_c, int64_t out_c, int64_t k, int64_t stride,
                  int64_t pad, int64_t groups, const Shape& in_shape) {
  Rng rng(seed);
  Conv2d<double> conv = make_conv2d<double>(in_c, out_c, k, k, stride, stride, pad, pad, groups);
  randomize_conv(conv, rng);
  DTensor x = random_tensor(in_shape, rng);
  std::vector<DTensor*> slots{&x, &conv.weight, &conv.bias};
  return check_against(slots, [&] { return weighted_sum(conv2d(x, conv), seed); });
}

double check_layer_norm(uint64_t seed) {
  Rng rng(seed);
  DTensor x = random_tensor({2, 3, 2, 4}, rng);
  DTensor gain = random_tensor({3}, rng, 0.5);
  DTensor bias = random_tensor({3}, rng, 0.5);
  std::vector<DTensor*> slots{&x, &gain, &bias};
  return check_against(slots,
                       [&] { return weighted_sum(layer_norm_channel(x, gain, bias), seed); });
}

double check_channel_attention(uint64_t seed) {
  Rng rng(seed);
  Conv2d<double> proj = make_conv2d<double>(3, 3, 1, 1);
  randomize_conv(proj, rng);
  DTensor x = random_tensor({1, 3, 2, 4}, rng);
  std::vector<DTensor*> slots{&x, &proj.weight, &proj.bias};
  return check_against(slots, [&] { return weighted_sum(channel_attention(x, proj), seed); });
}

double check_pad_crop(uint64_t seed) {
  Rng rng(seed);
  DTensor x = random_tensor({1, 2, 3, 4}, rng);
  std::vector<DTensor*> slots{&x};
  return check_against(
      slots, [&] { return weighted_sum(crop_time(pad_time(x, 8), 2), seed); });
}

double check_glfb(uint64_t seed) {
  Rng rng(splitmix64(seed));
  Glfb<double> block(2, rng);
  DTensor x = random_tensor({1, 2, 2, 4}, rng);

  std::vector<DTensor*> slots{&x};
  block.visit("glfb", [&slots](const std::string&, DTensor& t) { slots.push_back(&t); });

  return check_against(slots, [&] { return weighted_sum(block.forward(x), seed); });
}

double check_loss(uint64_t seed) {
  Rng rng(seed);
  DTensor target = random_tensor({2, 4}, rng);
  DTensor pred = random_tensor({2, 4}, rng);
  const double gamma = 0.3 + 0.4 * Rng(seed ^ 1).uniform();
  std::vector<DTensor*> slots{&pred, &target};
  return check_against(slots, [&] { return loss_mfnet(target, pred, gamma); });
}

// Miniature full network: n = 2, all depths 1, one 16 x 32 map. The input and
// every parameter tensor up to 128 elements are checked; the cap keeps the
// sweep inside the time budget while still covering every layer type.
double check_mfnet(uint64_t seed, HeadMode head) {
  ModelConfig cfg;
  cfg.base_channels = 2;
  cfg.encoder_depths = {1, 1, 1, 1};
  cfg.bottleneck_depth = 1;
  cfg.decoder_depths = {1, 1, 1, 1};
  cfg.head = head;
  Model<double> model(cfg, seed);

  // The output projection initializes to zero; nudge it so its gradient path
  // is exercised away from the trivial point.
  Rng rng(splitmix64(seed) ^ 0xabcdu);
  model.visit_params([&rng](const std::string& name, DTensor& t) {
    if (name.rfind("output_proj", 0) == 0) {
      for (auto& v : t.values()) v = 0.05 * rng.normal();
    }
  });

  DTensor x = random_tensor({1, 1, 16, 32}, rng, 0.5);
  std::vector<DTensor*> slots{&x};
  model.visit_params([&slots](const std::string&, DTensor& t) {
    if (t.numel() <= 128) slots.push_back(&t);
  });

  // The stacked normalizations give the end-to-end map a much larger third
  // derivative than any single op, so the default step's O(eps^2) truncation
  // error swamps the comparison. A smaller step keeps truncation ~1e-6 while
  // rounding stays near 1e-9 (the scalar output is O(1)).
  return check_against(
      slots, [&] { return weighted_sum(model.forward(x), seed); }, 1e-7);
}

struct OpEntry {
  int seeds;
  CheckFn fn;
};

const std::vector<std::pair<std::string, OpEntry>>& registry() {
  static const std::vector<std::pair<std::string, OpEntry>> entries = [] {
    std::vector<std::pair<std::string, OpEntry>> ops;
    ops.emplace_back("add", OpEntry{10, [](uint64_t s) {
                       return check_binary(s, [](const DTensor& a, const DTensor& b) {
                         return add(a, b);
                       });
                     }});
    ops.emplace_back("sub", OpEntry{10, [](uint64_t s) {
                       return check_binary(s, [](const DTensor& a, const DTensor& b) {
                         return sub(a, b);
                       });
                     }});
    ops.emplace_back("mul", OpEntry{10, [](uint64_t s) {
                       return check_binary(s, [](const DTensor& a, const DTensor& b) {
                         return mul(a, b);
                       });
                     }});
    ops.emplace_back("scale", OpEntry{10, [](uint64_t s) {
                       return check_unary(s, [s](const DTensor& a) {
                         return scale(a, 0.25 + static_cast<double>(s % 7));
                       });
                     }});
    ops.emplace_back("sigmoid", OpEntry{10, [](uint64_t s) {
                       return check_unary(s, [](const DTensor& a) { return sigmoid(a); });
                     }});
    ops.emplace_back("abs", OpEntry{10, [](uint64_t s) {
                       return check_unary(s, [](const DTensor& a) { return abs(a); });
                     }});
    ops.emplace_back("matmul", OpEntry{10, [](uint64_t s) {
                       Rng rng(s);
                       DTensor a = random_tensor({3, 3}, rng);
                       DTensor b = random_tensor({3, 3}, rng);
                       std::vector<DTensor*> slots{&a, &b};
                       return check_against(slots,
                                            [&] { return weighted_sum(matmul(a, b), s); });
                     }});
    ops.emplace_back("sum", OpEntry{10, [](uint64_t s) {
                       return check_unary(s, [](const DTensor& a) { return sum(a); });
                     }});
    ops.emplace_back("mean", OpEntry{10, [](uint64_t s) {
                       return check_unary(s, [](const DTensor& a) { return mean(a); });
                     }});
    ops.emplace_back("conv2d", OpEntry{10, [](uint64_t s) {
                       return check_conv(s, 2, 3, 3, 1, 1, 1, {1, 2, 4, 5});
                     }});
    ops.emplace_back("depthwise-conv2d", OpEntry{10, [](uint64_t s) {
                       return check_conv(s, 4, 4, 3, 1, 1, 4, {1, 4, 3, 4});
                     }});
    ops.emplace_back("downsample-conv2d", OpEntry{10, [](uint64_t s) {
                       return check_conv(s, 2, 4, 2, 2, 0, 1, {1, 2, 4, 6});
                     }});
    ops.emplace_back("pixel-shuffle", OpEntry{10, [](uint64_t s) {
                       return check_unary(
                           s, [](const DTensor& a) { return pixel_shuffle(a, 2); },
                           {1, 8, 2, 3});
                     }});
    ops.emplace_back("layer-norm", OpEntry{10, &check_layer_norm});
    ops.emplace_back("simple-gate", OpEntry{10, [](uint64_t s) {
                       return check_unary(
                           s, [](const DTensor& a) { return simple_gate(a); }, {1, 4, 2, 3});
                     }});
    ops.emplace_back("channel-attention", OpEntry{10, &check_channel_attention});
    ops.emplace_back("pad-crop", OpEntry{10, &check_pad_crop});
    ops.emplace_back("loss-mfnet", OpEntry{10, &check_loss});
    ops.emplace_back("glfb", OpEntry{10, &check_glfb});
    ops.emplace_back("mfnet", OpEntry{10, [](uint64_t s) {
                       // Rotate the head so all three output contracts are
                       // exercised across the seed sweep.
                       const HeadMode heads[3] = {HeadMode::kMapReverseNoise, HeadMode::kMasking,
                                                  HeadMode::kMapSpeech};
                       return check_mfnet(s, heads[s % 3]);
                     }});
    return ops;
  }();
  return entries;
}

// Forward x^3 paired with a backward that claims d/dx = 2x. Used to verify
// the checker flags inconsistent gradients.
DTensor corrupt_cube(const DTensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = v * v * v;
  return detail::make_op<double>("corrupt_cube", a.shape(), std::move(out), {a},
                                 [](detail::TensorNode<double>& self) {
                                   auto& p = self.parents[0];
                                   p->ensure_grad();
                                   for (size_t i = 0; i < self.grad.size(); ++i) {
                                     p->grad[i] += self.grad[i] * 2.0 * p->values[i];
                                   }
                                 });
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  names.reserve(registry().size());
  for (const auto& [name, entry] : registry()) names.push_back(name);
  return names;
}

GradCheckResult run_gradcheck_op(const std::string& name) {
  if (name == "corrupt-fixture") {
    GradCheckResult result;
    result.op = name;
    result.seeds = 10;
    for (uint64_t s = 1; s <= 10; ++s) {
      result.max_rel_err = std::max(
          result.max_rel_err,
          check_unary(s, [](const DTensor& a) { return corrupt_cube(a); }));
    }
    result.pass = result.max_rel_err < kGradCheckTolerance;
    return result;
  }
  for (const auto& [op_name, entry] : registry()) {
    if (op_name != name) continue;
    GradCheckResult result;
    result.op = name;
    result.seeds = entry.seeds;
    for (int s = 1; s <= entry.seeds; ++s) {
      result.max_rel_err =
          std::max(result.max_rel_err, entry.fn(static_cast<uint64_t>(s)));
    }
    result.pass = result.max_rel_err < kGradCheckTolerance;
    return result;
  }
  throw ConfigError("gradcheck: unknown op '" + name + "'");
}

std::vector<GradCheckResult> run_gradcheck_all() {
  std::vector<GradCheckResult> results;
  for (const auto& name : gradcheck_op_names()) {
    results.push_back(run_gradcheck_op(name));
  }
  return results;
}

}  // namespace mfnet
