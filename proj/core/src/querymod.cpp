#include "qmvos/querymod.hpp"

#include <cmath>

#include "qmvos/error.hpp"
#include "qmvos/ops.hpp"

namespace qmvos {

namespace {

Tensor normal_tensor(Shape shape, double stddev, SplitMix64& rng) {
  std::vector<double> data(static_cast<size_t>(shape_size(shape)));
  for (double& v : data) v = stddev * rng.next_normal();
  return Tensor(std::move(shape), std::move(data));
}

// fan_in-scaled init for a projection that is not followed by a ReLU.
Tensor proj_init(Shape shape, int64_t fan_in, SplitMix64& rng) {
  return normal_tensor(std::move(shape), std::sqrt(1.0 / static_cast<double>(fan_in)), rng);
}

// Value projections start at a tenth of the usual scale so each attention
// sublayer begins close to the identity map (residual dominates) and the
// mixing strength is learned rather than unlearned.
constexpr double kValueInitScale = 0.1;

void add_block_weights(ParamStore& p, const std::string& prefix, int64_t cv, SplitMix64& rng) {
  const int64_t hidden = 2 * cv;
  p.add(prefix + ".sa.wq", proj_init({cv, cv}, cv, rng));
  p.add(prefix + ".sa.bq", Tensor::zeros({cv}));
  p.add(prefix + ".sa.wk", proj_init({cv, cv}, cv, rng));
  p.add(prefix + ".sa.bk", Tensor::zeros({cv}));
  p.add(prefix + ".sa.wv",
        normal_tensor({cv, cv}, kValueInitScale * std::sqrt(1.0 / static_cast<double>(cv)), rng));
  p.add(prefix + ".sa.bv", Tensor::zeros({cv}));
  p.add(prefix + ".ln1.g", Tensor::full({cv}, 1.0));
  p.add(prefix + ".ln1.b", Tensor::zeros({cv}));
  p.add(prefix + ".ffn.w1",
        normal_tensor({cv, hidden}, std::sqrt(2.0 / static_cast<double>(cv)), rng));
  p.add(prefix + ".ffn.b1", Tensor::zeros({hidden}));
  p.add(prefix + ".ffn.w2", proj_init({hidden, cv}, hidden, rng));
  p.add(prefix + ".ffn.b2", Tensor::zeros({cv}));
  p.add(prefix + ".ln2.g", Tensor::full({cv}, 1.0));
  p.add(prefix + ".ln2.b", Tensor::zeros({cv}));
}

// Queries as rows: project, attend, add residual, normalize.
Tensor attention_sublayer(const Tensor& x, const Tensor& kv_source, const std::string& prefix,
                          const ParamStore& w, bool scale_by_sqrt_d, const std::string& ln_name,
                          Tape* tape) {
  Tensor q = linear(x, w.get(prefix + ".wq"), w.get(prefix + ".bq"), tape);
  Tensor k = linear(kv_source, w.get(prefix + ".wk"), w.get(prefix + ".bk"), tape);
  Tensor v = linear(kv_source, w.get(prefix + ".wv"), w.get(prefix + ".bv"), tape);
  Tensor att = scaled_dot_attention(q, k, v, scale_by_sqrt_d, tape);
  return layer_norm(add(att, x, tape), w.get(ln_name + ".g"), w.get(ln_name + ".b"), tape);
}

Tensor ffn_sublayer(const Tensor& x, const std::string& prefix, const ParamStore& w,
                    const std::string& ln_name, Tape* tape) {
  Tensor f = ffn(x, w.get(prefix + ".w1"), w.get(prefix + ".b1"), w.get(prefix + ".w2"),
                 w.get(prefix + ".b2"), tape);
  return layer_norm(add(f, x, tape), w.get(ln_name + ".g"), w.get(ln_name + ".b"), tape);
}

}  // namespace

void add_sim_weights(ParamStore& p, const RunConfig& cfg, SplitMix64& rng) {
  p.add("sim.conv1.w", proj_init({cfg.c8, cfg.c16}, cfg.c16, rng));
  p.add("sim.conv1.b", Tensor::zeros({cfg.c8}));
  p.add("sim.conv2.w", proj_init({cfg.cv, 2 * cfg.c8}, 2 * cfg.c8, rng));
  p.add("sim.conv2.b", Tensor::zeros({cfg.cv}));
  add_block_weights(p, "sim", cfg.cv, rng);
}

void add_qcim_weights(ParamStore& p, const RunConfig& cfg, SplitMix64& rng) {
  const int64_t cv = cfg.cv;
  add_block_weights(p, "qcim", cv, rng);
  p.add("qcim.ca.wq", proj_init({cv, cv}, cv, rng));
  p.add("qcim.ca.bq", Tensor::zeros({cv}));
  p.add("qcim.ca.wk", proj_init({cv, cv}, cv, rng));
  p.add("qcim.ca.bk", Tensor::zeros({cv}));
  p.add("qcim.ca.wv",
        normal_tensor({cv, cv}, kValueInitScale * std::sqrt(1.0 / static_cast<double>(cv)), rng));
  p.add("qcim.ca.bv", Tensor::zeros({cv}));
  p.add("qcim.ln_ca.g", Tensor::full({cv}, 1.0));
  p.add("qcim.ln_ca.b", Tensor::zeros({cv}));
}

Tensor fuse_scales(const Tensor& f16, const Tensor& f8, const ParamStore& w, const RunConfig& cfg,
                   Tape* tape) {
  if (f16.rank() != 3 || f8.rank() != 3) throw shape_error("fuse_scales: expected CxHxW inputs");
  if (f16.extent(0) != cfg.c16 || f8.extent(0) != cfg.c8) {
    throw shape_error("fuse_scales: channel counts " + shape_str(f16.shape()) + " / " +
                      shape_str(f8.shape()) + " do not match the configured widths");
  }
  if (2 * f16.extent(1) != f8.extent(1) || 2 * f16.extent(2) != f8.extent(2)) {
    throw shape_error("fuse_scales: f16 " + shape_str(f16.shape()) + " is not half of f8 " +
                      shape_str(f8.shape()));
  }
  Tensor up = bilinear_upsample2x(f16, tape);
  Tensor f16_hat = conv1x1(up, w.get("sim.conv1.w"), w.get("sim.conv1.b"), tape);
  Tensor cat = concat({f16_hat, f8}, 0, tape);
  return conv1x1(cat, w.get("sim.conv2.w"), w.get("sim.conv2.b"), tape);
}

ObjectQuerySet init_queries(const Tensor& f_fuse, const Tensor& masks, Tape* tape) {
  if (f_fuse.rank() != 3) throw shape_error("init_queries: f_fuse must be CxHxW");
  if (masks.rank() != 3) throw shape_error("init_queries: masks must be NxHxW");
  const int64_t c = f_fuse.extent(0), h = f_fuse.extent(1), wd = f_fuse.extent(2);
  const int64_t n = masks.extent(0);
  if (masks.extent(1) % h != 0 || masks.extent(2) % wd != 0 ||
      masks.extent(1) / h != masks.extent(2) / wd) {
    throw shape_error("init_queries: mask extents " + shape_str(masks.shape()) +
                      " are not an integer multiple of f_fuse " + shape_str(f_fuse.shape()));
  }
  const int64_t factor = masks.extent(1) / h;
  Tensor pooled = factor == 1 ? masks : area_downsample(masks, factor, tape);

  ObjectQuerySet out;
  out.empty_flags.assign(static_cast<size_t>(n), false);
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Tensor m = select0(pooled, i, tape);
    Tensor total = sum_all(m, tape);
    if (total.value() == 0.0) {
      out.empty_flags[static_cast<size_t>(i)] = true;
      rows.push_back(Tensor::zeros({1, c}));
      continue;
    }
    Tensor weighted = spatial_sum(mul_spatial(f_fuse, m, tape), tape);
    Tensor row = scale_by(weighted, reciprocal(total, tape), tape);
    rows.push_back(reshape(row, {1, c}, tape));
  }
  out.q = concat(rows, 0, tape);
  return out;
}

ObjectQuerySet sim_interact(const ObjectQuerySet& x, const ParamStore& w, const RunConfig& cfg,
                            Tape* tape) {
  if (!x.q.defined() || x.q.rank() != 2) throw shape_error("sim_interact: queries must be NxC");
  Tensor cur = x.q;
  if (cfg.sim_interaction) {
    cur = attention_sublayer(cur, cur, "sim.sa", w, /*scale_by_sqrt_d=*/true, "sim.ln1", tape);
  }
  cur = ffn_sublayer(cur, "sim.ffn", w, "sim.ln2", tape);
  return ObjectQuerySet{cur, x.empty_flags};
}

ObjectQuerySet qcim_refine(const ObjectQuerySet& x_sim, const Tensor& readout,
                           const ParamStore& w, const RunConfig& cfg, Tape* tape) {
  if (!x_sim.q.defined() || x_sim.q.rank() != 2) throw shape_error("qcim_refine: queries must be NxC");
  if (readout.rank() != 4) throw shape_error("qcim_refine: readout must be NxCxHxW");
  if (readout.extent(2) * readout.extent(3) == 0 || readout.extent(0) == 0) {
    throw precondition_error("qcim_refine: empty readout");
  }
  const int64_t rows = readout.extent(0) * readout.extent(2) * readout.extent(3);
  const int64_t c = readout.extent(1);
  // Serialize slabs to (N*H*W) x C rows: all objects' pixels are attended
  // together, so each query also sees the other objects' content.
  std::vector<Tensor> parts;
  parts.reserve(static_cast<size_t>(readout.extent(0)));
  for (int64_t i = 0; i < readout.extent(0); ++i) {
    Tensor slab = select0(readout, i, tape);  // C x H x W
    Tensor flat = reshape(slab, {c, readout.extent(2) * readout.extent(3)}, tape);
    parts.push_back(transpose2d(flat, tape));  // (H*W) x C
  }
  Tensor m = concat(parts, 0, tape);
  if (m.extent(0) != rows) throw contract_error("qcim_refine: serialization mismatch");

  Tensor x1 = attention_sublayer(x_sim.q, x_sim.q, "qcim.sa", w, /*scale_by_sqrt_d=*/true,
                                 "qcim.ln1", tape);
  Tensor x2 = attention_sublayer(x1, m, "qcim.ca", w, cfg.qcim_attn_scale, "qcim.ln_ca", tape);
  Tensor x3 = ffn_sublayer(x2, "qcim.ffn", w, "qcim.ln2", tape);
  return ObjectQuerySet{x3, x_sim.empty_flags};
}

}  // namespace qmvos
