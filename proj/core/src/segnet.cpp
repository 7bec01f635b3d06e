#include "qmvos/segnet.hpp"

#include <cmath>

#include "qmvos/error.hpp"
#include "qmvos/ops.hpp"
#include "qmvos/rng.hpp"

namespace qmvos {

namespace {

Tensor conv_init(int64_t co, int64_t ci, int64_t k, bool pre_relu, SplitMix64& rng) {
  const int64_t fan_in = ci * k * k;
  const double stddev = std::sqrt((pre_relu ? 2.0 : 1.0) / static_cast<double>(fan_in));
  std::vector<double> data(static_cast<size_t>(co * ci * k * k));
  for (double& v : data) v = stddev * rng.next_normal();
  return Tensor(Shape{co, ci, k, k}, std::move(data));
}

Tensor dense_init(int64_t rows, int64_t cols, bool pre_relu, SplitMix64& rng) {
  const double stddev = std::sqrt((pre_relu ? 2.0 : 1.0) / static_cast<double>(rows));
  std::vector<double> data(static_cast<size_t>(rows * cols));
  for (double& v : data) v = stddev * rng.next_normal();
  return Tensor(Shape{rows, cols}, std::move(data));
}

void add_conv(ParamStore& p, const std::string& name, int64_t co, int64_t ci, int64_t k,
              bool pre_relu, SplitMix64& rng) {
  p.add(name + ".w", conv_init(co, ci, k, pre_relu, rng));
  p.add(name + ".b", Tensor::zeros({co}));
}

Tensor conv_relu(const Tensor& x, const ParamStore& w, const std::string& name, int64_t stride,
                 Tape* tape) {
  return relu(conv2d(x, w.get(name + ".w"), w.get(name + ".b"), stride, 1, tape), tape);
}

}  // namespace

ParamStore init_net_weights(const RunConfig& cfg, uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);
  ParamStore p;

  const int64_t enc0 = std::max<int64_t>(1, cfg.c4 / 2);
  add_conv(p, "enc.c1", enc0, 3, 3, true, rng);
  add_conv(p, "enc.c2", cfg.c4, enc0, 3, true, rng);
  add_conv(p, "enc.c3", cfg.c8, cfg.c4, 3, true, rng);
  add_conv(p, "enc.c4", cfg.c8, cfg.c8, 3, true, rng);
  add_conv(p, "enc.c5", cfg.c16, cfg.c8, 3, true, rng);
  add_conv(p, "enc.c6", cfg.c16, cfg.c16, 3, true, rng);

  p.add("key_proj.w", dense_init(cfg.ck, cfg.c16, false, rng));
  p.add("key_proj.b", Tensor::zeros({cfg.ck}));

  const int64_t m0 = std::max<int64_t>(1, cfg.cv / 4);
  const int64_t m1 = std::max<int64_t>(1, cfg.cv / 2);
  add_conv(p, "menc.c1", m0, 4, 3, true, rng);
  add_conv(p, "menc.c2", m1, m0, 3, true, rng);
  add_conv(p, "menc.c3", cfg.cv, m1, 3, true, rng);
  add_conv(p, "menc.c4", cfg.cv, cfg.cv, 3, false, rng);

  add_conv(p, "dec.in", cfg.c8, cfg.cv, 3, true, rng);
  p.add("dec.skip8.w", dense_init(cfg.c8, cfg.c8, false, rng));
  p.add("dec.skip8.b", Tensor::zeros({cfg.c8}));
  add_conv(p, "dec.mid", cfg.cd, cfg.c8, 3, true, rng);
  p.add("dec.skip4.w", dense_init(cfg.cd, cfg.c4, false, rng));
  p.add("dec.skip4.b", Tensor::zeros({cfg.cd}));
  add_conv(p, "dec.out", cfg.cd, cfg.cd, 3, false, rng);

  p.add("head.proj.w", dense_init(cfg.cv, cfg.cd, false, rng));
  p.add("head.proj.b", Tensor::zeros({cfg.cd}));
  p.add("head.static.w", dense_init(1, cfg.cd, false, rng));
  p.add("head.static.b", Tensor::zeros({1}));

  add_sim_weights(p, cfg, rng);
  add_qcim_weights(p, cfg, rng);
  return p;
}

FeaturePyramid encode_frame(const Tensor& image, const ParamStore& w, const RunConfig& cfg,
                            Tape* tape) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw input_error("encode_frame: expected a 3xHxW image, got " + shape_str(image.shape()));
  }
  if (image.extent(1) % 16 != 0 || image.extent(2) % 16 != 0) {
    throw input_error("encode_frame: frame sides must be multiples of 16, got " +
                      shape_str(image.shape()));
  }
  (void)cfg;
  FeaturePyramid pyr;
  Tensor x = conv_relu(image, w, "enc.c1", 2, tape);
  pyr.f4 = conv_relu(x, w, "enc.c2", 2, tape);
  x = conv_relu(pyr.f4, w, "enc.c3", 2, tape);
  pyr.f8 = conv_relu(x, w, "enc.c4", 1, tape);
  x = conv_relu(pyr.f8, w, "enc.c5", 2, tape);
  pyr.f16 = conv_relu(x, w, "enc.c6", 1, tape);
  return pyr;
}

Tensor compute_key(const Tensor& f16, const ParamStore& w, const RunConfig& cfg, Tape* tape) {
  if (f16.rank() != 3 || f16.extent(0) != cfg.c16) {
    throw shape_error("compute_key: expected " + std::to_string(cfg.c16) + "xHxW feature");
  }
  return conv1x1(f16, w.get("key_proj.w"), w.get("key_proj.b"), tape);
}

Tensor encode_mask(const Tensor& image, const Tensor& object_mask, const ParamStore& w,
                   const RunConfig& cfg, Tape* tape) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw input_error("encode_mask: expected a 3xHxW image");
  }
  Tensor mask = object_mask;
  if (mask.rank() == 2) mask = reshape(mask, {1, mask.extent(0), mask.extent(1)}, tape);
  if (mask.rank() != 3 || mask.extent(0) != 1 || mask.extent(1) != image.extent(1) ||
      mask.extent(2) != image.extent(2)) {
    throw input_error("encode_mask: mask " + shape_str(object_mask.shape()) +
                      " does not match image " + shape_str(image.shape()));
  }
  (void)cfg;
  Tensor x = concat({image, mask}, 0, tape);
  x = conv_relu(x, w, "menc.c1", 2, tape);
  x = conv_relu(x, w, "menc.c2", 2, tape);
  x = conv_relu(x, w, "menc.c3", 2, tape);
  return conv2d(x, w.get("menc.c4.w"), w.get("menc.c4.b"), 2, 1, tape);
}

Tensor decode(const Tensor& readout_slab, const FeaturePyramid& pyr, const ParamStore& w,
              const RunConfig& cfg, Tape* tape) {
  if (readout_slab.rank() != 3 || readout_slab.extent(0) != cfg.cv) {
    throw input_error("decode: expected a " + std::to_string(cfg.cv) + "xHxW readout slab");
  }
  if (readout_slab.extent(1) != pyr.f16.extent(1) ||
      readout_slab.extent(2) != pyr.f16.extent(2)) {
    throw input_error("decode: readout " + shape_str(readout_slab.shape()) +
                      " does not match f16 " + shape_str(pyr.f16.shape()));
  }
  Tensor x = conv_relu(readout_slab, w, "dec.in", 1, tape);
  x = bilinear_upsample2x(x, tape);
  x = add(x, conv1x1(pyr.f8, w.get("dec.skip8.w"), w.get("dec.skip8.b"), tape), tape);
  x = conv_relu(x, w, "dec.mid", 1, tape);
  x = bilinear_upsample2x(x, tape);
  x = add(x, conv1x1(pyr.f4, w.get("dec.skip4.w"), w.get("dec.skip4.b"), tape), tape);
  return conv2d(x, w.get("dec.out.w"), w.get("dec.out.b"), 1, 1, tape);
}

Tensor project_queries(const ObjectQuerySet& queries, const ParamStore& w, Tape* tape) {
  if (queries.count() == 0) throw contract_error("project_queries: no object queries");
  return linear(queries.q, w.get("head.proj.w"), w.get("head.proj.b"), tape);
}

Tensor apply_filters(const std::vector<Tensor>& dec_feats, const Tensor& filters,
                     const RunConfig& cfg, Tape* tape) {
  const int64_t n = filters.extent(0);
  if (static_cast<int64_t>(dec_feats.size()) != n) {
    throw contract_error("apply_filters: " + std::to_string(dec_feats.size()) +
                         " decoder features for " + std::to_string(n) + " filters");
  }
  std::vector<Tensor> channels;
  channels.reserve(static_cast<size_t>(n) + 1);
  const int64_t h = dec_feats[0].extent(1), wd = dec_feats[0].extent(2);
  channels.push_back(Tensor::zeros({1, h, wd}));  // background logit is fixed at 0
  for (int64_t i = 0; i < n; ++i) {
    if (dec_feats[static_cast<size_t>(i)].extent(0) != cfg.cd) {
      throw contract_error("apply_filters: decoder feature has wrong channel count");
    }
    Tensor f = reshape(select0(filters, i, tape), {1, cfg.cd}, tape);
    channels.push_back(conv1x1(dec_feats[static_cast<size_t>(i)], f, Tensor::zeros({1}), tape));
  }
  return concat(channels, 0, tape);
}

Tensor predict_masks(const std::vector<Tensor>& dec_feats, const ObjectQuerySet& queries,
                     const ParamStore& w, const RunConfig& cfg, Tape* tape) {
  return apply_filters(dec_feats, project_queries(queries, w, tape), cfg, tape);
}

Tensor predict_masks_static(const std::vector<Tensor>& dec_feats, const ParamStore& w,
                            const RunConfig& cfg, Tape* tape) {
  if (dec_feats.empty()) throw contract_error("predict_masks_static: no decoder features");
  (void)cfg;
  std::vector<Tensor> channels;
  channels.reserve(dec_feats.size() + 1);
  const int64_t h = dec_feats[0].extent(1), wd = dec_feats[0].extent(2);
  channels.push_back(Tensor::zeros({1, h, wd}));
  for (const Tensor& feat : dec_feats) {
    channels.push_back(conv1x1(feat, w.get("head.static.w"), w.get("head.static.b"), tape));
  }
  return concat(channels, 0, tape);
}

}  // namespace qmvos
