#pragma once

#include <vector>

#include "qmvos/config.hpp"
#include "qmvos/param_store.hpp"
#include "qmvos/querymod.hpp"
#include "qmvos/tensor.hpp"

namespace qmvos {

// Per-frame features at strides 4, 8 and 16.
struct FeaturePyramid {
  Tensor f4;
  Tensor f8;
  Tensor f16;
};

// Creates every parameter of the network (image encoder, mask encoder,
// decoder, prediction heads, query modules) with a fixed creation order so
// a given seed always produces the same weights.
ParamStore init_net_weights(const RunConfig& cfg, uint64_t seed);

// Three stages of two 3x3 convs each (ReLU after every conv); the first
// conv of each stage downsamples, plus an extra stride-2 conv in stage one
// to reach stride 4. Frame sides must be multiples of 16.
FeaturePyramid encode_frame(const Tensor& image, const ParamStore& w, const RunConfig& cfg,
                            Tape* tape = nullptr);

// 1x1 projection of f16 to the memory key width.
Tensor compute_key(const Tensor& f16, const ParamStore& w, const RunConfig& cfg,
                   Tape* tape = nullptr);

// Channel-concatenates image and one object mask and encodes them to a
// cv x H/16 x W/16 memory value slab.
Tensor encode_mask(const Tensor& image, const Tensor& object_mask, const ParamStore& w,
                   const RunConfig& cfg, Tape* tape = nullptr);

// Iteratively upsamples the stride-16 readout, fusing the stride-8 and
// stride-4 skip features, down to a cd x H/4 x W/4 decoder feature.
Tensor decode(const Tensor& readout_slab, const FeaturePyramid& pyr, const ParamStore& w,
              const RunConfig& cfg, Tape* tape = nullptr);

// Query-to-filter projection of the dynamic head: N x cv queries to N x cd
// filters.
Tensor project_queries(const ObjectQuerySet& queries, const ParamStore& w,
                       Tape* tape = nullptr);

// Applies per-object filters to the decoder features: logit_n(p) =
// <filter_n, dec_n(p)>. Returns (N+1) x H/4 x W/4 logits with a
// constant-zero background channel first.
Tensor apply_filters(const std::vector<Tensor>& dec_feats, const Tensor& filters,
                     const RunConfig& cfg, Tape* tape = nullptr);

// Dynamic-filter head: project_queries then apply_filters.
Tensor predict_masks(const std::vector<Tensor>& dec_feats, const ObjectQuerySet& queries,
                     const ParamStore& w, const RunConfig& cfg, Tape* tape = nullptr);

// Baseline head used by the overhead benchmark: a learned static 1x1 conv
// instead of the query filters.
Tensor predict_masks_static(const std::vector<Tensor>& dec_feats, const ParamStore& w,
                            const RunConfig& cfg, Tape* tape = nullptr);

}  // namespace qmvos
