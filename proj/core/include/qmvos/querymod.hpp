#pragma once

#include <vector>

#include "qmvos/config.hpp"
#include "qmvos/param_store.hpp"
#include "qmvos/rng.hpp"
#include "qmvos/tape.hpp"
#include "qmvos/tensor.hpp"

namespace qmvos {

// N x Cv object query matrix. empty_flags[n] marks objects whose mask had
// zero total weight at initialization (their row is all zeros).
struct ObjectQuerySet {
  Tensor q;
  std::vector<bool> empty_flags;

  int64_t count() const { return q.defined() ? q.extent(0) : 0; }
};

// Registers the scale-fusion and query-interaction parameters.
void add_sim_weights(ParamStore& params, const RunConfig& cfg, SplitMix64& rng);
// Registers the query-content interaction parameters.
void add_qcim_weights(ParamStore& params, const RunConfig& cfg, SplitMix64& rng);

// Upsamples f16 2x, projects it, concatenates with f8 and projects to cv
// channels: the fused stride-8 feature the queries pool from.
Tensor fuse_scales(const Tensor& f16, const Tensor& f8, const ParamStore& w, const RunConfig& cfg,
                   Tape* tape = nullptr);

// Pools f_fuse under each object's mask (area-downsampled to f_fuse
// resolution) into one query row per object. A mask with zero total weight
// yields a zero row and a raised empty flag.
ObjectQuerySet init_queries(const Tensor& f_fuse, const Tensor& masks, Tape* tape = nullptr);

// One transformer block over the query rows: self-attention (scaled by
// 1/sqrt(d)) with residual + LayerNorm, then FFN with residual + LayerNorm.
// With cfg.sim_interaction off the self-attention sublayer is skipped and
// each query is processed independently.
ObjectQuerySet sim_interact(const ObjectQuerySet& x, const ParamStore& w, const RunConfig& cfg,
                            Tape* tape = nullptr);

// Self-attention over queries, cross-attention from queries to the
// serialized readout rows (all objects' pixels), then FFN; each sublayer
// with residual + LayerNorm. The cross-attention omits the 1/sqrt(d) factor
// unless cfg.qcim_attn_scale is set. readout is N x Cv x H x W.
ObjectQuerySet qcim_refine(const ObjectQuerySet& x_sim, const Tensor& readout,
                           const ParamStore& w, const RunConfig& cfg, Tape* tape = nullptr);

}  // namespace qmvos
