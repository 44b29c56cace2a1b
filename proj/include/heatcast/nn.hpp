#pragma once

#include "heatcast/ops.hpp"
#include "heatcast/param_set.hpp"
#include "heatcast/rng.hpp"

#include <string>
#include <vector>

namespace heatcast::nn {

// Parameters live in a flat ParamSet under dotted prefixes: "<prefix>.W", "<prefix>.b".

void init_linear(ParamSet& params, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                 Rng& rng);
Tensor linear(const ParamSet& params, const std::string& prefix, const Tensor& x);

/// dims = {in, hidden..., out}; layers are named "<prefix>.0", "<prefix>.1", ...
void init_mlp(ParamSet& params, const std::string& prefix, const std::vector<Eigen::Index>& dims,
              Rng& rng);
/// relu between layers, none after the last.
Tensor mlp(const ParamSet& params, const std::string& prefix, const Tensor& x, std::size_t layers);

/// Single-query scaled dot-product attention with additive relative-position
/// encodings on keys and values.
///
/// Registers "<prefix>.q", ".k", ".v", ".o" projections and a "<prefix>.rel"
/// MLP (2 -> rel_hidden -> 2d) whose two halves are added to keys and values.
void init_attention(ParamSet& params, const std::string& prefix, Eigen::Index dim,
                    Eigen::Index rel_hidden, Rng& rng);

struct AttentionOutput {
  Tensor output;   // [1 x d]
  Tensor weights;  // [1 x n], rows sum to one
};

/// `offsets` is [n x 2]: token position minus query position, in meters.
AttentionOutput attend(const ParamSet& params, const std::string& prefix, const Tensor& query,
                       const Tensor& tokens, const Matrix& offsets);
/// Same, with offsets on the tape so gradients reach the positions.
AttentionOutput attend(const ParamSet& params, const std::string& prefix, const Tensor& query,
                       const Tensor& tokens, const Tensor& offsets);

/// Feature scale applied to metric positions before they enter a network.
inline constexpr double kPositionScale = 0.1;

}  // namespace heatcast::nn
