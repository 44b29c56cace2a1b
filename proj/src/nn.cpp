#include "heatcast/nn.hpp"

#include <cmath>

namespace heatcast::nn {

void init_linear(ParamSet& params, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                 Rng& rng) {
  params.add_weight(prefix + ".W", in, out, rng);
  params.add_bias(prefix + ".b", out);
}

Tensor linear(const ParamSet& params, const std::string& prefix, const Tensor& x) {
  return add_bias(matmul(x, params.at(prefix + ".W")), params.at(prefix + ".b"));
}

void init_mlp(ParamSet& params, const std::string& prefix, const std::vector<Eigen::Index>& dims,
              Rng& rng) {
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    init_linear(params, prefix + "." + std::to_string(i), dims[i], dims[i + 1], rng);
}

Tensor mlp(const ParamSet& params, const std::string& prefix, const Tensor& x, std::size_t layers) {
  Tensor h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    h = linear(params, prefix + "." + std::to_string(i), h);
    if (i + 1 < layers) h = relu(h);
  }
  return h;
}

void init_attention(ParamSet& params, const std::string& prefix, Eigen::Index dim,
                    Eigen::Index rel_hidden, Rng& rng) {
  for (const char* p : {".q", ".k", ".v", ".o"}) init_linear(params, prefix + p, dim, dim, rng);
  init_mlp(params, prefix + ".rel", {2, rel_hidden, 2 * dim}, rng);
}

AttentionOutput attend(const ParamSet& params, const std::string& prefix, const Tensor& query,
                       const Tensor& tokens, const Matrix& offsets) {
  return attend(params, prefix, query, tokens, Tensor::constant(offsets));
}

AttentionOutput attend(const ParamSet& params, const std::string& prefix, const Tensor& query,
                       const Tensor& tokens, const Tensor& offsets) {
  const Eigen::Index d = query.cols();
  const Tensor rel = mlp(params, prefix + ".rel", mul(offsets, kPositionScale), 2);
  const Tensor q = linear(params, prefix + ".q", query);
  const Tensor k = add(linear(params, prefix + ".k", tokens), slice_cols(rel, 0, d));
  const Tensor v = add(linear(params, prefix + ".v", tokens), slice_cols(rel, d, d));
  const Tensor scores = mul(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor w = softmax(scores);
  return {linear(params, prefix + ".o", matmul(w, v)), w};
}

}  // namespace heatcast::nn
