#include <algorithm>
#include <cmath>
#include <string>

#include "seqrec/errors.hpp"
#include "seqrec/model.hpp"

namespace seqrec::model {

void ModelConfig::validate() const {
  if (hidden == 0 || heads == 0 || hidden % heads != 0) {
    throw ConfigError("hidden size " + std::to_string(hidden) + " must be a positive multiple of heads " +
                      std::to_string(heads));
  }
  if (layers == 0) throw ConfigError("layer count must be positive");
  if (max_len < 3) throw ConfigError("max_len must be at least 3");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (!(matching_scale > 0.0)) throw ConfigError("matching scale c must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (ffn_multiplier == 0) throw ConfigError("ffn multiplier must be positive");
  if (num_negatives == 0) throw ConfigError("number of matching negatives must be positive");
}

data::SampleConfig ModelConfig::sample_config(data::SampleMix mix) const {
  data::SampleConfig sc;
  sc.rho = rho;
  sc.num_negatives = num_negatives;
  sc.max_len = max_len;
  sc.mix = mix;
  sc.hide_matching_positive = hide_matching_positive;
  return sc;
}

void ModelParameters::for_each(
    const std::function<void(const std::string&, Tensor&, ParamKind)>& fn) {
  fn("item_embedding", item_embedding, ParamKind::Weight);
  fn("position_embedding", position_embedding, ParamKind::Weight);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParameters& lp = layers[l];
    fn(p + "query", lp.query, ParamKind::Weight);
    fn(p + "key", lp.key, ParamKind::Weight);
    fn(p + "value", lp.value, ParamKind::Weight);
    fn(p + "output", lp.output, ParamKind::Weight);
    fn(p + "ffn_in", lp.ffn_in, ParamKind::Weight);
    fn(p + "ffn_out", lp.ffn_out, ParamKind::Weight);
    fn(p + "attn_norm_gain", lp.attn_norm_gain, ParamKind::NormGain);
    fn(p + "attn_norm_shift", lp.attn_norm_shift, ParamKind::NormShift);
    fn(p + "ffn_norm_gain", lp.ffn_norm_gain, ParamKind::NormGain);
    fn(p + "ffn_norm_shift", lp.ffn_norm_shift, ParamKind::NormShift);
  }
  fn("final_norm_gain", final_norm_gain, ParamKind::NormGain);
  fn("final_norm_shift", final_norm_shift, ParamKind::NormShift);
  fn("output_bias", output_bias, ParamKind::Bias);
}

void ModelParameters::for_each(
    const std::function<void(const std::string&, const Tensor&, ParamKind)>& fn) const {
  const_cast<ModelParameters*>(this)->for_each(
      [&fn](const std::string& name, Tensor& t, ParamKind kind) { fn(name, t, kind); });
}

std::size_t ModelParameters::tensor_count() const { return 5 + 10 * layers.size(); }

namespace {

constexpr double kInitBound = 0.02;
constexpr double kInitStddev = 0.01;

// Normal(0, 0.01) with redraws outside two standard deviations.
Tensor truncated_normal(numerics::Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> normal(0.0, kInitStddev);
  for (double& v : t.data()) {
    do {
      v = normal(rng);
    } while (std::abs(v) > kInitBound);
  }
  return t;
}

}  // namespace

ModelParameters init_params(const ModelConfig& config, std::size_t item_count, Rng& rng) {
  config.validate();
  if (item_count == 0) throw ConfigError("vocabulary has no items");
  const std::size_t d = config.hidden;
  const std::size_t f = config.ffn_multiplier * d;
  ModelParameters p;
  p.item_embedding = truncated_normal({item_count + 3, d}, rng);
  std::fill_n(p.item_embedding.data().begin(), d, 0.0);
  p.position_embedding = truncated_normal({config.max_len, d}, rng);
  p.layers.resize(config.layers);
  for (auto& layer : p.layers) {
    layer.query = truncated_normal({d, d}, rng);
    layer.key = truncated_normal({d, d}, rng);
    layer.value = truncated_normal({d, d}, rng);
    layer.output = truncated_normal({d, d}, rng);
    layer.ffn_in = truncated_normal({d, f}, rng);
    layer.ffn_out = truncated_normal({f, d}, rng);
    layer.attn_norm_gain = Tensor({d}, 1.0);
    layer.attn_norm_shift = Tensor({d}, 0.0);
    layer.ffn_norm_gain = Tensor({d}, 1.0);
    layer.ffn_norm_shift = Tensor({d}, 0.0);
  }
  p.final_norm_gain = Tensor({d}, 1.0);
  p.final_norm_shift = Tensor({d}, 0.0);
  p.output_bias = Tensor({item_count}, 0.0);
  return p;
}

std::size_t parameter_count(const ModelParameters& params) {
  std::size_t total = 0;
  params.for_each([&total](const std::string&, const Tensor& t, ParamKind) { total += t.size(); });
  return total - params.hidden();
}

std::vector<Var> ParamVars::leaves() const {
  std::vector<Var> out{item_embedding, position_embedding};
  for (const auto& l : layers) {
    out.insert(out.end(), {l.query, l.key, l.value, l.output, l.ffn_in, l.ffn_out, l.attn_norm_gain,
                           l.attn_norm_shift, l.ffn_norm_gain, l.ffn_norm_shift});
  }
  out.insert(out.end(), {final_norm_gain, final_norm_shift, output_bias});
  return out;
}

Var& ParamVars::leaf(std::size_t index) {
  if (index == 0) return item_embedding;
  if (index == 1) return position_embedding;
  index -= 2;
  if (index < 10 * layers.size()) {
    LayerVars& l = layers[index / 10];
    Var* slots[] = {&l.query, &l.key, &l.value, &l.output, &l.ffn_in, &l.ffn_out,
                    &l.attn_norm_gain, &l.attn_norm_shift, &l.ffn_norm_gain, &l.ffn_norm_shift};
    return *slots[index % 10];
  }
  index -= 10 * layers.size();
  if (index == 0) return final_norm_gain;
  if (index == 1) return final_norm_shift;
  if (index == 2) return output_bias;
  throw ContractError("parameter leaf index out of range");
}

ParamVars bind(Tape& tape, const ModelParameters& params, bool requires_grad) {
  ParamVars v;
  v.item_count = params.item_count();
  v.item_embedding = tape.borrow(params.item_embedding, requires_grad);
  v.position_embedding = tape.borrow(params.position_embedding, requires_grad);
  for (const auto& l : params.layers) {
    LayerVars lv;
    lv.query = tape.borrow(l.query, requires_grad);
    lv.key = tape.borrow(l.key, requires_grad);
    lv.value = tape.borrow(l.value, requires_grad);
    lv.output = tape.borrow(l.output, requires_grad);
    lv.ffn_in = tape.borrow(l.ffn_in, requires_grad);
    lv.ffn_out = tape.borrow(l.ffn_out, requires_grad);
    lv.attn_norm_gain = tape.borrow(l.attn_norm_gain, requires_grad);
    lv.attn_norm_shift = tape.borrow(l.attn_norm_shift, requires_grad);
    lv.ffn_norm_gain = tape.borrow(l.ffn_norm_gain, requires_grad);
    lv.ffn_norm_shift = tape.borrow(l.ffn_norm_shift, requires_grad);
    v.layers.push_back(lv);
  }
  v.final_norm_gain = tape.borrow(params.final_norm_gain, requires_grad);
  v.final_norm_shift = tape.borrow(params.final_norm_shift, requires_grad);
  v.output_bias = tape.borrow(params.output_bias, requires_grad);
  return v;
}

}  // namespace seqrec::model
