#include "divnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "divnet/errors.hpp"
#include "divnet/rng.hpp"

namespace divnet {

namespace {

constexpr double kInitRange = 0.1;

Tensor uniform_tensor(const Shape& shape, Rng& rng) {
  std::vector<double> values(shape.numel());
  for (auto& v : values) v = rng.uniform(-kInitRange, kInitRange);
  return Tensor::from(shape, std::move(values), true);
}

Tensor copy_param(const Tensor& t) {
  if (!t.defined()) return {};
  auto c = t.detach();
  c.set_requires_grad(true);
  return c;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t categorical_bucket(std::size_t field, std::int64_t code, std::size_t buckets) {
  const auto key = splitmix64(static_cast<std::uint64_t>(field) * 0x100000001b3ULL ^
                              static_cast<std::uint64_t>(code));
  return static_cast<std::size_t>(key % buckets);
}

// Returns (raw determinant, determinant clamped to [0, 1]) of the cosine
// kernel of rows that are already unit length.
std::pair<Tensor, Tensor> unit_kernel_det(const Tensor& unit_rows) {
  Tensor raw = determinant(gram(unit_rows));
  return {raw, clamp(raw, 0.0, 1.0)};
}

}  // namespace

void ModelConfig::validate() const {
  if (input_width() == 0) throw ConfigError("model: input width is zero");
  if (key_dim == 0 || value_dim == 0) throw ConfigError("model: key/value dims must be positive");
  if (num_blocks == 0) throw ConfigError("model: need at least one encoder block");
  if (categorical_fields > 0 && (categorical_buckets == 0 || categorical_width == 0))
    throw ConfigError("model: categorical table needs buckets and width");
}

DivNetParams DivNetParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  DivNetParams p;
  p.config = config;
  const std::size_t dk = config.key_dim, dv = config.value_dim;
  std::size_t in = config.input_width();
  for (std::size_t b = 0; b < config.num_blocks; ++b) {
    EncoderBlock blk;
    blk.query = uniform_tensor(Shape::matrix(in, dk), rng);
    blk.key = uniform_tensor(Shape::matrix(in, dk), rng);
    blk.value = uniform_tensor(Shape::matrix(in, dv), rng);
    blk.output = uniform_tensor(Shape::matrix(dv, dk), rng);
    blk.norm_gain = Tensor::full(Shape::vector(dk), 1.0, true);
    blk.norm_bias = Tensor::zeros(Shape::vector(dk), true);
    p.blocks.push_back(std::move(blk));
    in = dk;  // later blocks consume the previous block's output
  }
  p.decoder_query = uniform_tensor(Shape::matrix(dk, dk), rng);
  p.decoder_key = uniform_tensor(Shape::matrix(dk, dk), rng);
  p.decoder_value = uniform_tensor(Shape::matrix(dk, dv), rng);
  p.head_weight = uniform_tensor(Shape::matrix(dv, 1), rng);
  p.head_bias = uniform_tensor(Shape::vector(1), rng);
  if (config.categorical_fields > 0) {
    p.categorical_table =
        uniform_tensor(Shape::matrix(config.categorical_buckets, config.categorical_width), rng);
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> DivNetParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string pre = "encoder." + std::to_string(b) + ".";
    out.emplace_back(pre + "query", blocks[b].query);
    out.emplace_back(pre + "key", blocks[b].key);
    out.emplace_back(pre + "value", blocks[b].value);
    out.emplace_back(pre + "output", blocks[b].output);
    out.emplace_back(pre + "norm_gain", blocks[b].norm_gain);
    out.emplace_back(pre + "norm_bias", blocks[b].norm_bias);
  }
  out.emplace_back("decoder.query", decoder_query);
  out.emplace_back("decoder.key", decoder_key);
  out.emplace_back("decoder.value", decoder_value);
  out.emplace_back("head.weight", head_weight);
  out.emplace_back("head.bias", head_bias);
  if (categorical_table.defined()) out.emplace_back("categorical.table", categorical_table);
  return out;
}

std::vector<Tensor> DivNetParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

DivNetParams DivNetParams::clone() const {
  DivNetParams c;
  c.config = config;
  for (const auto& b : blocks) {
    c.blocks.push_back({copy_param(b.query), copy_param(b.key), copy_param(b.value),
                        copy_param(b.output), copy_param(b.norm_gain), copy_param(b.norm_bias)});
  }
  c.decoder_query = copy_param(decoder_query);
  c.decoder_key = copy_param(decoder_key);
  c.decoder_value = copy_param(decoder_value);
  c.head_weight = copy_param(head_weight);
  c.head_bias = copy_param(head_bias);
  c.categorical_table = copy_param(categorical_table);
  return c;
}

void DivNetParams::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

CausalMask::CausalMask(std::size_t size) : size_(size), pattern_(size * size, 0) {
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c <= r; ++c) pattern_[r * size + c] = 1;
}

Tensor positional_encoding(std::size_t num_positions, std::size_t width) {
  if (width == 0) throw ConfigError("positional_encoding: width must be at least 1");
  std::vector<double> z(num_positions * width);
  for (std::size_t i = 0; i < num_positions; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const double exponent = 2.0 * static_cast<double>(j / 2) / static_cast<double>(width);
      const double angle = static_cast<double>(i) / std::pow(10000.0, exponent);
      z[i * width + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from(Shape::matrix(num_positions, width), std::move(z));
}

Tensor build_input(const RankingInstance& inst, const Tensor& positions,
                   const DivNetParams& params) {
  const auto& cfg = params.config;
  const std::size_t n = inst.num_items;
  if (inst.item_dim != cfg.item_dim || inst.user_features.size() != cfg.user_dim) {
    throw ConfigError("instance '" + inst.query_id + "' has item/user widths " +
                      std::to_string(inst.item_dim) + "/" +
                      std::to_string(inst.user_features.size()) + " but the model expects " +
                      std::to_string(cfg.item_dim) + "/" + std::to_string(cfg.user_dim));
  }
  if (positions.rows() != n || positions.cols() != cfg.input_width()) {
    throw ConfigError("position table " + positions.shape().str() + " does not match " +
                      std::to_string(n) + " items of width " + std::to_string(cfg.input_width()));
  }
  Tensor x = Tensor::from(Shape::matrix(n, inst.item_dim), inst.item_features);
  if (cfg.categorical_fields > 0) {
    if (inst.categorical_fields() != cfg.categorical_fields) {
      throw ConfigError("instance '" + inst.query_id + "' has " +
                        std::to_string(inst.categorical_fields()) +
                        " categorical fields, model expects " +
                        std::to_string(cfg.categorical_fields));
    }
    for (std::size_t f = 0; f < cfg.categorical_fields; ++f) {
      std::vector<std::size_t> rows(n);
      for (std::size_t i = 0; i < n; ++i)
        rows[i] = categorical_bucket(f, inst.categorical[i][f], cfg.categorical_buckets);
      x = concat_cols(x, gather_rows(params.categorical_table, rows));
    }
  }
  if (cfg.user_dim > 0) {
    const Tensor user = Tensor::from(Shape::matrix(1, cfg.user_dim), inst.user_features);
    x = concat_cols(x, repeat_rows(user, n));
  }
  return add(x, positions);
}

Tensor encode(const Tensor& input, const DivNetParams& params) {
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.config.key_dim));
  Tensor x = input;
  for (const auto& blk : params.blocks) {
    if (x.cols() != blk.query.rows()) {
      throw ShapeError("encode: input width " + std::to_string(x.cols()) + " but block expects " +
                       std::to_string(blk.query.rows()));
    }
    const Tensor q = matmul(x, blk.query);
    const Tensor k = matmul(x, blk.key);
    const Tensor v = matmul(x, blk.value);
    const Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dk));
    const Tensor attended = matmul(weights, v);
    x = layer_norm(add(matmul(attended, blk.output), q), blk.norm_gain, blk.norm_bias);
  }
  return x;
}

Tensor encode_instance(const RankingInstance& inst, const DivNetParams& params) {
  const Tensor z = positional_encoding(inst.num_items, params.config.input_width());
  return encode(build_input(inst, z, params), params);
}

DecodeStepOutput decode_step(std::span<const std::size_t> prefix, std::size_t candidate,
                             const Tensor& encoded, const DivNetParams& params,
                             const CausalMask& mask) {
  if (std::find(prefix.begin(), prefix.end(), candidate) != prefix.end()) {
    throw ContractViolation("decode_step: item " + std::to_string(candidate) +
                            " was already selected");
  }
  std::vector<std::size_t> rows(prefix.begin(), prefix.end());
  rows.push_back(candidate);
  const std::size_t t = rows.size();
  if (mask.size() != t) throw ShapeError("decode_step: mask size does not match prefix + 1");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.config.key_dim));

  const Tensor h = gather_rows(encoded, rows);
  const Tensor q = matmul(h, params.decoder_query);
  const Tensor k = matmul(h, params.decoder_key);
  const Tensor v = matmul(h, params.decoder_value);
  const Tensor weights =
      masked_softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dk), mask.pattern());
  const Tensor out = matmul(weights, v);
  const std::size_t last = t - 1;
  DecodeStepOutput result;
  result.embedding = gather_rows(out, std::span<const std::size_t>(&last, 1));
  result.logit =
      sigmoid(add_scalar(matmul(result.embedding, params.head_weight), params.head_bias));
  result.attention.assign(weights.data().begin() + last * t, weights.data().end());
  return result;
}

Tensor diversity_det(std::span<const Tensor> prefix_embeddings, const Tensor& candidate) {
  if (prefix_embeddings.empty()) return Tensor::scalar(1.0);
  std::vector<Tensor> rows(prefix_embeddings.begin(), prefix_embeddings.end());
  rows.push_back(candidate);
  return unit_kernel_det(normalize_rows(concat_rows(rows))).second;
}

Tensor selection_probabilities(const Tensor& logits, const Tensor& dets, double alpha) {
  if (logits.numel() == 0) throw ContractViolation("selection_probabilities: no candidates");
  if (alpha < 0.0) throw ConfigError("selection_probabilities: alpha must be non-negative");
  if (logits.shape() != dets.shape()) {
    throw ShapeError("selection_probabilities: logits " + logits.shape().str() + " vs dets " +
                     dets.shape().str());
  }
  return normalize_sum(add(logits, scale(dets, alpha)));
}

const char* to_string(DecodeMode mode) {
  switch (mode) {
    case DecodeMode::Greedy: return "greedy";
    case DecodeMode::Sample: return "sample";
    case DecodeMode::Forced: return "forced";
  }
  return "?";
}

SlateDecode decode_slate(const RankingInstance& inst, const DivNetParams& params,
                         const DecodeOptions& options) {
  if (options.alpha < 0.0) throw ConfigError("decode_slate: alpha must be non-negative");
  const std::size_t n = inst.num_items;
  if (options.mode == DecodeMode::Forced && !is_permutation(options.forced, n)) {
    throw ContractViolation("decode_slate: forced order is not a permutation of the items");
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.config.key_dim));
  Rng rng(options.seed);

  const Tensor encoded = encode_instance(inst, params);
  // Decoder projections of every item; prefix keys/values are rows of these.
  const Tensor all_q = matmul(encoded, params.decoder_query);
  const Tensor all_k = matmul(encoded, params.decoder_key);
  const Tensor all_v = matmul(encoded, params.decoder_value);

  SlateDecode out;
  out.mode = options.mode;
  out.alpha = options.alpha;
  std::vector<std::size_t> remaining = identity_permutation(n);
  std::vector<Tensor> selected_rows;
  std::vector<Tensor> selected_units;
  Tensor log_prob;

  for (std::size_t t = 0; t < n; ++t) {
    const std::vector<std::size_t>& cand = remaining;
    const std::size_t m = cand.size();
    const Tensor q = gather_rows(all_q, cand);
    const Tensor self_score = rowwise_dot(q, gather_rows(all_k, cand));
    const Tensor v_cand = gather_rows(all_v, cand);
    Tensor embeddings;
    Tensor weights;
    if (t == 0) {
      weights = softmax_rows(scale(self_score, inv_sqrt_dk));
      embeddings = scale_rows(v_cand, weights);
    } else {
      const auto& prefix = out.permutation;
      const Tensor cross = matmul(q, transpose(gather_rows(all_k, prefix)));
      weights = softmax_rows(scale(concat_cols(cross, self_score), inv_sqrt_dk));
      embeddings = add(matmul(slice_cols(weights, 0, t), gather_rows(all_v, prefix)),
                       scale_rows(v_cand, slice_cols(weights, t, t + 1)));
    }
    const Tensor logits =
        sigmoid(add_scalar(matmul(embeddings, params.head_weight), params.head_bias));
    const Tensor units = normalize_rows(embeddings);

    DecodeStep step;
    step.candidates = cand;
    Tensor dets;
    if (t == 0) {
      dets = Tensor::full(Shape::matrix(m, 1), 1.0);
      step.raw_dets.assign(m, 1.0);
    } else {
      // With α = 0 the bonus cannot move the probabilities; skip its graph.
      std::optional<NoGradGuard> no_grad;
      if (options.alpha == 0.0) no_grad.emplace();
      const Tensor prefix_units = concat_rows(selected_units);
      std::vector<Tensor> per_item;
      per_item.reserve(m);
      for (std::size_t i = 0; i < m; ++i) {
        const Tensor rows[] = {prefix_units, gather_rows(units, std::span(&i, 1))};
        auto [raw, clamped] = unit_kernel_det(concat_rows(rows));
        step.raw_dets.push_back(raw.item());
        per_item.push_back(clamped);
      }
      dets = concat_rows(per_item);
    }
    const Tensor probs = selection_probabilities(logits, dets, options.alpha);

    std::size_t choice = 0;
    const auto p = probs.data();
    switch (options.mode) {
      case DecodeMode::Greedy:
        for (std::size_t i = 1; i < m; ++i)
          if (p[i] > p[choice]) choice = i;
        break;
      case DecodeMode::Sample: {
        const double u = rng.uniform();
        double cum = 0.0;
        choice = m - 1;
        for (std::size_t i = 0; i < m; ++i) {
          cum += p[i];
          if (u < cum) {
            choice = i;
            break;
          }
        }
        break;
      }
      case DecodeMode::Forced: {
        const auto it = std::find(cand.begin(), cand.end(), options.forced[t]);
        choice = static_cast<std::size_t>(it - cand.begin());
        break;
      }
    }

    const std::size_t item = cand[choice];
    step.chosen = choice;
    step.probabilities = probs;
    step.logits.assign(logits.data().begin(), logits.data().end());
    step.dets.assign(dets.data().begin(), dets.data().end());
    step.attention.assign(weights.data().begin() + choice * (t + 1),
                          weights.data().begin() + (choice + 1) * (t + 1));

    const Tensor lp = log(element(probs, choice));
    log_prob = log_prob.defined() ? add(log_prob, lp) : lp;
    selected_rows.push_back(gather_rows(embeddings, std::span(&choice, 1)));
    selected_units.push_back(gather_rows(units, std::span(&choice, 1)));

    out.step_probabilities.push_back(p[choice]);
    out.step_logits.push_back(step.logits[choice]);
    out.step_determinants.push_back(step.dets[choice]);
    out.permutation.push_back(item);
    out.steps.push_back(std::move(step));
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(choice));
  }

  out.selected_embeddings = concat_rows(selected_rows);
  out.log_prob = log_prob;
  {
    NoGradGuard no_grad;
    const Tensor k = gram(concat_rows(selected_units));
    out.kernel.assign(k.data().begin(), k.data().end());
  }
  return out;
}

Permutation greedy_rank(const RankingInstance& inst, const DivNetParams& params, double alpha) {
  NoGradGuard no_grad;
  DecodeOptions options;
  options.alpha = alpha;
  options.mode = DecodeMode::Greedy;
  return decode_slate(inst, params, options).permutation;
}

std::vector<double> export_attention(const SlateDecode& decode) {
  const std::size_t n = decode.steps.size();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& w = decode.steps[t].attention;
    for (std::size_t j = 0; j < w.size() && j <= t; ++j) a[t * n + j] = w[j];
  }
  return a;
}

}  // namespace divnet
