#include "safl/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "safl/errors.hpp"

namespace safl {

void EncoderConfig::validate() const {
  if (num_layers < 1 || num_heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1 ||
      max_seq_len < 1 || num_labels < 1) {
    throw std::invalid_argument("EncoderConfig: all dimensions must be >= 1");
  }
  if (d_model % num_heads != 0) {
    throw std::invalid_argument("EncoderConfig: d_model " + std::to_string(d_model) +
                                " not divisible by num_heads " + std::to_string(num_heads));
  }
}

std::size_t layer_param_count(const EncoderConfig& cfg) {
  const std::size_t d = cfg.d_model, f = cfg.d_ff;
  return 4 * (d * d + d)  // Wq,bq,Wk,bk,Wv,bv,Wo,bo
         + 2 * d          // ln1
         + d * f + f      // W1,b1
         + f * d + d      // W2,b2
         + 2 * d;         // ln2
}

std::size_t embedding_param_count(const EncoderConfig& cfg) {
  return (static_cast<std::size_t>(cfg.vocab_size) + cfg.max_seq_len) * cfg.d_model;
}

std::size_t classifier_param_count(const EncoderConfig& cfg) {
  return static_cast<std::size_t>(cfg.d_model) * cfg.num_labels + cfg.num_labels;
}

namespace {

// Offsets of the sub-tensors inside a flat layer block.
struct LayerLayout {
  int d, f;
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1g, ln1b, w1, b1, w2, b2, ln2g, ln2b, total;

  explicit LayerLayout(const EncoderConfig& cfg) : d(cfg.d_model), f(cfg.d_ff) {
    std::size_t off = 0;
    auto take = [&off](std::size_t n) {
      std::size_t at = off;
      off += n;
      return at;
    };
    const std::size_t dd = static_cast<std::size_t>(d) * d;
    wq = take(dd);
    bq = take(d);
    wk = take(dd);
    bk = take(d);
    wv = take(dd);
    bv = take(d);
    wo = take(dd);
    bo = take(d);
    ln1g = take(d);
    ln1b = take(d);
    w1 = take(static_cast<std::size_t>(d) * f);
    b1 = take(f);
    w2 = take(static_cast<std::size_t>(f) * d);
    b2 = take(d);
    ln2g = take(d);
    ln2b = take(d);
    total = off;
  }
};

struct LayerLeaves {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo, ln1g, ln1b, w1, b1, w2, b2, ln2g, ln2b;
};

struct ModelLeaves {
  std::vector<LayerLeaves> layers;
  Tensor tok_table, pos_table, cls_w, cls_b;
};

Tensor leaf(std::span<const double> block, std::size_t off, std::vector<int> shape, bool grad) {
  std::size_t n = 1;
  for (int dim : shape) n *= static_cast<std::size_t>(dim);
  return Tensor::from_data(std::move(shape),
                           std::vector<double>(block.begin() + off, block.begin() + off + n), grad);
}

// mask == nullptr builds a gradient-free view for inference.
ModelLeaves build_leaves(const ModelState& m, const FreezeMask* mask) {
  const EncoderConfig& cfg = m.config;
  const LayerLayout ll(cfg);
  ModelLeaves lv;
  lv.layers.reserve(cfg.num_layers);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const bool g = mask && mask->layer[l];
    const auto& blk = m.layers[l];
    LayerLeaves x;
    x.wq = leaf(blk, ll.wq, {ll.d, ll.d}, g);
    x.bq = leaf(blk, ll.bq, {ll.d}, g);
    x.wk = leaf(blk, ll.wk, {ll.d, ll.d}, g);
    x.bk = leaf(blk, ll.bk, {ll.d}, g);
    x.wv = leaf(blk, ll.wv, {ll.d, ll.d}, g);
    x.bv = leaf(blk, ll.bv, {ll.d}, g);
    x.wo = leaf(blk, ll.wo, {ll.d, ll.d}, g);
    x.bo = leaf(blk, ll.bo, {ll.d}, g);
    x.ln1g = leaf(blk, ll.ln1g, {ll.d}, g);
    x.ln1b = leaf(blk, ll.ln1b, {ll.d}, g);
    x.w1 = leaf(blk, ll.w1, {ll.d, ll.f}, g);
    x.b1 = leaf(blk, ll.b1, {ll.f}, g);
    x.w2 = leaf(blk, ll.w2, {ll.f, ll.d}, g);
    x.b2 = leaf(blk, ll.b2, {ll.d}, g);
    x.ln2g = leaf(blk, ll.ln2g, {ll.d}, g);
    x.ln2b = leaf(blk, ll.ln2b, {ll.d}, g);
    lv.layers.push_back(std::move(x));
  }
  const bool ge = mask && mask->embedding;
  lv.tok_table = leaf(m.embedding, 0, {cfg.vocab_size, cfg.d_model}, ge);
  lv.pos_table = leaf(m.embedding, static_cast<std::size_t>(cfg.vocab_size) * cfg.d_model,
                      {cfg.max_seq_len, cfg.d_model}, ge);
  const bool gc = mask && mask->classifier;
  lv.cls_w = leaf(m.classifier, 0, {cfg.d_model, cfg.num_labels}, gc);
  lv.cls_b = leaf(m.classifier, static_cast<std::size_t>(cfg.d_model) * cfg.num_labels,
                  {cfg.num_labels}, gc);
  return lv;
}

void zero_leaf_grads(ModelLeaves& lv) {
  for (auto& x : lv.layers) {
    for (Tensor* t : {&x.wq, &x.bq, &x.wk, &x.bk, &x.wv, &x.bv, &x.wo, &x.bo, &x.ln1g, &x.ln1b,
                      &x.w1, &x.b1, &x.w2, &x.b2, &x.ln2g, &x.ln2b}) {
      t->zero_grad();
    }
  }
  lv.tok_table.zero_grad();
  lv.pos_table.zero_grad();
  lv.cls_w.zero_grad();
  lv.cls_b.zero_grad();
}

void append_grad(std::vector<double>& out, const Tensor& t) {
  auto g = t.grad();
  if (g.empty()) {
    out.insert(out.end(), t.size(), 0.0);
  } else {
    out.insert(out.end(), g.begin(), g.end());
  }
}

std::vector<double> collect_layer_grad(const LayerLeaves& x) {
  std::vector<double> out;
  for (const Tensor* t : {&x.wq, &x.bq, &x.wk, &x.bk, &x.wv, &x.bv, &x.wo, &x.bo, &x.ln1g, &x.ln1b,
                          &x.w1, &x.b1, &x.w2, &x.b2, &x.ln2g, &x.ln2b}) {
    append_grad(out, *t);
  }
  return out;
}

void check_tokens(const EncoderConfig& cfg, const std::vector<int>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
  if (static_cast<int>(tokens.size()) > cfg.max_seq_len) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(tokens.size()) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (int t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw std::invalid_argument("forward: token id " + std::to_string(t) +
                                  " outside vocab of size " + std::to_string(cfg.vocab_size));
    }
  }
}

ForwardResult forward_from_leaves(const EncoderConfig& cfg, const ModelLeaves& lv,
                                  const std::vector<int>& tokens, bool capture) {
  check_tokens(cfg, tokens);
  const int n = static_cast<int>(tokens.size());
  const int heads = cfg.num_heads;
  const int dh = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;

  Tensor x = add(embedding_lookup(lv.tok_table, tokens), embedding_lookup(lv.pos_table, positions));

  AttentionRecord rec;
  if (capture) {
    rec.seq_len = n;
    rec.token_ids = tokens;
    rec.per_layer.reserve(cfg.num_layers);
  }

  for (int l = 0; l < cfg.num_layers; ++l) {
    const LayerLeaves& w = lv.layers[l];
    Tensor q = add_rowwise(matmul(x, w.wq), w.bq);
    Tensor k = add_rowwise(matmul(x, w.wk), w.bk);
    Tensor v = add_rowwise(matmul(x, w.wv), w.bv);

    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    std::vector<double> captured;
    if (capture) captured.reserve(static_cast<std::size_t>(heads) * n * n);
    for (int h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * dh, dh);
      Tensor kh = slice_cols(k, h * dh, dh);
      Tensor vh = slice_cols(v, h * dh, dh);
      Tensor attn = softmax_rows(scale(matmul(qh, transpose(kh)), att_scale));
      if (capture) {
        auto a = attn.data();
        captured.insert(captured.end(), a.begin(), a.end());
      }
      head_out.push_back(matmul(attn, vh));
    }
    Tensor attn_out = add_rowwise(matmul(concat_cols(head_out), w.wo), w.bo);
    x = layer_norm(add(x, attn_out), w.ln1g, w.ln1b);

    Tensor hidden = gelu(add_rowwise(matmul(x, w.w1), w.b1));
    Tensor ff = add_rowwise(matmul(hidden, w.w2), w.b2);
    x = layer_norm(add(x, ff), w.ln2g, w.ln2b);

    if (capture) {
      rec.per_layer.push_back(Tensor::from_data({heads, n, n}, std::move(captured)));
      captured.clear();
    }
  }

  ForwardResult out;
  out.logits = add_rowwise(matmul(x, lv.cls_w), lv.cls_b);
  if (capture) out.attention = std::move(rec);
  return out;
}

void check_labels(const LabeledSequence& seq, int num_labels) {
  if (seq.labels.size() != seq.tokens.size()) {
    throw std::invalid_argument("loss: sequence has " + std::to_string(seq.tokens.size()) +
                                " tokens but " + std::to_string(seq.labels.size()) + " labels");
  }
  for (int l : seq.labels) {
    if (l < 0 || l >= num_labels) {
      throw std::invalid_argument("loss: label " + std::to_string(l) + " outside [0," +
                                  std::to_string(num_labels) + ")");
    }
  }
}

}  // namespace

ModelState ModelState::init(const EncoderConfig& cfg, RngStream& rng) {
  cfg.validate();
  ModelState m;
  m.config = cfg;

  auto fill_gauss = [&rng](std::vector<double>& v, std::size_t from, std::size_t count, double std) {
    for (std::size_t i = 0; i < count; ++i) v[from + i] = rng.next_gaussian() * std;
  };

  m.embedding.assign(embedding_param_count(cfg), 0.0);
  fill_gauss(m.embedding, 0, m.embedding.size(), 0.1);

  const LayerLayout ll(cfg);
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  const double ff_std = 1.0 / std::sqrt(static_cast<double>(cfg.d_ff));
  // Residual-writing projections start small so early layers pass inputs
  // through nearly unchanged; this keeps short-horizon SGD training stable.
  const double residual_scale = 1.0 / std::sqrt(2.0 * cfg.num_layers);
  m.layers.assign(cfg.num_layers, {});
  for (int l = 0; l < cfg.num_layers; ++l) {
    auto& blk = m.layers[l];
    blk.assign(ll.total, 0.0);
    const std::size_t dd = static_cast<std::size_t>(cfg.d_model) * cfg.d_model;
    fill_gauss(blk, ll.wq, dd, proj_std);
    fill_gauss(blk, ll.wk, dd, proj_std);
    fill_gauss(blk, ll.wv, dd, proj_std);
    fill_gauss(blk, ll.wo, dd, proj_std * residual_scale);
    std::fill_n(blk.begin() + ll.ln1g, cfg.d_model, 1.0);
    fill_gauss(blk, ll.w1, static_cast<std::size_t>(cfg.d_model) * cfg.d_ff, proj_std);
    fill_gauss(blk, ll.w2, static_cast<std::size_t>(cfg.d_ff) * cfg.d_model,
               ff_std * residual_scale);
    std::fill_n(blk.begin() + ll.ln2g, cfg.d_model, 1.0);
  }

  // Zero classifier: logits start uniform.
  m.classifier.assign(classifier_param_count(cfg), 0.0);
  return m;
}

std::vector<double> ModelState::flatten() const {
  std::vector<double> out;
  out.reserve(total_param_count());
  for (const auto& blk : layers) out.insert(out.end(), blk.begin(), blk.end());
  out.insert(out.end(), embedding.begin(), embedding.end());
  out.insert(out.end(), classifier.begin(), classifier.end());
  return out;
}

ModelState ModelState::unflatten(const EncoderConfig& cfg, std::span<const double> flat) {
  cfg.validate();
  const std::size_t lp = layer_param_count(cfg);
  const std::size_t ep = embedding_param_count(cfg);
  const std::size_t cp = classifier_param_count(cfg);
  if (flat.size() != lp * cfg.num_layers + ep + cp) {
    throw std::invalid_argument("ModelState::unflatten: flat size " + std::to_string(flat.size()) +
                                " does not match config");
  }
  ModelState m;
  m.config = cfg;
  std::size_t off = 0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    m.layers.emplace_back(flat.begin() + off, flat.begin() + off + lp);
    off += lp;
  }
  m.embedding.assign(flat.begin() + off, flat.begin() + off + ep);
  off += ep;
  m.classifier.assign(flat.begin() + off, flat.begin() + off + cp);
  return m;
}

std::size_t ModelState::total_param_count() const {
  return layer_param_count(config) * config.num_layers + embedding_param_count(config) +
         classifier_param_count(config);
}

FreezeMask FreezeMask::all_trainable(int num_layers) {
  FreezeMask m;
  m.layer.assign(num_layers, true);
  return m;
}

bool FreezeMask::any_trainable() const {
  if (embedding || classifier) return true;
  return std::any_of(layer.begin(), layer.end(), [](bool b) { return b; });
}

ForwardResult forward(const ModelState& model, const std::vector<int>& tokens, bool capture) {
  ModelLeaves lv = build_leaves(model, nullptr);
  return forward_from_leaves(model.config, lv, tokens, capture);
}

LossAndGrads example_grads(const ModelState& model, const LabeledSequence& seq,
                           const FreezeMask& mask) {
  return loss_and_grads(model, {&seq}, mask);
}

LossAndGrads loss_and_grads(const ModelState& model,
                            const std::vector<const LabeledSequence*>& batch,
                            const FreezeMask& mask) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grads: empty batch");
  if (static_cast<int>(mask.layer.size()) != model.config.num_layers) {
    throw std::invalid_argument("loss_and_grads: mask covers " + std::to_string(mask.layer.size()) +
                                " layers, model has " + std::to_string(model.config.num_layers));
  }
  if (!mask.any_trainable()) {
    throw std::invalid_argument("loss_and_grads: freeze mask leaves nothing trainable");
  }

  ModelLeaves lv = build_leaves(model, &mask);
  LossAndGrads out;
  out.grads.layers.assign(model.config.num_layers, {});

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  bool first = true;
  for (const LabeledSequence* seq : batch) {
    check_labels(*seq, model.config.num_labels);
    zero_leaf_grads(lv);
    ForwardResult fwd = forward_from_leaves(model.config, lv, seq->tokens, false);
    Tensor loss = cross_entropy_with_logits(fwd.logits, seq->labels);
    backward(loss);
    out.loss += loss.value();

    // Accumulate per-example gradients left-to-right in batch order.
    for (int l = 0; l < model.config.num_layers; ++l) {
      if (!mask.layer[l]) continue;
      std::vector<double> g = collect_layer_grad(lv.layers[l]);
      if (first) {
        out.grads.layers[l] = std::move(g);
      } else {
        auto& acc = out.grads.layers[l];
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
      }
    }
    if (mask.embedding) {
      std::vector<double> g;
      append_grad(g, lv.tok_table);
      append_grad(g, lv.pos_table);
      if (first) {
        out.grads.embedding = std::move(g);
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) out.grads.embedding[i] += g[i];
      }
    }
    if (mask.classifier) {
      std::vector<double> g;
      append_grad(g, lv.cls_w);
      append_grad(g, lv.cls_b);
      if (first) {
        out.grads.classifier = std::move(g);
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) out.grads.classifier[i] += g[i];
      }
    }
    first = false;
  }

  out.loss *= inv_b;
  if (batch.size() > 1) {
    for (auto& blk : out.grads.layers) {
      for (double& v : blk) v *= inv_b;
    }
    for (double& v : out.grads.embedding) v *= inv_b;
    for (double& v : out.grads.classifier) v *= inv_b;
  }
  return out;
}

double batch_loss(const ModelState& model, const std::vector<const LabeledSequence*>& batch) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  ModelLeaves lv = build_leaves(model, nullptr);
  double total = 0.0;
  for (const LabeledSequence* seq : batch) {
    check_labels(*seq, model.config.num_labels);
    ForwardResult fwd = forward_from_leaves(model.config, lv, seq->tokens, false);
    total += cross_entropy_with_logits(fwd.logits, seq->labels).value();
  }
  return total / static_cast<double>(batch.size());
}

void sgd_step(ModelState& model, const BlockGrads& grads, double lr) {
  auto apply = [lr](std::vector<double>& p, const std::vector<double>& g, const char* what) {
    if (g.empty()) return;  // frozen
    if (g.size() != p.size()) {
      throw std::invalid_argument(std::string("sgd_step: gradient size mismatch for ") + what);
    }
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  };
  if (grads.layers.size() != model.layers.size()) {
    throw std::invalid_argument("sgd_step: gradient block count mismatch");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    apply(model.layers[l], grads.layers[l], "layer");
  }
  apply(model.embedding, grads.embedding, "embedding");
  apply(model.classifier, grads.classifier, "classifier");
}

double warmup_lr(double base_lr, std::int64_t step, int warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

std::vector<double> concat_trainable(const BlockGrads& grads, const FreezeMask& mask) {
  std::vector<double> out;
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    if (mask.layer[l]) out.insert(out.end(), grads.layers[l].begin(), grads.layers[l].end());
  }
  if (mask.embedding) out.insert(out.end(), grads.embedding.begin(), grads.embedding.end());
  if (mask.classifier) out.insert(out.end(), grads.classifier.begin(), grads.classifier.end());
  return out;
}

BlockGrads split_trainable(std::span<const double> flat, const FreezeMask& mask,
                           const EncoderConfig& cfg) {
  BlockGrads out;
  out.layers.assign(cfg.num_layers, {});
  const std::size_t lp = layer_param_count(cfg);
  std::size_t off = 0;
  auto take = [&flat, &off](std::size_t n) {
    if (off + n > flat.size()) {
      throw std::invalid_argument("split_trainable: flat vector too short");
    }
    std::vector<double> v(flat.begin() + off, flat.begin() + off + n);
    off += n;
    return v;
  };
  for (int l = 0; l < cfg.num_layers; ++l) {
    if (mask.layer[l]) out.layers[l] = take(lp);
  }
  if (mask.embedding) out.embedding = take(embedding_param_count(cfg));
  if (mask.classifier) out.classifier = take(classifier_param_count(cfg));
  if (off != flat.size()) {
    throw std::invalid_argument("split_trainable: flat vector has trailing data");
  }
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint io: little header, then raw 64-bit blocks
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'A', 'F', 'L', 'M', 'D', 'L', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_block(std::ostream& os, const std::vector<double>& v) {
  write_u64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

std::vector<double> read_block(std::istream& is) {
  const std::uint64_t n = read_u64(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
  return v;
}

}  // namespace

void save_model(const std::string& path, const ModelState& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_model: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  const EncoderConfig& c = model.config;
  for (int v : {c.num_layers, c.num_heads, c.d_model, c.d_ff, c.vocab_size, c.max_seq_len,
                c.num_labels}) {
    write_u64(os, static_cast<std::uint64_t>(v));
  }
  for (const auto& blk : model.layers) write_block(os, blk);
  write_block(os, model.embedding);
  write_block(os, model.classifier);
  if (!os) throw IoError("save_model: write failed for " + path);
}

ModelState load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_model: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("load_model: " + path + " is not a model checkpoint");
  }
  EncoderConfig c;
  c.num_layers = static_cast<int>(read_u64(is));
  c.num_heads = static_cast<int>(read_u64(is));
  c.d_model = static_cast<int>(read_u64(is));
  c.d_ff = static_cast<int>(read_u64(is));
  c.vocab_size = static_cast<int>(read_u64(is));
  c.max_seq_len = static_cast<int>(read_u64(is));
  c.num_labels = static_cast<int>(read_u64(is));
  c.validate();
  ModelState m;
  m.config = c;
  for (int l = 0; l < c.num_layers; ++l) m.layers.push_back(read_block(is));
  m.embedding = read_block(is);
  m.classifier = read_block(is);
  if (!is) throw IoError("load_model: truncated checkpoint " + path);
  if (m.layers[0].size() != layer_param_count(c) ||
      m.embedding.size() != embedding_param_count(c) ||
      m.classifier.size() != classifier_param_count(c)) {
    throw IoError("load_model: block sizes do not match config in " + path);
  }
  return m;
}

}  // namespace safl
