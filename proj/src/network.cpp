// SPDX-License-Identifier: Apache-2.0

#include "epr/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace epr {

// --- Architecture ------------------------------------------------------------

Architecture Architecture::compact() { return {{{16, 1}, {32, 1}, {64, 1}, {64, 1}}, {}}; }

Architecture Architecture::vgg_e() {
  return {{{64, 2}, {128, 2}, {256, 4}, {512, 4}, {512, 4}}, {4096, 4096}};
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

int parse_positive(const std::string& tok, const std::string& descriptor) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || v <= 0)
    throw ConfigError("bad architecture descriptor '" + descriptor + "': '" + tok + "'");
  return v;
}

}  // namespace

Architecture Architecture::parse(const std::string& descriptor) {
  if (descriptor == "compact") return compact();
  if (descriptor == "vgg-e") return vgg_e();
  Architecture arch;
  for (const auto& part : split(descriptor, ';')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ConfigError("bad architecture descriptor '" + descriptor + "'");
    const std::string key = part.substr(0, colon);
    const auto items = split(part.substr(colon + 1), ',');
    if (items.empty()) throw ConfigError("bad architecture descriptor '" + descriptor + "': empty section '" + key + "'");
    if (key == "conv") {
      for (const auto& item : items) {
        const auto x = item.find('x');
        ConvBlock b;
        b.channels = parse_positive(item.substr(0, x), descriptor);
        b.n_convs = x == std::string::npos ? 1 : parse_positive(item.substr(x + 1), descriptor);
        arch.blocks.push_back(b);
      }
    } else if (key == "dense") {
      for (const auto& item : items) arch.dense.push_back(parse_positive(item, descriptor));
    } else {
      throw ConfigError("bad architecture descriptor '" + descriptor + "': unknown section '" + key + "'");
    }
  }
  return arch;
}

std::string Architecture::describe() const {
  if (*this == compact()) return "compact";
  if (*this == vgg_e()) return "vgg-e";
  std::ostringstream os;
  os << "conv:";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) os << ',';
    os << blocks[i].channels;
    if (blocks[i].n_convs != 1) os << 'x' << blocks[i].n_convs;
  }
  if (!dense.empty()) {
    os << ";dense:";
    for (std::size_t i = 0; i < dense.size(); ++i) os << (i ? "," : "") << dense[i];
  }
  return os.str();
}

// --- Network -----------------------------------------------------------------

Network::Network(const Architecture& arch, int n_classes, int input_rows, int input_cols)
    : n_classes_(n_classes), input_rows_(input_rows), input_cols_(input_cols) {
  if (n_classes < 2) throw ConfigError("network needs at least 2 classes");
  int c = 1, h = input_rows, w = input_cols;
  auto add = [&](LayerShape l, std::size_t n_weights, std::size_t n_bias) {
    l.weight_offset = n_params_;
    l.bias_offset = n_params_ + n_weights;
    n_params_ += n_weights + n_bias;
    layers_.push_back(l);
  };
  for (const auto& block : arch.blocks) {
    for (int i = 0; i < block.n_convs; ++i) {
      add({LayerKind::kConv, c, block.channels, h, w, true}, static_cast<std::size_t>(block.channels) * 9 * c,
          block.channels);
      c = block.channels;
    }
    if (h < 2 || w < 2) throw ConfigError("architecture pools below 1x1 for a " + std::to_string(input_rows) +
                                          "x" + std::to_string(input_cols) + " input");
    add({LayerKind::kPool, c, c, h, w, false}, 0, 0);
    h /= 2;
    w /= 2;
  }
  int d = c * h * w;
  for (int width : arch.dense) {
    add({LayerKind::kDense, d, width, 1, 1, true}, static_cast<std::size_t>(width) * d, width);
    d = width;
  }
  add({LayerKind::kDense, d, n_classes, 1, 1, false}, static_cast<std::size_t>(n_classes) * d, n_classes);
}

std::vector<double> Network::init_params(std::uint64_t seed) const {
  std::vector<double> p(n_params_, 0.0);
  Rng rng(seed);
  for (const auto& l : layers_) {
    if (l.kind == LayerKind::kPool) continue;
    const int fan_in = l.kind == LayerKind::kConv ? 9 * l.in_channels : l.in_channels;
    const double sd = std::sqrt(2.0 / fan_in);
    for (std::size_t i = l.weight_offset; i < l.bias_offset; ++i) p[i] = sd * rng.normal();
  }
  return p;
}

Matrix Network::pack(std::span<const Segment* const> batch) const {
  const Eigen::Index hw = static_cast<Eigen::Index>(input_rows_) * input_cols_;
  Matrix in(1, hw * static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Matrix& v = batch[b]->values;
    if (v.rows() != input_rows_ || v.cols() != input_cols_)
      throw ConfigError("segment shape " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                        " does not match network input " + std::to_string(input_rows_) + "x" +
                        std::to_string(input_cols_));
    double* dst = in.data() + b * hw;
    for (int y = 0; y < input_rows_; ++y)
      for (int x = 0; x < input_cols_; ++x) dst[y * input_cols_ + x] = v(y, x);
  }
  return in;
}

namespace {

using ConstMap = Eigen::Map<const Matrix>;

// Builds the (9*C) x (B*H*W) patch matrix; row (ky*3 + kx)*C + c.
void im2col(const Matrix& in, int c, int h, int w, int batch, Matrix& cols) {
  const Eigen::Index rows = 9 * c;
  cols.setZero(rows, static_cast<Eigen::Index>(batch) * h * w);
  const double* src = in.data();
  double* dst = cols.data();
  for (int b = 0; b < batch; ++b)
    for (int y = 0; y < h; ++y)
      for (int ky = 0; ky < 3; ++ky) {
        const int yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int x0 = kx == 0 ? 1 : 0;
          const int x1 = kx == 2 ? w - 1 : w;
          const Eigen::Index row_off = (ky * 3 + kx) * c;
          const Eigen::Index j0 = (static_cast<Eigen::Index>(b) * h + y) * w;
          const Eigen::Index jj0 = (static_cast<Eigen::Index>(b) * h + yy) * w + (kx - 1);
          for (int x = x0; x < x1; ++x) {
            double* d = dst + (j0 + x) * rows + row_off;
            const double* s = src + (jj0 + x) * c;
            for (int k = 0; k < c; ++k) d[k] = s[k];
          }
        }
      }
}

void col2im(const Matrix& cols, int c, int h, int w, int batch, Matrix& out) {
  const Eigen::Index rows = 9 * c;
  out.setZero(c, static_cast<Eigen::Index>(batch) * h * w);
  const double* src = cols.data();
  double* dst = out.data();
  for (int b = 0; b < batch; ++b)
    for (int y = 0; y < h; ++y)
      for (int ky = 0; ky < 3; ++ky) {
        const int yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int x0 = kx == 0 ? 1 : 0;
          const int x1 = kx == 2 ? w - 1 : w;
          const Eigen::Index row_off = (ky * 3 + kx) * c;
          const Eigen::Index j0 = (static_cast<Eigen::Index>(b) * h + y) * w;
          const Eigen::Index jj0 = (static_cast<Eigen::Index>(b) * h + yy) * w + (kx - 1);
          for (int x = x0; x < x1; ++x) {
            const double* s = src + (j0 + x) * rows + row_off;
            double* d = dst + (jj0 + x) * c;
            for (int k = 0; k < c; ++k) d[k] += s[k];
          }
        }
      }
}

}  // namespace

Matrix Network::forward(std::span<const double> params, const Matrix& input, int batch, Workspace* ws) const {
  if (params.size() != n_params_) throw ConfigError("parameter vector size mismatch");
  if (ws) {
    ws->batch = batch;
    ws->inputs.assign(layers_.size(), Matrix());
    ws->argmax.clear();
  }
  Matrix cur = input;
  Matrix cols;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const LayerShape& l = layers_[li];
    Matrix next;
    switch (l.kind) {
      case LayerKind::kConv: {
        im2col(cur, l.in_channels, l.height, l.width, batch, cols);
        ConstMap wt(params.data() + l.weight_offset, l.out_channels, 9 * l.in_channels);
        Eigen::Map<const Vector> bias(params.data() + l.bias_offset, l.out_channels);
        next.noalias() = wt * cols;
        next.colwise() += bias;
        next = next.cwiseMax(0.0);
        break;
      }
      case LayerKind::kPool: {
        const int h2 = l.height / 2, w2 = l.width / 2, c = l.in_channels;
        next.resize(c, static_cast<Eigen::Index>(batch) * h2 * w2);
        std::vector<std::int32_t> arg(static_cast<std::size_t>(next.size()));
        for (int b = 0; b < batch; ++b)
          for (int y = 0; y < h2; ++y)
            for (int x = 0; x < w2; ++x) {
              const Eigen::Index j = (static_cast<Eigen::Index>(b) * h2 + y) * w2 + x;
              for (int k = 0; k < c; ++k) {
                double best = -INFINITY;
                std::int32_t best_j = 0;
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx) {
                    const auto jj = static_cast<std::int32_t>((static_cast<Eigen::Index>(b) * l.height + 2 * y + dy) *
                                                                  l.width + 2 * x + dx);
                    const double v = cur(k, jj);
                    if (v > best) {
                      best = v;
                      best_j = jj;
                    }
                  }
                next(k, j) = best;
                arg[static_cast<std::size_t>(j * c + k)] = best_j;
              }
            }
        if (ws) ws->argmax.push_back(std::move(arg));
        break;
      }
      case LayerKind::kDense: {
        if (cur.rows() != l.in_channels) cur = Eigen::Map<const Matrix>(cur.data(), l.in_channels, batch);
        ConstMap wt(params.data() + l.weight_offset, l.out_channels, l.in_channels);
        Eigen::Map<const Vector> bias(params.data() + l.bias_offset, l.out_channels);
        next.noalias() = wt * cur;
        next.colwise() += bias;
        if (l.relu) next = next.cwiseMax(0.0);
        break;
      }
    }
    if (ws) ws->inputs[li] = std::move(cur);
    cur = std::move(next);
  }
  return cur;
}

void Network::backward(std::span<const double> params, const Matrix& dlogits, Workspace& ws,
                       std::vector<double>& grad) const {
  grad.assign(n_params_, 0.0);
  const int batch = ws.batch;
  Matrix delta = dlogits;  // gradient w.r.t. the current layer's output
  Matrix cols;
  std::size_t pool_index = ws.argmax.size();
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const LayerShape& l = layers_[li];
    const Matrix& in = ws.inputs[li];
    // Post-activation output of this layer is the next layer's stored input.
    if (l.relu) {
      const Matrix& out = li + 1 < layers_.size() ? ws.inputs[li + 1] : in;
      const Eigen::Map<const Matrix> out_view(out.data(), delta.rows(), delta.cols());
      delta = (out_view.array() > 0.0).select(delta, 0.0);
    }
    Matrix din;
    switch (l.kind) {
      case LayerKind::kConv: {
        im2col(in, l.in_channels, l.height, l.width, batch, cols);
        Eigen::Map<Matrix> gw(grad.data() + l.weight_offset, l.out_channels, 9 * l.in_channels);
        Eigen::Map<Vector> gb(grad.data() + l.bias_offset, l.out_channels);
        gw.noalias() = delta * cols.transpose();
        gb = delta.rowwise().sum();
        if (li > 0) {
          ConstMap wt(params.data() + l.weight_offset, l.out_channels, 9 * l.in_channels);
          Matrix dcols = wt.transpose() * delta;
          col2im(dcols, l.in_channels, l.height, l.width, batch, din);
        }
        break;
      }
      case LayerKind::kPool: {
        const auto& arg = ws.argmax[--pool_index];
        const int c = l.in_channels;
        din.setZero(c, static_cast<Eigen::Index>(batch) * l.height * l.width);
        const Eigen::Map<const Matrix> d(delta.data(), c, delta.size() / c);
        for (Eigen::Index j = 0; j < d.cols(); ++j)
          for (int k = 0; k < c; ++k) din(k, arg[static_cast<std::size_t>(j * c + k)]) += d(k, j);
        break;
      }
      case LayerKind::kDense: {
        Eigen::Map<Matrix> gw(grad.data() + l.weight_offset, l.out_channels, l.in_channels);
        Eigen::Map<Vector> gb(grad.data() + l.bias_offset, l.out_channels);
        gw.noalias() = delta * in.transpose();
        gb = delta.rowwise().sum();
        if (li > 0) {
          ConstMap wt(params.data() + l.weight_offset, l.out_channels, l.in_channels);
          din.noalias() = wt.transpose() * delta;
        }
        break;
      }
    }
    delta = std::move(din);
  }
}

namespace {

std::vector<EmotionDistribution> softmax_columns(const Matrix& logits) {
  std::vector<EmotionDistribution> out;
  out.reserve(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index b = 0; b < logits.cols(); ++b)
    out.push_back(EmotionDistribution::softmax({logits.col(b).data(), static_cast<std::size_t>(logits.rows())}));
  return out;
}

double batch_loss(const std::vector<EmotionDistribution>& probs, std::span<const EmotionDistribution> targets,
                  LossKind kind) {
  double total = 0.0;
  for (std::size_t b = 0; b < probs.size(); ++b)
    total += kind == LossKind::kCrossEntropy ? cross_entropy(probs[b], targets[b])
                                             : kl_divergence(probs[b], targets[b]);
  return total / static_cast<double>(probs.size());
}

}  // namespace

double Network::loss_and_gradient(std::span<const double> params, const Matrix& input,
                                  std::span<const EmotionDistribution> targets, LossKind kind,
                                  std::vector<double>& grad) const {
  const int batch = static_cast<int>(targets.size());
  Workspace ws;
  const Matrix logits = forward(params, input, batch, &ws);
  const auto probs = softmax_columns(logits);
  Matrix dlogits(n_classes_, batch);
  const double inv_b = 1.0 / batch;
  for (int b = 0; b < batch; ++b) {
    const auto& p = probs[b];
    const auto& t = targets[b];
    if (t.size() != static_cast<std::size_t>(n_classes_)) throw ConfigError("target class count mismatch");
    if (kind == LossKind::kCrossEntropy) {
      for (int k = 0; k < n_classes_; ++k) dlogits(k, b) = (p[k] - t[k]) * inv_b;
    } else {
      // dKL/dp_k = -t_k / p_k; the -sum t ln t term has no parameter dependence.
      std::vector<double> g(n_classes_);
      double dot = 0.0;
      for (int k = 0; k < n_classes_; ++k) {
        g[k] = -t[k] / std::max(p[k], kProbFloor) * inv_b;
        dot += p[k] * g[k];
      }
      for (int k = 0; k < n_classes_; ++k) dlogits(k, b) = p[k] * (g[k] - dot);
    }
  }
  backward(params, dlogits, ws, grad);
  return batch_loss(probs, targets, kind);
}

double Network::loss(std::span<const double> params, const Matrix& input,
                     std::span<const EmotionDistribution> targets, LossKind kind) const {
  const Matrix logits = forward(params, input, static_cast<int>(targets.size()), nullptr);
  return batch_loss(softmax_columns(logits), targets, kind);
}

// --- Model -------------------------------------------------------------------

EmotionDistribution predict(const Model& m, const Segment& s) {
  return predict_batch(m, std::span<const Segment>(&s, 1)).front();
}

std::vector<EmotionDistribution> predict_batch(const Model& m, std::span<const Segment> segments) {
  const Network net = m.network();
  std::vector<EmotionDistribution> out;
  out.reserve(segments.size());
  constexpr std::size_t kChunk = 128;
  for (std::size_t start = 0; start < segments.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, segments.size() - start);
    std::vector<const Segment*> ptrs(n);
    for (std::size_t i = 0; i < n; ++i) ptrs[i] = &segments[start + i];
    const Matrix logits = net.forward(m.params, net.pack(ptrs), static_cast<int>(n), nullptr);
    for (auto& d : softmax_columns(logits)) out.push_back(std::move(d));
  }
  return out;
}

namespace {

constexpr char kModelMagic[8] = {'E', 'P', 'R', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw DataError("truncated model checkpoint");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
  nlohmann::json header = {{"architecture", m.arch.describe()},
                           {"n_classes", m.n_classes},
                           {"class_names", m.class_names},
                           {"generation", m.generation},
                           {"seed", m.seed},
                           {"input_rows", m.input_rows},
                           {"input_cols", m.input_cols},
                           {"n_params", m.params.size()}};
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write model checkpoint: " + path);
  os.write(kModelMagic, sizeof(kModelMagic));
  write_le<std::uint32_t>(os, kModelVersion);
  write_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double p : m.params) write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(p));
  if (!os) throw DataError("failed writing model checkpoint: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open model checkpoint: " + path);
  char magic[sizeof(kModelMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw DataError("not a model checkpoint: " + path);
  if (read_le<std::uint32_t>(is) != kModelVersion) throw DataError("unsupported checkpoint version: " + path);
  const auto len = read_le<std::uint64_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text);
  Model m;
  m.arch = Architecture::parse(header.at("architecture").get<std::string>());
  m.n_classes = header.at("n_classes").get<int>();
  m.class_names = header.at("class_names").get<std::vector<std::string>>();
  m.generation = header.at("generation").get<int>();
  m.seed = header.at("seed").get<std::uint64_t>();
  m.input_rows = header.at("input_rows").get<int>();
  m.input_cols = header.at("input_cols").get<int>();
  const auto n = header.at("n_params").get<std::size_t>();
  if (n != m.network().param_count()) throw DataError("checkpoint parameter count does not match architecture");
  m.params.resize(n);
  for (auto& p : m.params) p = std::bit_cast<double>(read_le<std::uint64_t>(is));
  return m;
}

}  // namespace epr
