#include "cytocount/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "cytocount/rng.hpp"

namespace cyto {

// ---------------------------------------------------------------------------
// Internal feature representation
//
// A feature map with C channels over an R x C grid is stored as an Eigen
// matrix of shape (R*C, channels): one column per channel, pixels in row-major
// order. Convolutions run as one GEMM against an im2col patch matrix of shape
// (R*C, in_ch*k*k) whose column (c*k + ki)*k + kj holds input channel c
// shifted by (ki-1, kj-1); this keeps every copy in im2col/col2im contiguous.
// ---------------------------------------------------------------------------

namespace detail {

struct FeatDims {
  int rows = 0;
  int cols = 0;
  long long npix() const { return static_cast<long long>(rows) * cols; }
};

struct ConvCache {
  Eigen::MatrixXd x;  // im2col patches (or the raw input for 1x1 convs)
  Eigen::MatrixXd z;  // pre-activation
  FeatDims dims;      // spatial dims of the output
};

struct HeadCache {
  std::vector<ConvCache> up;  // deepest stage first, matching Decoder::up
  ConvCache out;
  Eigen::MatrixXd prob;       // clamped sigmoid outputs
};

struct WorkspaceData {
  FeatDims input_dims;
  Eigen::MatrixXd input;                 // (npix, 3)
  std::vector<ConvCache> enc;            // per encoder stage
  std::vector<Eigen::MatrixXd> enc_act;  // post-ReLU, pre-pool (skip source)
  std::vector<std::vector<int>> pool_argmax;  // per stage: npix_out * ch source rows
  std::vector<FeatDims> pooled_dims;
  ConvCache bottleneck;
  Eigen::MatrixXd bottleneck_act;
  std::vector<HeadCache> heads;  // aligned with Network::decoders_
  bool valid = false;
};

}  // namespace detail

using detail::ConvCache;
using detail::FeatDims;
using detail::WorkspaceData;

Workspace::Workspace() : data(std::make_unique<WorkspaceData>()) {}
Workspace::~Workspace() = default;
Workspace::Workspace(Workspace&&) noexcept = default;
Workspace& Workspace::operator=(Workspace&&) noexcept = default;

namespace {

constexpr double kProbEps = 1e-12;
constexpr int kHeadCount = 3;  // main, dynamic, prior

const char* head_name(int head) {
  switch (head) {
    case 0: return "main";
    case 1: return "dynamic";
    default: return "prior";
  }
}

// Fills `x` (npix, in_ch*9) with 3x3 zero-padded patches of `in` (npix, in_ch).
void im2col3(const Eigen::MatrixXd& in, FeatDims d, Eigen::MatrixXd& x) {
  const long long npix = d.npix();
  const int in_ch = static_cast<int>(in.cols());
  x.setZero(npix, static_cast<long long>(in_ch) * 9);
  for (int c = 0; c < in_ch; ++c) {
    for (int ki = 0; ki < 3; ++ki) {
      for (int kj = 0; kj < 3; ++kj) {
        const int col = (c * 3 + ki) * 3 + kj;
        const int di = ki - 1;
        const int dj = kj - 1;
        for (int i = 0; i < d.rows; ++i) {
          const int si = i + di;
          if (si < 0 || si >= d.rows) continue;
          const int j_lo = std::max(0, -dj);
          const int j_hi = std::min(d.cols, d.cols - dj);
          if (j_hi <= j_lo) continue;
          x.block(static_cast<long long>(i) * d.cols + j_lo, col, j_hi - j_lo, 1) =
              in.block(static_cast<long long>(si) * d.cols + j_lo + dj, c, j_hi - j_lo, 1);
        }
      }
    }
  }
}

// Transpose of im2col3: scatter-adds patch-space gradients back to the input.
void col2im3(const Eigen::MatrixXd& dx, FeatDims d, int in_ch, Eigen::MatrixXd& din) {
  din.setZero(d.npix(), in_ch);
  for (int c = 0; c < in_ch; ++c) {
    for (int ki = 0; ki < 3; ++ki) {
      for (int kj = 0; kj < 3; ++kj) {
        const int col = (c * 3 + ki) * 3 + kj;
        const int di = ki - 1;
        const int dj = kj - 1;
        for (int i = 0; i < d.rows; ++i) {
          const int si = i + di;
          if (si < 0 || si >= d.rows) continue;
          const int j_lo = std::max(0, -dj);
          const int j_hi = std::min(d.cols, d.cols - dj);
          if (j_hi <= j_lo) continue;
          din.block(static_cast<long long>(si) * d.cols + j_lo + dj, c, j_hi - j_lo, 1) +=
              dx.block(static_cast<long long>(i) * d.cols + j_lo, col, j_hi - j_lo, 1);
        }
      }
    }
  }
}

// conv + pre-activation cache. For k=1 the input itself is the patch matrix.
void conv_forward(const ConvLayer& layer, const Eigen::MatrixXd& in, FeatDims d, ConvCache& cache) {
  if (layer.ksize == 3) {
    im2col3(in, d, cache.x);
  } else {
    cache.x = in;
  }
  cache.dims = d;
  cache.z.noalias() = cache.x * layer.w.transpose();
  cache.z.rowwise() += layer.b.transpose();
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// Backward through one conv given d(pre-activation); returns d(input).
Eigen::MatrixXd conv_backward(const ConvLayer& layer, const ConvCache& cache,
                              const Eigen::MatrixXd& dz, Eigen::MatrixXd& dw,
                              Eigen::VectorXd& db) {
  dw.noalias() += dz.transpose() * cache.x;
  db.noalias() += dz.colwise().sum().transpose();
  if (layer.ksize == 3) {
    const Eigen::MatrixXd dx = dz * layer.w;
    Eigen::MatrixXd din;
    col2im3(dx, cache.dims, layer.in_ch, din);
    return din;
  }
  return dz * layer.w;
}

// 2x2 max pooling with argmax routing. First occurrence wins ties, scanning
// the window in row-major order — deterministic.
Eigen::MatrixXd maxpool2(const Eigen::MatrixXd& in, FeatDims d, FeatDims& out_dims,
                         std::vector<int>& argmax) {
  out_dims = FeatDims{d.rows / 2, d.cols / 2};
  const long long npix_out = out_dims.npix();
  const int ch = static_cast<int>(in.cols());
  Eigen::MatrixXd out(npix_out, ch);
  argmax.assign(static_cast<std::size_t>(npix_out) * ch, 0);
  for (int c = 0; c < ch; ++c) {
    for (int oi = 0; oi < out_dims.rows; ++oi) {
      for (int oj = 0; oj < out_dims.cols; ++oj) {
        const long long p_out = static_cast<long long>(oi) * out_dims.cols + oj;
        double best = -std::numeric_limits<double>::infinity();
        long long best_idx = 0;
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            const long long p_in =
                static_cast<long long>(2 * oi + di) * d.cols + (2 * oj + dj);
            const double v = in(p_in, c);
            if (v > best) {
              best = v;
              best_idx = p_in;
            }
          }
        }
        out(p_out, c) = best;
        argmax[static_cast<std::size_t>(c) * npix_out + p_out] = static_cast<int>(best_idx);
      }
    }
  }
  return out;
}

void maxpool2_backward(const Eigen::MatrixXd& dout, FeatDims in_dims,
                       const std::vector<int>& argmax, Eigen::MatrixXd& din) {
  const long long npix_out = dout.rows();
  const int ch = static_cast<int>(dout.cols());
  din.setZero(in_dims.npix(), ch);
  for (int c = 0; c < ch; ++c) {
    for (long long p = 0; p < npix_out; ++p) {
      din(argmax[static_cast<std::size_t>(c) * npix_out + p], c) += dout(p, c);
    }
  }
}

// Nearest-neighbor 2x upsampling.
Eigen::MatrixXd upsample2(const Eigen::MatrixXd& in, FeatDims d, FeatDims& out_dims) {
  out_dims = FeatDims{d.rows * 2, d.cols * 2};
  const int ch = static_cast<int>(in.cols());
  Eigen::MatrixXd out(out_dims.npix(), ch);
  for (int i = 0; i < out_dims.rows; ++i) {
    const long long src_row = static_cast<long long>(i / 2) * d.cols;
    const long long dst_row = static_cast<long long>(i) * out_dims.cols;
    for (int j = 0; j < out_dims.cols; ++j) {
      out.row(dst_row + j) = in.row(src_row + j / 2);
    }
  }
  return out;
}

Eigen::MatrixXd upsample2_backward(const Eigen::MatrixXd& dout, FeatDims in_dims) {
  const FeatDims out_dims{in_dims.rows * 2, in_dims.cols * 2};
  Eigen::MatrixXd din = Eigen::MatrixXd::Zero(in_dims.npix(), dout.cols());
  for (int i = 0; i < out_dims.rows; ++i) {
    const long long src_row = static_cast<long long>(i / 2) * in_dims.cols;
    const long long dst_row = static_cast<long long>(i) * out_dims.cols;
    for (int j = 0; j < out_dims.cols; ++j) {
      din.row(src_row + j / 2) += dout.row(dst_row + j);
    }
  }
  return din;
}

Map column_to_map(const Eigen::MatrixXd& mat, int col, FeatDims d) {
  Map m(d.rows, d.cols);
  Eigen::VectorXd::Map(m.v.data(), d.npix()) = mat.col(col);
  return m;
}

Eigen::VectorXd map_to_vector(const Map& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.v.data(), static_cast<long long>(m.size()));
}

ConvLayer make_conv(int in_ch, int out_ch, int ksize) {
  ConvLayer l;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  l.ksize = ksize;
  l.w = Eigen::MatrixXd::Zero(out_ch, static_cast<long long>(in_ch) * ksize * ksize);
  l.b = Eigen::VectorXd::Zero(out_ch);
  return l;
}

}  // namespace

std::vector<int> stage_widths(const NetworkConfig& config) {
  std::vector<int> widths(config.depth);
  for (int s = 0; s < config.depth; ++s) {
    widths[s] = std::max(config.feature_channels >> (config.depth - s), 4);
  }
  return widths;
}

long long decoder_parameter_count(const NetworkConfig& config, int out_channels) {
  const auto widths = stage_widths(config);
  long long count = 0;
  for (int s = config.depth - 1; s >= 0; --s) {
    const int in_ch = s == config.depth - 1 ? config.feature_channels : widths[s + 1];
    count += static_cast<long long>(widths[s]) * in_ch * 9 + widths[s];
  }
  count += static_cast<long long>(out_channels) * widths[0] + out_channels;
  return count;
}

void Gradients::set_zero() {
  for (auto& m : dw) m.setZero();
  for (auto& v : db) v.setZero();
}

Network::Network(NetworkConfig config) : config_(config) {
  if (config_.depth < 1 || config_.depth > 6) {
    throw std::invalid_argument("network depth must be in [1, 6]");
  }
  if (config_.feature_channels < 4) {
    throw std::invalid_argument("feature_channels must be >= 4");
  }
  if (!config_.heads.main) {
    throw std::invalid_argument("the main head is mandatory");
  }
  const auto widths = stage_widths(config_);
  for (int s = 0; s < config_.depth; ++s) {
    encoder_.push_back(make_conv(s == 0 ? 3 : widths[s - 1], widths[s], 3));
  }
  bottleneck_ = make_conv(widths[config_.depth - 1], config_.feature_channels, 3);

  head_index_.assign(kHeadCount, -1);
  const bool enabled[kHeadCount] = {config_.heads.main, config_.heads.dynamic,
                                    config_.heads.prior};
  for (int h = 0; h < kHeadCount; ++h) {
    if (!enabled[h]) continue;
    Decoder dec;
    for (int s = config_.depth - 1; s >= 0; --s) {
      const int in_ch = s == config_.depth - 1 ? config_.feature_channels : widths[s + 1];
      dec.up.push_back(make_conv(in_ch, widths[s], 3));
    }
    dec.out = make_conv(widths[0], h == 2 ? 1 : 2, 1);
    head_index_[h] = static_cast<int>(decoders_.size());
    decoders_.push_back(std::move(dec));
  }
}

std::vector<Network::ParamRef> Network::parameters() {
  std::vector<ParamRef> refs;
  for (int s = 0; s < config_.depth; ++s) {
    refs.push_back({fmt::format("enc{}", s), &encoder_[s]});
  }
  refs.push_back({"bottleneck", &bottleneck_});
  for (int h = 0; h < kHeadCount; ++h) {
    if (head_index_[h] < 0) continue;
    Decoder& dec = decoders_[head_index_[h]];
    for (std::size_t t = 0; t < dec.up.size(); ++t) {
      refs.push_back({fmt::format("{}.up{}", head_name(h), t), &dec.up[t]});
    }
    refs.push_back({fmt::format("{}.out", head_name(h)), &dec.out});
  }
  return refs;
}

std::vector<const ConvLayer*> Network::parameter_layers() const {
  auto* self = const_cast<Network*>(this);
  std::vector<const ConvLayer*> layers;
  for (const auto& ref : self->parameters()) layers.push_back(ref.layer);
  return layers;
}

long long Network::count_parameters() const {
  long long count = 0;
  for (const auto* layer : parameter_layers()) {
    count += layer->w.size() + layer->b.size();
  }
  return count;
}

void Network::init_parameters(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6e6574u));
  for (auto& ref : parameters()) {
    ConvLayer& l = *ref.layer;
    const double stddev = std::sqrt(2.0 / static_cast<double>(l.w.cols()));
    for (long long i = 0; i < l.w.rows(); ++i) {
      for (long long j = 0; j < l.w.cols(); ++j) {
        l.w(i, j) = rng.normal(0.0, stddev);
      }
    }
    l.b.setZero();
  }
}

Gradients Network::make_gradients() const {
  Gradients g;
  for (const auto* layer : parameter_layers()) {
    g.dw.emplace_back(Eigen::MatrixXd::Zero(layer->w.rows(), layer->w.cols()));
    g.db.emplace_back(Eigen::VectorXd::Zero(layer->b.size()));
  }
  return g;
}

void Network::check_dims(const ImagePixels& image) const {
  const int div = 1 << config_.depth;
  if (image.rows <= 0 || image.cols <= 0 || image.rows % div != 0 || image.cols % div != 0) {
    throw UserError(fmt::format(
        "input size {}x{} is not divisible by 2^depth = {} (network depth {})", image.rows,
        image.cols, div, config_.depth));
  }
}

Network::Outputs Network::forward(const ImagePixels& image, Workspace* ws) const {
  check_dims(image);
  Workspace local;
  WorkspaceData& w = ws ? *ws->data : *local.data;
  w.valid = false;

  const FeatDims input_dims{image.rows, image.cols};
  w.input_dims = input_dims;
  w.input.resize(input_dims.npix(), 3);
  for (long long p = 0; p < input_dims.npix(); ++p) {
    w.input(p, 0) = image.rgb[p * 3 + 0];
    w.input(p, 1) = image.rgb[p * 3 + 1];
    w.input(p, 2) = image.rgb[p * 3 + 2];
  }

  // Encoder: conv + ReLU (skip source), then pool.
  w.enc.resize(encoder_.size());
  w.enc_act.resize(encoder_.size());
  w.pool_argmax.resize(encoder_.size());
  w.pooled_dims.resize(encoder_.size());
  Eigen::MatrixXd cur = w.input;
  FeatDims cur_dims = input_dims;
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    conv_forward(encoder_[s], cur, cur_dims, w.enc[s]);
    w.enc_act[s] = relu(w.enc[s].z);
    cur = maxpool2(w.enc_act[s], cur_dims, w.pooled_dims[s], w.pool_argmax[s]);
    cur_dims = w.pooled_dims[s];
  }
  conv_forward(bottleneck_, cur, cur_dims, w.bottleneck);
  w.bottleneck_act = relu(w.bottleneck.z);

  // Decoders: one shared encoder pass feeds every head.
  Outputs outputs;
  w.heads.resize(decoders_.size());
  for (int h = 0; h < kHeadCount; ++h) {
    const int di = head_index_[h];
    if (di < 0) continue;
    const Decoder& dec = decoders_[di];
    detail::HeadCache& cache = w.heads[di];
    cache.up.resize(dec.up.size());

    Eigen::MatrixXd act = w.bottleneck_act;
    FeatDims act_dims = cur_dims;
    for (std::size_t t = 0; t < dec.up.size(); ++t) {
      const int stage = config_.depth - 1 - static_cast<int>(t);
      FeatDims up_dims;
      const Eigen::MatrixXd up = upsample2(act, act_dims, up_dims);
      conv_forward(dec.up[t], up, up_dims, cache.up[t]);
      act = relu(cache.up[t].z);
      act += w.enc_act[stage];  // additive skip
      act_dims = up_dims;
    }
    conv_forward(dec.out, act, act_dims, cache.out);
    cache.prob = (1.0 + (-cache.out.z.array()).exp()).inverse().matrix();
    cache.prob = cache.prob.array().min(1.0 - kProbEps).max(kProbEps).matrix();

    if (h == 2) {
      outputs.prior = column_to_map(cache.prob, 0, input_dims);
    } else {
      MapPair& pair = h == 0 ? outputs.main : outputs.dynamic;
      pair.cls0 = column_to_map(cache.prob, 0, input_dims);
      pair.cls1 = column_to_map(cache.prob, 1, input_dims);
    }
  }
  w.valid = true;
  return outputs;
}

MapPair Network::forward_main(const ImagePixels& image) const {
  // Inference path: evaluate only the main decoder by borrowing a temporary
  // network view would complicate things; instead run forward() on a copy of
  // this network restricted to the main head when extra heads exist.
  if (config_.heads.dynamic || config_.heads.prior) {
    NetworkConfig cfg = config_;
    cfg.heads = HeadSet{true, false, false};
    Network view(cfg);
    view.encoder_ = encoder_;
    view.bottleneck_ = bottleneck_;
    view.decoders_[0] = decoders_[head_index_[0]];
    return view.forward(image).main;
  }
  return forward(image).main;
}

Network::Outputs Network::forward_all(const ImagePixels& image, Workspace* ws) const {
  if (!config_.heads.all()) {
    throw std::logic_error("forward_all requires all three heads to be instantiated");
  }
  return forward(image, ws);
}

void Network::backward(const Workspace& ws, const Outputs& head_grads, Gradients& accum) const {
  const WorkspaceData& w = *ws.data;
  if (!w.valid) throw std::logic_error("backward called without a prior forward");
  if (accum.dw.size() != parameter_layers().size()) {
    throw std::logic_error("gradient container does not match the network");
  }

  // Gradient index bookkeeping mirrors parameters() order.
  int gi = 0;
  std::vector<int> enc_gi(encoder_.size());
  for (std::size_t s = 0; s < encoder_.size(); ++s) enc_gi[s] = gi++;
  const int bott_gi = gi++;
  std::vector<int> head_gi(decoders_.size());
  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    head_gi[d] = gi;
    gi += static_cast<int>(decoders_[d].up.size()) + 1;
  }

  // Accumulators for the shared trunk.
  std::vector<Eigen::MatrixXd> d_enc_act(encoder_.size());
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    d_enc_act[s] = Eigen::MatrixXd::Zero(w.enc_act[s].rows(), w.enc_act[s].cols());
  }
  Eigen::MatrixXd d_bott_act =
      Eigen::MatrixXd::Zero(w.bottleneck_act.rows(), w.bottleneck_act.cols());
  bool any_head = false;

  for (int h = 0; h < kHeadCount; ++h) {
    const int di = head_index_[h];
    // d(loss)/d(probability) for this head, as (npix, out_ch).
    Eigen::MatrixXd dprob;
    if (h == 2) {
      if (head_grads.prior.size() == 0) continue;
      if (di < 0) throw std::logic_error("gradient given for a head that is not instantiated");
      dprob.resize(head_grads.prior.size(), 1);
      dprob.col(0) = map_to_vector(head_grads.prior);
    } else {
      const MapPair& pair = h == 0 ? head_grads.main : head_grads.dynamic;
      if (pair.cls0.size() == 0) continue;
      if (di < 0) throw std::logic_error("gradient given for a head that is not instantiated");
      dprob.resize(pair.cls0.size(), 2);
      dprob.col(0) = map_to_vector(pair.cls0);
      dprob.col(1) = map_to_vector(pair.cls1);
    }
    any_head = true;

    const Decoder& dec = decoders_[di];
    const detail::HeadCache& cache = w.heads[di];

    // Sigmoid: dz = dp * p * (1 - p).
    Eigen::MatrixXd dz =
        (dprob.array() * cache.prob.array() * (1.0 - cache.prob.array())).matrix();
    const int out_gi = head_gi[di] + static_cast<int>(dec.up.size());
    Eigen::MatrixXd dact = conv_backward(dec.out, cache.out, dz, accum.dw[out_gi],
                                         accum.db[out_gi]);

    // Up stages, shallowest (last applied) first.
    for (int t = static_cast<int>(dec.up.size()) - 1; t >= 0; --t) {
      const int stage = config_.depth - 1 - t;
      // The additive skip routes the gradient unchanged into the encoder.
      d_enc_act[stage] += dact;
      Eigen::MatrixXd dz_up =
          (dact.array() * (cache.up[t].z.array() > 0.0).cast<double>()).matrix();
      Eigen::MatrixXd dup = conv_backward(dec.up[t], cache.up[t], dz_up,
                                          accum.dw[head_gi[di] + t], accum.db[head_gi[di] + t]);
      const FeatDims lower_dims{cache.up[t].dims.rows / 2, cache.up[t].dims.cols / 2};
      dact = upsample2_backward(dup, lower_dims);
    }
    d_bott_act += dact;
  }
  if (!any_head) return;

  // Shared trunk: bottleneck, then encoder stages deepest first.
  Eigen::MatrixXd dz_bott =
      (d_bott_act.array() * (w.bottleneck.z.array() > 0.0).cast<double>()).matrix();
  Eigen::MatrixXd d_pooled =
      conv_backward(bottleneck_, w.bottleneck, dz_bott, accum.dw[bott_gi], accum.db[bott_gi]);

  for (int s = static_cast<int>(encoder_.size()) - 1; s >= 0; --s) {
    const FeatDims act_dims = w.enc[s].dims;
    Eigen::MatrixXd d_act;
    maxpool2_backward(d_pooled, act_dims, w.pool_argmax[s], d_act);
    d_act += d_enc_act[s];
    Eigen::MatrixXd dz = (d_act.array() * (w.enc[s].z.array() > 0.0).cast<double>()).matrix();
    d_pooled = conv_backward(encoder_[s], w.enc[s], dz, accum.dw[enc_gi[s]], accum.db[enc_gi[s]]);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'C', 'Y', 'T', 'O', 'N', 'E', 'T', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& in, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw UserError(fmt::format("checkpoint '{}' is truncated", path.string()));
  }
  return v;
}

std::string read_string(std::istream& in, const std::filesystem::path& path) {
  const auto len = read_u32(in, path);
  if (len > (1u << 20)) {
    throw UserError(fmt::format("checkpoint '{}' is corrupt (oversized string)", path.string()));
  }
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) {
    throw UserError(fmt::format("checkpoint '{}' is truncated", path.string()));
  }
  return s;
}

}  // namespace

void save_checkpoint(const Network& net, const std::map<std::string, std::string>& metadata,
                     const std::filesystem::path& path) {
  // Write-temp-then-rename keeps partially written checkpoints invisible.
  const auto tmp = path.parent_path() / (path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw UserError(fmt::format("cannot write checkpoint '{}'", path.string()));
    out.write(kMagic, sizeof(kMagic));
    const auto& cfg = net.config();
    write_u32(out, static_cast<std::uint32_t>(cfg.depth));
    write_u32(out, static_cast<std::uint32_t>(cfg.feature_channels));
    write_u32(out, (cfg.heads.main ? 1u : 0u) | (cfg.heads.dynamic ? 2u : 0u) |
                       (cfg.heads.prior ? 4u : 0u));
    write_u32(out, static_cast<std::uint32_t>(metadata.size()));
    for (const auto& [k, v] : metadata) {
      write_string(out, k);
      write_string(out, v);
    }
    const auto layers = net.parameter_layers();
    write_u32(out, static_cast<std::uint32_t>(layers.size()));
    for (const auto* layer : layers) {
      write_u32(out, static_cast<std::uint32_t>(layer->w.rows()));
      write_u32(out, static_cast<std::uint32_t>(layer->w.cols()));
      out.write(reinterpret_cast<const char*>(layer->w.data()),
                static_cast<std::streamsize>(layer->w.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(layer->b.data()),
                static_cast<std::streamsize>(layer->b.size() * sizeof(double)));
    }
    if (!out) throw UserError(fmt::format("cannot write checkpoint '{}'", path.string()));
  }
  std::filesystem::rename(tmp, path);
}

Network load_checkpoint(const std::filesystem::path& path,
                        std::map<std::string, std::string>* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError(fmt::format("cannot open checkpoint '{}'", path.string()));
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw UserError(fmt::format("'{}' is not a checkpoint file", path.string()));
  }
  NetworkConfig cfg;
  cfg.depth = static_cast<int>(read_u32(in, path));
  cfg.feature_channels = static_cast<int>(read_u32(in, path));
  const auto head_bits = read_u32(in, path);
  cfg.heads = HeadSet{(head_bits & 1u) != 0, (head_bits & 2u) != 0, (head_bits & 4u) != 0};

  const auto meta_count = read_u32(in, path);
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = read_string(in, path);
    std::string v = read_string(in, path);
    if (metadata) (*metadata)[std::move(k)] = std::move(v);
  }

  Network net(cfg);
  auto refs = net.parameters();
  const auto tensor_count = read_u32(in, path);
  if (tensor_count != refs.size()) {
    throw UserError(fmt::format(
        "checkpoint '{}' does not match its declared architecture ({} tensors, expected {})",
        path.string(), tensor_count, refs.size()));
  }
  for (auto& ref : refs) {
    const auto rows = read_u32(in, path);
    const auto cols = read_u32(in, path);
    if (rows != static_cast<std::uint32_t>(ref.layer->w.rows()) ||
        cols != static_cast<std::uint32_t>(ref.layer->w.cols())) {
      throw UserError(fmt::format(
          "checkpoint '{}': tensor '{}' has shape {}x{}, expected {}x{}", path.string(), ref.name,
          rows, cols, ref.layer->w.rows(), ref.layer->w.cols()));
    }
    if (!in.read(reinterpret_cast<char*>(ref.layer->w.data()),
                 static_cast<std::streamsize>(ref.layer->w.size() * sizeof(double))) ||
        !in.read(reinterpret_cast<char*>(ref.layer->b.data()),
                 static_cast<std::streamsize>(ref.layer->b.size() * sizeof(double)))) {
      throw UserError(fmt::format("checkpoint '{}' is truncated", path.string()));
    }
  }
  return net;
}

}  // namespace cyto
