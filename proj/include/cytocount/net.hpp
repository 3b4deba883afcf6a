// Shared-encoder network with up to three structurally identical decoders
// (main, dynamic, prior).
//
// The backbone is a small U-shaped fully convolutional net:
//   encoder   depth x [conv3x3 + ReLU + maxpool2], then conv3x3 + ReLU
//             at the bottleneck
//   decoder   depth x [nearest-upsample x2 + conv3x3 + ReLU + additive skip],
//             then conv1x1 + sigmoid
// Stage widths follow feature_channels >> (depth - stage), floored at 4, so
// the bottleneck has exactly feature_channels channels. The main and dynamic
// heads emit one probability map per class; the prior head emits a single
// positive-class map. All decoders consume the features of one shared
// encoder pass.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cytocount/losses.hpp"

namespace cyto {

struct HeadSet {
  bool main = true;
  bool dynamic = false;
  bool prior = false;

  bool all() const { return main && dynamic && prior; }
  bool operator==(const HeadSet&) const = default;
};

struct NetworkConfig {
  int depth = 3;             // number of down/upsampling stages
  int feature_channels = 48; // bottleneck width
  HeadSet heads;

  bool operator==(const NetworkConfig&) const = default;
};

// Channel widths of the encoder stages, shallowest first (size = depth).
std::vector<int> stage_widths(const NetworkConfig& config);

// Trainable scalar count of one decoder head with the given output channels.
long long decoder_parameter_count(const NetworkConfig& config, int out_channels);

// One convolution layer: weights are stored as an out_ch x (in_ch * k * k)
// matrix so that forward is a single GEMM against the im2col patch matrix.
struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 0;
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
};

// Per-parameter-tensor gradients, aligned with Network::parameters() order.
struct Gradients {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;

  void set_zero();
};

namespace detail {
struct WorkspaceData;
}

// Intermediate activations of one training-mode forward pass, kept so the
// backward pass can run without recomputation. Reuse one instance across
// images to avoid reallocation. Contents are an implementation detail.
struct Workspace {
  Workspace();
  ~Workspace();
  Workspace(Workspace&&) noexcept;
  Workspace& operator=(Workspace&&) noexcept;

  std::unique_ptr<detail::WorkspaceData> data;
};

class Network {
 public:
  explicit Network(NetworkConfig config);

  // Deterministic He-initialization of all weights (biases zero).
  void init_parameters(std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }
  long long count_parameters() const;

  // Outputs of the instantiated heads; absent heads are left empty.
  struct Outputs {
    MapPair main;
    MapPair dynamic;
    Map prior;
  };

  // Forward through every instantiated head. Requires rows and cols divisible
  // by 2^depth (throws UserError otherwise). Pass a workspace to keep the
  // activations needed by backward().
  Outputs forward(const ImagePixels& image, Workspace* ws = nullptr) const;

  // Main head only, inference mode.
  MapPair forward_main(const ImagePixels& image) const;

  // All three heads; throws std::logic_error unless every head is
  // instantiated (training-mode contract).
  Outputs forward_all(const ImagePixels& image, Workspace* ws = nullptr) const;

  // Backpropagate d(loss)/d(probability map) for each head through the whole
  // network, accumulating into `accum` (which must come from make_gradients()).
  // Heads with empty gradient maps are skipped; gradients for heads that are
  // not instantiated must be empty.
  void backward(const Workspace& ws, const Outputs& head_grads, Gradients& accum) const;

  Gradients make_gradients() const;

  // All parameter tensors in a fixed, documented order (encoder stages,
  // bottleneck, then main/dynamic/prior decoders as instantiated).
  struct ParamRef {
    std::string name;
    ConvLayer* layer;
  };
  std::vector<ParamRef> parameters();
  std::vector<const ConvLayer*> parameter_layers() const;

 private:
  NetworkConfig config_;
  std::vector<ConvLayer> encoder_;   // size depth
  ConvLayer bottleneck_;
  struct Decoder {
    std::vector<ConvLayer> up;       // size depth, deepest first
    ConvLayer out;
  };
  std::vector<Decoder> decoders_;    // instantiated heads, order main, dynamic, prior
  std::vector<int> head_index_;      // head -> index into decoders_, -1 if absent

  friend struct detail::WorkspaceData;
  void check_dims(const ImagePixels& image) const;
};

// Versioned binary checkpoint: network config + parameter blobs + a free-form
// string metadata table (training settings, global step, tier, ...). Loading
// validates every blob against the architecture implied by the stored config.
void save_checkpoint(const Network& net, const std::map<std::string, std::string>& metadata,
                     const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path,
                        std::map<std::string, std::string>* metadata = nullptr);

}  // namespace cyto
