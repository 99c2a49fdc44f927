#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace fsr {

enum class ModelKind {
  LeNet5,
  AlexNet,
  InceptionALeNet,
  InceptionELeNet,
  ResNet18,
  MobileNetV1,
  ViT,
};

enum class ScaleProfile { Full, Desk };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind kind);
// Column labels used in reports (LeNet5, AlexNet, InceptionA, ...).
std::string display_name(ModelKind kind);
const std::vector<ModelKind>& all_model_kinds();

ScaleProfile scale_from_string(const std::string& s);
std::string to_string(ScaleProfile scale);

struct ModelSpec {
  ModelKind kind = ModelKind::LeNet5;
  ScaleProfile scale = ScaleProfile::Desk;
  int num_classes = 2;
  int input_channels = 3;
  int input_side = 0;  // 0 picks the architecture default for the scale

  int resolved_side() const;
  void validate() const;
};

// Architecture default: the LeNet family runs at 32 px at both scales,
// everything else at 227 px full / 64 px desk.
int default_input_side(ModelKind kind, ScaleProfile scale);

using StateVisitor = std::function<void(const std::string& name, Tensor& value, bool trainable)>;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, Tape* tape, RunMode mode) = 0;
  virtual void visit_state(const std::string& prefix, const StateVisitor& fn) {}
  // Like forward, but appends one "path shape" line per leaf layer so
  // incompatible input sizes fail with a full trace.
  virtual Tensor forward_traced(const Tensor& x, RunMode mode, const std::string& prefix,
                                std::vector<std::string>& lines);
};

// Kaiming-style uniform draws (bound sqrt(6/fan_in)) off a splitmix64
// stream; biases stay zero, norms start at identity.
class InitStream {
 public:
  explicit InitStream(std::uint64_t seed) : rng_(mix_seed(seed, 0x66697373ULL)) {}
  void kaiming_uniform(Tensor& w, int fan_in);
  void uniform(Tensor& w, double lo, double hi);

 private:
  SplitMix64 rng_;
};

class Sequential : public Layer {
 public:
  void add(std::string name, std::shared_ptr<Layer> layer);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  Tensor forward_traced(const Tensor& x, RunMode mode, const std::string& prefix,
                        std::vector<std::string>& lines) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;
  std::size_t size() const { return children_.size(); }

 private:
  std::vector<std::pair<std::string, std::shared_ptr<Layer>>> children_;
};

class Conv2dLayer : public Layer {
 public:
  Conv2dLayer(int in_ch, int out_ch, int kh, int kw, int stride, int padding, InitStream& init);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;

 private:
  Tensor weight_, bias_;
  int stride_, padding_;
};

class DepthwiseConv2dLayer : public Layer {
 public:
  DepthwiseConv2dLayer(int channels, int kernel, int stride, int padding, InitStream& init);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;

 private:
  Tensor weight_, bias_;
  int stride_, padding_;
};

class DenseLayer : public Layer {
 public:
  DenseLayer(int in_features, int out_features, InitStream& init);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;

 private:
  Tensor weight_, bias_;
};

class ReluLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override { return relu(x, tape); }
};

class Pool2dLayer : public Layer {
 public:
  Pool2dLayer(PoolKind kind, int window, int stride) : kind_(kind), window_(window), stride_(stride) {}
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override {
    return pool2d(x, kind_, window_, stride_, tape);
  }

 private:
  PoolKind kind_;
  int window_, stride_;
};

// Mean over the full spatial extent: [N,C,H,W] -> [N,C,1,1].
class GlobalAvgPoolLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override {
    return pool2d(x, PoolKind::Avg, x.dim(2), 1, tape);
  }
};

class FlattenLayer : public Layer {
 public:
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override {
    return reshape(x, {x.dim(0), static_cast<int>(x.numel()) / x.dim(0)});
  }
};

class BatchNorm2dLayer : public Layer {
 public:
  explicit BatchNorm2dLayer(int channels);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;

 private:
  Tensor gamma_, beta_;
  BatchNormState state_;
};

// conv -> batchnorm -> relu, the standard normalized stage.
std::shared_ptr<Sequential> conv_bn_relu(int in_ch, int out_ch, int kernel, int stride, int padding,
                                         InitStream& init);

// ResNet basic block: two 3x3 convs with batchnorm on the residual
// branch, identity or 1x1-projected shortcut, relu after the join.
class BasicBlock : public Layer {
 public:
  BasicBlock(int in_ch, int out_ch, int stride, InitStream& init);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;

  Tensor branch(const Tensor& x, Tape* tape, RunMode mode);
  Tensor shortcut(const Tensor& x, Tape* tape, RunMode mode);
  bool projected() const { return static_cast<bool>(proj_); }

 private:
  std::shared_ptr<Sequential> branch_;
  std::shared_ptr<Layer> proj_;  // null for the identity shortcut
};

// Four-branch module after InceptionV3's A block: 1x1, 1x1->5x5,
// 1x1->3x3->3x3, avgpool->1x1; outputs are channel-concatenated.
class InceptionA : public Layer {
 public:
  InceptionA(int in_ch, InitStream& init);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;
  int out_channels() const { return 64; }
  std::vector<int> branch_channels() const { return {16, 16, 16, 16}; }

 private:
  std::shared_ptr<Sequential> b1_, b2_, b3_, b4_;
};

// InceptionV3's E block with factorized 1x3/3x1 tails on two branches.
class InceptionE : public Layer {
 public:
  InceptionE(int in_ch, InitStream& init);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;
  int out_channels() const { return 64; }
  std::vector<int> branch_channels() const { return {16, 16, 16, 16}; }

 private:
  std::shared_ptr<Sequential> b1_, b2_stem_, b3_stem_, b4_;
  std::shared_ptr<Conv2dLayer> b2_row_, b2_col_, b3_row_, b3_col_;
};

struct VitConfig {
  int patch = 8;
  int dim = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 4;
};

VitConfig vit_config(ScaleProfile scale);

// Patch tokens from a strided conv, learned class token and positional
// embeddings, pre-norm encoder blocks, classification off the class token.
class VitNet : public Layer {
 public:
  VitNet(const ModelSpec& spec, const VitConfig& cfg, InitStream& init);
  Tensor forward(const Tensor& x, Tape* tape, RunMode mode) override;
  void visit_state(const std::string& prefix, const StateVisitor& fn) override;
  int token_count() const { return tokens_ + 1; }

 private:
  struct Block {
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    MhaParams attn;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  };
  VitConfig cfg_;
  int side_ = 0, grid_ = 0, tokens_ = 0;
  Tensor patch_w_, patch_b_;
  Tensor cls_token_, pos_embed_;
  std::vector<Block> blocks_;
  Tensor final_ln_g_, final_ln_b_;
  Tensor head_w_, head_b_;
};

// An architecture instance: the layer graph plus its named state, taken
// in a stable registration order.
class Network {
 public:
  struct StateEntry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  Network(ModelSpec spec, std::shared_ptr<Layer> root);

  Tensor forward(const Tensor& batch, Tape* tape, RunMode mode);
  // Eval-mode logits plus argmax predictions (ties toward class 0).
  std::pair<Tensor, std::vector<int>> forward_classify(const Tensor& batch);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<StateEntry>& state() const { return state_; }
  std::vector<Tensor> trainable_params() const;
  std::size_t parameter_count() const;  // trainable scalars
  void zero_grad();

 private:
  ModelSpec spec_;
  std::shared_ptr<Layer> root_;
  std::vector<StateEntry> state_;
};

// Deterministic in (spec, seed): same call, bit-identical parameters.
// Rejects specs whose input side cannot flow through the layer stack,
// with a layer-by-layer shape trace in the message.
Network build_model(const ModelSpec& spec, std::uint64_t seed);

}  // namespace fsr
