#include "core/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fsr {

namespace {

int chain_extent(int e, int k, int s, int p) { return (e + 2 * p - k) / s + 1; }
int positive_or_one(int v) { return v > 0 ? v : 1; }  // dry run reports the real failure

}  // namespace

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "lenet5") return ModelKind::LeNet5;
  if (s == "alexnet") return ModelKind::AlexNet;
  if (s == "inception_a_lenet") return ModelKind::InceptionALeNet;
  if (s == "inception_e_lenet") return ModelKind::InceptionELeNet;
  if (s == "resnet18") return ModelKind::ResNet18;
  if (s == "mobilenet_v1") return ModelKind::MobileNetV1;
  if (s == "vit") return ModelKind::ViT;
  throw std::invalid_argument("unknown model kind: " + s);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LeNet5: return "lenet5";
    case ModelKind::AlexNet: return "alexnet";
    case ModelKind::InceptionALeNet: return "inception_a_lenet";
    case ModelKind::InceptionELeNet: return "inception_e_lenet";
    case ModelKind::ResNet18: return "resnet18";
    case ModelKind::MobileNetV1: return "mobilenet_v1";
    case ModelKind::ViT: return "vit";
  }
  throw std::logic_error("bad model kind");
}

std::string display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::LeNet5: return "LeNet5";
    case ModelKind::AlexNet: return "AlexNet";
    case ModelKind::InceptionALeNet: return "InceptionA";
    case ModelKind::InceptionELeNet: return "InceptionE";
    case ModelKind::ResNet18: return "ResNet18";
    case ModelKind::MobileNetV1: return "MobileNet";
    case ModelKind::ViT: return "VisionTransformer";
  }
  throw std::logic_error("bad model kind");
}

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds{
      ModelKind::LeNet5,      ModelKind::AlexNet,     ModelKind::InceptionALeNet,
      ModelKind::InceptionELeNet, ModelKind::ResNet18, ModelKind::MobileNetV1,
      ModelKind::ViT,
  };
  return kinds;
}

ScaleProfile scale_from_string(const std::string& s) {
  if (s == "full") return ScaleProfile::Full;
  if (s == "desk") return ScaleProfile::Desk;
  throw std::invalid_argument("unknown scale profile: " + s);
}

std::string to_string(ScaleProfile scale) { return scale == ScaleProfile::Full ? "full" : "desk"; }

int default_input_side(ModelKind kind, ScaleProfile scale) {
  const bool lenet_family = kind == ModelKind::LeNet5 || kind == ModelKind::InceptionALeNet ||
                            kind == ModelKind::InceptionELeNet;
  if (lenet_family) return 32;
  return scale == ScaleProfile::Full ? 227 : 64;
}

int ModelSpec::resolved_side() const {
  return input_side > 0 ? input_side : default_input_side(kind, scale);
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("model spec: num_classes must be >= 2");
  if (input_channels < 1) throw std::invalid_argument("model spec: input_channels must be >= 1");
  if (input_side < 0) throw std::invalid_argument("model spec: input_side must be positive");
}

Tensor Layer::forward_traced(const Tensor& x, RunMode mode, const std::string& prefix,
                             std::vector<std::string>& lines) {
  Tensor y = forward(x, nullptr, mode);
  lines.push_back(prefix + ": " + shape_str(x.shape()) + " -> " + shape_str(y.shape()));
  return y;
}

void InitStream::kaiming_uniform(Tensor& w, int fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  uniform(w, -bound, bound);
}

void InitStream::uniform(Tensor& w, double lo, double hi) {
  double* p = w.data();
  for (std::size_t i = 0; i < w.numel(); ++i) p[i] = rng_.next_in(lo, hi);
}

// --- Sequential ---------------------------------------------------------

void Sequential::add(std::string name, std::shared_ptr<Layer> layer) {
  children_.emplace_back(std::move(name), std::move(layer));
}

Tensor Sequential::forward(const Tensor& x, Tape* tape, RunMode mode) {
  Tensor h = x;
  for (auto& [name, layer] : children_) {
    try {
      h = layer->forward(h, tape, mode);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(name + ": " + e.what());
    }
  }
  return h;
}

Tensor Sequential::forward_traced(const Tensor& x, RunMode mode, const std::string& prefix,
                                  std::vector<std::string>& lines) {
  Tensor h = x;
  for (auto& [name, layer] : children_)
    h = layer->forward_traced(h, mode, prefix.empty() ? name : prefix + "." + name, lines);
  return h;
}

void Sequential::visit_state(const std::string& prefix, const StateVisitor& fn) {
  for (auto& [name, layer] : children_)
    layer->visit_state(prefix.empty() ? name : prefix + "." + name, fn);
}

// --- leaf layers --------------------------------------------------------

Conv2dLayer::Conv2dLayer(int in_ch, int out_ch, int kh, int kw, int stride, int padding,
                         InitStream& init)
    : weight_(Shape{out_ch, in_ch, kh, kw}, true),
      bias_(Shape{out_ch}, true),
      stride_(stride),
      padding_(padding) {
  init.kaiming_uniform(weight_, in_ch * kh * kw);
}

Tensor Conv2dLayer::forward(const Tensor& x, Tape* tape, RunMode) {
  return conv2d(x, weight_, bias_, stride_, padding_, tape);
}

void Conv2dLayer::visit_state(const std::string& prefix, const StateVisitor& fn) {
  fn(prefix + ".weight", weight_, true);
  fn(prefix + ".bias", bias_, true);
}

DepthwiseConv2dLayer::DepthwiseConv2dLayer(int channels, int kernel, int stride, int padding,
                                           InitStream& init)
    : weight_(Shape{channels, 1, kernel, kernel}, true),
      bias_(Shape{channels}, true),
      stride_(stride),
      padding_(padding) {
  init.kaiming_uniform(weight_, kernel * kernel);
}

Tensor DepthwiseConv2dLayer::forward(const Tensor& x, Tape* tape, RunMode) {
  return depthwise_conv2d(x, weight_, bias_, stride_, padding_, tape);
}

void DepthwiseConv2dLayer::visit_state(const std::string& prefix, const StateVisitor& fn) {
  fn(prefix + ".weight", weight_, true);
  fn(prefix + ".bias", bias_, true);
}

DenseLayer::DenseLayer(int in_features, int out_features, InitStream& init)
    : weight_(Shape{in_features, out_features}, true), bias_(Shape{out_features}, true) {
  init.kaiming_uniform(weight_, in_features);
}

Tensor DenseLayer::forward(const Tensor& x, Tape* tape, RunMode) {
  return dense(x, weight_, bias_, tape);
}

void DenseLayer::visit_state(const std::string& prefix, const StateVisitor& fn) {
  fn(prefix + ".weight", weight_, true);
  fn(prefix + ".bias", bias_, true);
}

BatchNorm2dLayer::BatchNorm2dLayer(int channels)
    : gamma_(Shape{channels}, std::vector<double>(channels, 1.0), true),
      beta_(Shape{channels}, true) {
  state_.running_mean = Tensor(Shape{channels});
  state_.running_var = Tensor(Shape{channels}, std::vector<double>(channels, 1.0));
}

Tensor BatchNorm2dLayer::forward(const Tensor& x, Tape* tape, RunMode mode) {
  return batchnorm2d(x, gamma_, beta_, state_, mode, tape);
}

void BatchNorm2dLayer::visit_state(const std::string& prefix, const StateVisitor& fn) {
  fn(prefix + ".gamma", gamma_, true);
  fn(prefix + ".beta", beta_, true);
  fn(prefix + ".running_mean", state_.running_mean, false);
  fn(prefix + ".running_var", state_.running_var, false);
}

std::shared_ptr<Sequential> conv_bn_relu(int in_ch, int out_ch, int kernel, int stride, int padding,
                                         InitStream& init) {
  auto seq = std::make_shared<Sequential>();
  seq->add("conv", std::make_shared<Conv2dLayer>(in_ch, out_ch, kernel, kernel, stride, padding, init));
  seq->add("bn", std::make_shared<BatchNorm2dLayer>(out_ch));
  seq->add("relu", std::make_shared<ReluLayer>());
  return seq;
}

// --- ResNet basic block --------------------------------------------------

BasicBlock::BasicBlock(int in_ch, int out_ch, int stride, InitStream& init) {
  branch_ = std::make_shared<Sequential>();
  branch_->add("conv1", std::make_shared<Conv2dLayer>(in_ch, out_ch, 3, 3, stride, 1, init));
  branch_->add("bn1", std::make_shared<BatchNorm2dLayer>(out_ch));
  branch_->add("relu", std::make_shared<ReluLayer>());
  branch_->add("conv2", std::make_shared<Conv2dLayer>(out_ch, out_ch, 3, 3, 1, 1, init));
  branch_->add("bn2", std::make_shared<BatchNorm2dLayer>(out_ch));
  if (stride != 1 || in_ch != out_ch) {
    auto proj = std::make_shared<Sequential>();
    proj->add("conv", std::make_shared<Conv2dLayer>(in_ch, out_ch, 1, 1, stride, 0, init));
    proj->add("bn", std::make_shared<BatchNorm2dLayer>(out_ch));
    proj_ = proj;
  }
}

Tensor BasicBlock::branch(const Tensor& x, Tape* tape, RunMode mode) {
  return branch_->forward(x, tape, mode);
}

Tensor BasicBlock::shortcut(const Tensor& x, Tape* tape, RunMode mode) {
  return proj_ ? proj_->forward(x, tape, mode) : x;
}

Tensor BasicBlock::forward(const Tensor& x, Tape* tape, RunMode mode) {
  return relu(add(branch(x, tape, mode), shortcut(x, tape, mode), tape), tape);
}

void BasicBlock::visit_state(const std::string& prefix, const StateVisitor& fn) {
  branch_->visit_state(prefix + ".branch", fn);
  if (proj_) proj_->visit_state(prefix + ".proj", fn);
}

// --- Inception modules ---------------------------------------------------

namespace {

std::shared_ptr<Sequential> conv_relu(int in_ch, int out_ch, int kh, int kw, int pad_h, int pad_w,
                                      InitStream& init) {
  auto seq = std::make_shared<Sequential>();
  if (pad_h != pad_w || (kh != kw && (pad_h || pad_w))) {
    // asymmetric kernels pad explicitly so conv2d sees a single padding
    class Pad : public Layer {
     public:
      Pad(int ph, int pw) : ph_(ph), pw_(pw) {}
      Tensor forward(const Tensor& x, Tape* tape, RunMode) override {
        return pad2d(x, ph_, pw_, tape);
      }

     private:
      int ph_, pw_;
    };
    seq->add("pad", std::make_shared<Pad>(pad_h, pad_w));
    seq->add("conv", std::make_shared<Conv2dLayer>(in_ch, out_ch, kh, kw, 1, 0, init));
  } else {
    seq->add("conv", std::make_shared<Conv2dLayer>(in_ch, out_ch, kh, kw, 1, pad_h, init));
  }
  seq->add("relu", std::make_shared<ReluLayer>());
  return seq;
}

// 3x3 average pooling at stride 1 that keeps the spatial size.
class PaddedAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Tape* tape, RunMode) override {
    return pool2d(pad2d(x, 1, 1, tape), PoolKind::Avg, 3, 1, tape);
  }
};

}  // namespace

InceptionA::InceptionA(int in_ch, InitStream& init) {
  b1_ = conv_relu(in_ch, 16, 1, 1, 0, 0, init);

  b2_ = std::make_shared<Sequential>();
  b2_->add("reduce", conv_relu(in_ch, 12, 1, 1, 0, 0, init));
  b2_->add("conv5", conv_relu(12, 16, 5, 5, 2, 2, init));

  b3_ = std::make_shared<Sequential>();
  b3_->add("reduce", conv_relu(in_ch, 12, 1, 1, 0, 0, init));
  b3_->add("conv3a", conv_relu(12, 16, 3, 3, 1, 1, init));
  b3_->add("conv3b", conv_relu(16, 16, 3, 3, 1, 1, init));

  b4_ = std::make_shared<Sequential>();
  b4_->add("pool", std::make_shared<PaddedAvgPool>());
  b4_->add("proj", conv_relu(in_ch, 16, 1, 1, 0, 0, init));
}

Tensor InceptionA::forward(const Tensor& x, Tape* tape, RunMode mode) {
  return concat({b1_->forward(x, tape, mode), b2_->forward(x, tape, mode),
                 b3_->forward(x, tape, mode), b4_->forward(x, tape, mode)},
                1, tape);
}

void InceptionA::visit_state(const std::string& prefix, const StateVisitor& fn) {
  b1_->visit_state(prefix + ".b1", fn);
  b2_->visit_state(prefix + ".b2", fn);
  b3_->visit_state(prefix + ".b3", fn);
  b4_->visit_state(prefix + ".b4", fn);
}

InceptionE::InceptionE(int in_ch, InitStream& init) {
  b1_ = conv_relu(in_ch, 16, 1, 1, 0, 0, init);

  b2_stem_ = conv_relu(in_ch, 16, 1, 1, 0, 0, init);
  b2_row_ = std::make_shared<Conv2dLayer>(16, 8, 1, 3, 1, 0, init);  // pad via pad2d in forward
  b2_col_ = std::make_shared<Conv2dLayer>(16, 8, 3, 1, 1, 0, init);

  b3_stem_ = std::make_shared<Sequential>();
  b3_stem_->add("reduce", conv_relu(in_ch, 16, 1, 1, 0, 0, init));
  b3_stem_->add("conv3", conv_relu(16, 16, 3, 3, 1, 1, init));
  b3_row_ = std::make_shared<Conv2dLayer>(16, 8, 1, 3, 1, 0, init);
  b3_col_ = std::make_shared<Conv2dLayer>(16, 8, 3, 1, 1, 0, init);

  b4_ = std::make_shared<Sequential>();
  b4_->add("pool", std::make_shared<PaddedAvgPool>());
  b4_->add("proj", conv_relu(in_ch, 16, 1, 1, 0, 0, init));
}

Tensor InceptionE::forward(const Tensor& x, Tape* tape, RunMode mode) {
  auto factorized = [&](Sequential& stem, Conv2dLayer& row, Conv2dLayer& col) {
    Tensor h = stem.forward(x, tape, mode);
    Tensor r = relu(row.forward(pad2d(h, 0, 1, tape), tape, mode), tape);
    Tensor c = relu(col.forward(pad2d(h, 1, 0, tape), tape, mode), tape);
    return concat({r, c}, 1, tape);
  };
  return concat({b1_->forward(x, tape, mode), factorized(*b2_stem_, *b2_row_, *b2_col_),
                 factorized(*b3_stem_, *b3_row_, *b3_col_), b4_->forward(x, tape, mode)},
                1, tape);
}

void InceptionE::visit_state(const std::string& prefix, const StateVisitor& fn) {
  b1_->visit_state(prefix + ".b1", fn);
  b2_stem_->visit_state(prefix + ".b2.stem", fn);
  b2_row_->visit_state(prefix + ".b2.row", fn);
  b2_col_->visit_state(prefix + ".b2.col", fn);
  b3_stem_->visit_state(prefix + ".b3.stem", fn);
  b3_row_->visit_state(prefix + ".b3.row", fn);
  b3_col_->visit_state(prefix + ".b3.col", fn);
  b4_->visit_state(prefix + ".b4", fn);
}

// --- Vision Transformer ---------------------------------------------------

VitConfig vit_config(ScaleProfile scale) {
  if (scale == ScaleProfile::Full) return VitConfig{16, 192, 6, 3, 4};
  return VitConfig{8, 64, 4, 4, 4};
}

VitNet::VitNet(const ModelSpec& spec, const VitConfig& cfg, InitStream& init) : cfg_(cfg) {
  side_ = spec.resolved_side();
  if (side_ < cfg.patch)
    throw std::invalid_argument("vit: input side " + std::to_string(side_) +
                                " is smaller than patch size " + std::to_string(cfg.patch));
  grid_ = (side_ - cfg.patch) / cfg.patch + 1;
  tokens_ = grid_ * grid_;
  const int d = cfg.dim;

  patch_w_ = Tensor(Shape{d, spec.input_channels, cfg.patch, cfg.patch}, true);
  init.kaiming_uniform(patch_w_, spec.input_channels * cfg.patch * cfg.patch);
  patch_b_ = Tensor(Shape{d}, true);
  cls_token_ = Tensor(Shape{1, 1, d}, true);
  init.uniform(cls_token_, -0.02, 0.02);
  pos_embed_ = Tensor(Shape{1, tokens_ + 1, d}, true);
  init.uniform(pos_embed_, -0.02, 0.02);

  blocks_.resize(static_cast<std::size_t>(cfg.depth));
  const int hidden = d * cfg.mlp_ratio;
  for (Block& b : blocks_) {
    b.ln1_g = Tensor(Shape{d}, std::vector<double>(d, 1.0), true);
    b.ln1_b = Tensor(Shape{d}, true);
    b.ln2_g = Tensor(Shape{d}, std::vector<double>(d, 1.0), true);
    b.ln2_b = Tensor(Shape{d}, true);
    for (Tensor* w : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo}) {
      *w = Tensor(Shape{d, d}, true);
      init.kaiming_uniform(*w, d);
    }
    b.attn.bq = Tensor(Shape{d}, true);
    b.attn.bk = Tensor(Shape{d}, true);
    b.attn.bv = Tensor(Shape{d}, true);
    b.attn.bo = Tensor(Shape{d}, true);
    b.mlp_w1 = Tensor(Shape{d, hidden}, true);
    init.kaiming_uniform(b.mlp_w1, d);
    b.mlp_b1 = Tensor(Shape{hidden}, true);
    b.mlp_w2 = Tensor(Shape{hidden, d}, true);
    init.kaiming_uniform(b.mlp_w2, hidden);
    b.mlp_b2 = Tensor(Shape{d}, true);
  }
  final_ln_g_ = Tensor(Shape{d}, std::vector<double>(d, 1.0), true);
  final_ln_b_ = Tensor(Shape{d}, true);
  head_w_ = Tensor(Shape{d, spec.num_classes}, true);
  init.kaiming_uniform(head_w_, d);
  head_b_ = Tensor(Shape{spec.num_classes}, true);
}

Tensor VitNet::forward(const Tensor& x, Tape* tape, RunMode mode) {
  const int n = x.dim(0);
  const int d = cfg_.dim;
  Tensor patches = conv2d(x, patch_w_, patch_b_, cfg_.patch, 0, tape);  // [N,D,g,g]
  Tensor tokens = permute(reshape(patches, {n, d, tokens_}), {0, 2, 1}, tape);  // [N,T,D]

  Tensor cls = add(Tensor(Shape{n, 1, d}), cls_token_, tape);  // tile over the batch
  Tensor h = concat({cls, tokens}, 1, tape);
  h = add(h, pos_embed_, tape);

  const int t = tokens_ + 1;
  for (Block& b : blocks_) {
    Tensor a = layernorm(h, b.ln1_g, b.ln1_b, 1e-5, tape);
    a = multihead_attention(a, b.attn, cfg_.heads, tape);
    h = add(h, a, tape);

    Tensor m = layernorm(h, b.ln2_g, b.ln2_b, 1e-5, tape);
    m = reshape(m, {n * t, d});
    m = relu(dense(m, b.mlp_w1, b.mlp_b1, tape), tape);
    m = dense(m, b.mlp_w2, b.mlp_b2, tape);
    h = add(h, reshape(m, {n, t, d}), tape);
  }
  h = layernorm(h, final_ln_g_, final_ln_b_, 1e-5, tape);
  Tensor cls_out = reshape(slice(h, 1, 0, 1, tape), {n, d});
  return dense(cls_out, head_w_, head_b_, tape);
}

void VitNet::visit_state(const std::string& prefix, const StateVisitor& fn) {
  fn(prefix + ".patch.weight", patch_w_, true);
  fn(prefix + ".patch.bias", patch_b_, true);
  fn(prefix + ".cls_token", cls_token_, true);
  fn(prefix + ".pos_embed", pos_embed_, true);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block& b = blocks_[i];
    const std::string bp = prefix + ".block" + std::to_string(i);
    fn(bp + ".ln1.gamma", b.ln1_g, true);
    fn(bp + ".ln1.beta", b.ln1_b, true);
    fn(bp + ".attn.wq", b.attn.wq, true);
    fn(bp + ".attn.bq", b.attn.bq, true);
    fn(bp + ".attn.wk", b.attn.wk, true);
    fn(bp + ".attn.bk", b.attn.bk, true);
    fn(bp + ".attn.wv", b.attn.wv, true);
    fn(bp + ".attn.bv", b.attn.bv, true);
    fn(bp + ".attn.wo", b.attn.wo, true);
    fn(bp + ".attn.bo", b.attn.bo, true);
    fn(bp + ".ln2.gamma", b.ln2_g, true);
    fn(bp + ".ln2.beta", b.ln2_b, true);
    fn(bp + ".mlp.w1", b.mlp_w1, true);
    fn(bp + ".mlp.b1", b.mlp_b1, true);
    fn(bp + ".mlp.w2", b.mlp_w2, true);
    fn(bp + ".mlp.b2", b.mlp_b2, true);
  }
  fn(prefix + ".ln.gamma", final_ln_g_, true);
  fn(prefix + ".ln.beta", final_ln_b_, true);
  fn(prefix + ".head.weight", head_w_, true);
  fn(prefix + ".head.bias", head_b_, true);
}

// --- builders -------------------------------------------------------------

namespace {

void lenet_tail(Sequential& net, int flat, int classes, InitStream& init) {
  net.add("flatten", std::make_shared<FlattenLayer>());
  net.add("fc1", std::make_shared<DenseLayer>(flat, 120, init));
  net.add("relu3", std::make_shared<ReluLayer>());
  net.add("fc2", std::make_shared<DenseLayer>(120, 84, init));
  net.add("relu4", std::make_shared<ReluLayer>());
  net.add("fc3", std::make_shared<DenseLayer>(84, classes, init));
}

std::shared_ptr<Layer> build_lenet5(const ModelSpec& spec, InitStream& init) {
  const int side = spec.resolved_side();
  auto net = std::make_shared<Sequential>();
  net->add("conv1", std::make_shared<Conv2dLayer>(spec.input_channels, 6, 5, 5, 1, 0, init));
  net->add("relu1", std::make_shared<ReluLayer>());
  net->add("pool1", std::make_shared<Pool2dLayer>(PoolKind::Max, 2, 2));
  net->add("conv2", std::make_shared<Conv2dLayer>(6, 16, 5, 5, 1, 0, init));
  net->add("relu2", std::make_shared<ReluLayer>());
  net->add("pool2", std::make_shared<Pool2dLayer>(PoolKind::Max, 2, 2));
  const int s = chain_extent(chain_extent(chain_extent(chain_extent(side, 5, 1, 0), 2, 2, 0), 5, 1, 0),
                             2, 2, 0);
  lenet_tail(*net, positive_or_one(16 * s * s), spec.num_classes, init);
  return net;
}

std::shared_ptr<Layer> build_inception_lenet(const ModelSpec& spec, bool variant_e, InitStream& init) {
  const int side = spec.resolved_side();
  auto net = std::make_shared<Sequential>();
  net->add("conv1", std::make_shared<Conv2dLayer>(spec.input_channels, 6, 5, 5, 1, 0, init));
  net->add("relu1", std::make_shared<ReluLayer>());
  net->add("pool1", std::make_shared<Pool2dLayer>(PoolKind::Max, 2, 2));
  if (variant_e)
    net->add("inception", std::make_shared<InceptionE>(6, init));
  else
    net->add("inception", std::make_shared<InceptionA>(6, init));
  net->add("reduce", std::make_shared<Conv2dLayer>(64, 16, 1, 1, 1, 0, init));
  net->add("relu2", std::make_shared<ReluLayer>());
  net->add("pool2", std::make_shared<Pool2dLayer>(PoolKind::Max, 2, 2));
  const int s = chain_extent(chain_extent(chain_extent(side, 5, 1, 0), 2, 2, 0), 2, 2, 0);
  lenet_tail(*net, positive_or_one(16 * s * s), spec.num_classes, init);
  return net;
}

std::shared_ptr<Layer> build_alexnet(const ModelSpec& spec, InitStream& init) {
  const bool full = spec.scale == ScaleProfile::Full;
  const int side = spec.resolved_side();
  const int c1 = full ? 96 : 24, c2 = full ? 256 : 64, c3 = full ? 384 : 96, c5 = full ? 256 : 64;
  const int f1 = full ? 4096 : 256, f2 = full ? 4096 : 128;
  const int stem_stride = full ? 4 : 2, stem_pad = full ? 0 : 2;

  auto net = std::make_shared<Sequential>();
  net->add("conv1",
           std::make_shared<Conv2dLayer>(spec.input_channels, c1, 11, 11, stem_stride, stem_pad, init));
  net->add("relu1", std::make_shared<ReluLayer>());
  net->add("pool1", std::make_shared<Pool2dLayer>(PoolKind::Max, 3, 2));
  net->add("conv2", std::make_shared<Conv2dLayer>(c1, c2, 5, 5, 1, 2, init));
  net->add("relu2", std::make_shared<ReluLayer>());
  net->add("pool2", std::make_shared<Pool2dLayer>(PoolKind::Max, 3, 2));
  net->add("conv3", std::make_shared<Conv2dLayer>(c2, c3, 3, 3, 1, 1, init));
  net->add("relu3", std::make_shared<ReluLayer>());
  net->add("conv4", std::make_shared<Conv2dLayer>(c3, c3, 3, 3, 1, 1, init));
  net->add("relu4", std::make_shared<ReluLayer>());
  net->add("conv5", std::make_shared<Conv2dLayer>(c3, c5, 3, 3, 1, 1, init));
  net->add("relu5", std::make_shared<ReluLayer>());
  net->add("pool3", std::make_shared<Pool2dLayer>(PoolKind::Max, 3, 2));

  int s = chain_extent(side, 11, stem_stride, stem_pad);
  s = chain_extent(s, 3, 2, 0);
  s = chain_extent(s, 5, 1, 2);
  s = chain_extent(s, 3, 2, 0);
  s = chain_extent(s, 3, 2, 0);
  const int flat = positive_or_one(c5 * s * s);

  net->add("flatten", std::make_shared<FlattenLayer>());
  net->add("fc1", std::make_shared<DenseLayer>(flat, f1, init));
  net->add("relu6", std::make_shared<ReluLayer>());
  net->add("fc2", std::make_shared<DenseLayer>(f1, f2, init));
  net->add("relu7", std::make_shared<ReluLayer>());
  net->add("fc3", std::make_shared<DenseLayer>(f2, spec.num_classes, init));
  return net;
}

std::shared_ptr<Layer> build_resnet18(const ModelSpec& spec, InitStream& init) {
  const bool full = spec.scale == ScaleProfile::Full;
  const int w0 = full ? 64 : 16;
  auto net = std::make_shared<Sequential>();
  if (full)
    net->add("stem", conv_bn_relu(spec.input_channels, w0, 7, 2, 3, init));
  else
    net->add("stem", conv_bn_relu(spec.input_channels, w0, 3, 1, 1, init));
  net->add("pool", std::make_shared<Pool2dLayer>(PoolKind::Max, 3, 2));
  int in_ch = w0;
  for (int stage = 0; stage < 4; ++stage) {
    const int out_ch = w0 << stage;
    for (int blk = 0; blk < 2; ++blk) {
      const int stride = (stage > 0 && blk == 0) ? 2 : 1;
      net->add("s" + std::to_string(stage + 1) + "b" + std::to_string(blk + 1),
               std::make_shared<BasicBlock>(in_ch, out_ch, stride, init));
      in_ch = out_ch;
    }
  }
  net->add("gap", std::make_shared<GlobalAvgPoolLayer>());
  net->add("flatten", std::make_shared<FlattenLayer>());
  net->add("fc", std::make_shared<DenseLayer>(in_ch, spec.num_classes, init));
  return net;
}

std::shared_ptr<Layer> build_mobilenet(const ModelSpec& spec, InitStream& init) {
  const int div = spec.scale == ScaleProfile::Full ? 1 : 4;  // width multiplier 1.0 / 0.25
  auto ch = [div](int base) { return base / div; };
  auto net = std::make_shared<Sequential>();
  net->add("stem", conv_bn_relu(spec.input_channels, ch(32), 3, 2, 1, init));

  struct Stage {
    int stride, out;
  };
  const Stage stages[] = {{1, 64},  {2, 128}, {1, 128}, {2, 256},  {1, 256},  {2, 512},  {1, 512},
                          {1, 512}, {1, 512}, {1, 512}, {1, 512},  {2, 1024}, {1, 1024}};
  int in_ch = ch(32);
  int idx = 0;
  for (const Stage& st : stages) {
    const std::string name = "body" + std::to_string(idx++);
    auto stage = std::make_shared<Sequential>();
    stage->add("dw", std::make_shared<DepthwiseConv2dLayer>(in_ch, 3, st.stride, 1, init));
    stage->add("dwbn", std::make_shared<BatchNorm2dLayer>(in_ch));
    stage->add("dwrelu", std::make_shared<ReluLayer>());
    stage->add("pw", std::make_shared<Conv2dLayer>(in_ch, ch(st.out), 1, 1, 1, 0, init));
    stage->add("pwbn", std::make_shared<BatchNorm2dLayer>(ch(st.out)));
    stage->add("pwrelu", std::make_shared<ReluLayer>());
    net->add(name, stage);
    in_ch = ch(st.out);
  }
  net->add("gap", std::make_shared<GlobalAvgPoolLayer>());
  net->add("flatten", std::make_shared<FlattenLayer>());
  net->add("fc", std::make_shared<DenseLayer>(in_ch, spec.num_classes, init));
  return net;
}

}  // namespace

// --- Network ---------------------------------------------------------------

Network::Network(ModelSpec spec, std::shared_ptr<Layer> root)
    : spec_(spec), root_(std::move(root)) {
  root_->visit_state("", [this](const std::string& name, Tensor& value, bool trainable) {
    state_.push_back({name, value, trainable});
  });
}

Tensor Network::forward(const Tensor& batch, Tape* tape, RunMode mode) {
  const int side = spec_.resolved_side();
  if (batch.rank() != 4 || batch.dim(1) != spec_.input_channels || batch.dim(2) != side ||
      batch.dim(3) != side)
    throw std::invalid_argument("forward: batch shape " + shape_str(batch.shape()) +
                                " does not match model input [N," +
                                std::to_string(spec_.input_channels) + "," + std::to_string(side) +
                                "," + std::to_string(side) + "]");
  return root_->forward(batch, tape, mode);
}

std::pair<Tensor, std::vector<int>> Network::forward_classify(const Tensor& batch) {
  Tensor logits = forward(batch, nullptr, RunMode::Eval);
  return {logits, argmax_rows(logits)};
}

std::vector<Tensor> Network::trainable_params() const {
  std::vector<Tensor> out;
  for (const StateEntry& e : state_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const StateEntry& e : state_)
    if (e.trainable) n += e.tensor.numel();
  return n;
}

void Network::zero_grad() {
  for (const StateEntry& e : state_)
    if (e.trainable) {
      Tensor t = e.tensor;
      t.zero_grad();
    }
}

Network build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  InitStream init(seed);
  std::shared_ptr<Layer> root;
  switch (spec.kind) {
    case ModelKind::LeNet5: root = build_lenet5(spec, init); break;
    case ModelKind::AlexNet: root = build_alexnet(spec, init); break;
    case ModelKind::InceptionALeNet: root = build_inception_lenet(spec, false, init); break;
    case ModelKind::InceptionELeNet: root = build_inception_lenet(spec, true, init); break;
    case ModelKind::ResNet18: root = build_resnet18(spec, init); break;
    case ModelKind::MobileNetV1: root = build_mobilenet(spec, init); break;
    case ModelKind::ViT: root = std::make_shared<VitNet>(spec, vit_config(spec.scale), init); break;
  }

  // Dry-run one image so incompatible sides fail at build time with a trace.
  std::vector<std::string> lines;
  try {
    Tensor probe(Shape{1, spec.input_channels, spec.resolved_side(), spec.resolved_side()});
    root->forward_traced(probe, RunMode::Eval, to_string(spec.kind), lines);
  } catch (const std::invalid_argument& e) {
    std::ostringstream os;
    os << "model " << to_string(spec.kind) << " cannot run at input side " << spec.resolved_side()
       << ": " << e.what();
    for (const std::string& l : lines) os << "\n  " << l;
    throw std::invalid_argument(os.str());
  }
  return Network(spec, std::move(root));
}

}  // namespace fsr
