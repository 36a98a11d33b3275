#include "deepfeat/model/deepfeat.hpp"

#include <algorithm>
#include <limits>

#include "deepfeat/common/error.hpp"

namespace deepfeat::model {

using nn::Mode;
using nn::ParamRefs;
using nn::Tensor;

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::Full: return "full";
    case AblationMode::Rf: return "rf";
    case AblationMode::Pf: return "pf";
    case AblationMode::RfPf: return "rf_pf";
    case AblationMode::Dc: return "dc";
  }
  return "?";
}

AblationMode parse_ablation_mode(const std::string& name) {
  for (AblationMode m : all_ablation_modes()) {
    if (to_string(m) == name) return m;
  }
  throw ArgumentError("unknown ablation mode '" + name + "' (expected full, rf, pf, rf_pf or dc)");
}

const std::vector<AblationMode>& all_ablation_modes() {
  static const std::vector<AblationMode> modes{AblationMode::Rf, AblationMode::Pf, AblationMode::RfPf,
                                               AblationMode::Dc, AblationMode::Full};
  return modes;
}

BranchSet branches_for(AblationMode mode) {
  switch (mode) {
    case AblationMode::Full:
    case AblationMode::Dc: return {true, true, true, true};
    case AblationMode::Rf: return {false, false, true, false};
    case AblationMode::Pf: return {false, false, false, true};
    case AblationMode::RfPf: return {false, false, true, true};
  }
  return {};
}

bool uses_projection(AblationMode mode) { return mode != AblationMode::Dc; }

std::size_t ModelConfig::fused_width() const {
  const BranchSet b = branches_for(mode);
  if (!uses_projection(mode)) {
    return (b.global ? global_width() : 0) + (b.local ? local_width() : 0) + (b.rocket ? rocket_width : 0) +
           (b.llm ? llm_width : 0);
  }
  const std::size_t n = std::size_t{b.global} + b.local + b.rocket + b.llm;
  return n * projection_width;
}

void ModelConfig::validate() const {
  if (classes < 2) throw ArgumentError("the classifier needs at least 2 classes, got " + std::to_string(classes));
  if (gru_hidden == 0 || gru_layers == 0 || conv_filters == 0 || conv_kernels.empty()) {
    throw ArgumentError("learned branch sizes must be positive");
  }
  for (std::size_t k : conv_kernels) {
    if (k % 2 == 0) throw ArgumentError("convolution kernel sizes must be odd, got " + std::to_string(k));
  }
  if (rocket_width == 0 || llm_width == 0 || rocket_hidden < 2 || projection_width < 2 || head_hidden1 < 2 ||
      head_hidden2 < 2) {
    throw ArgumentError("projection and head widths must be >= 2");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must be in [0, 1)");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"classes", classes},
          {"gru_hidden", gru_hidden},
          {"gru_layers", gru_layers},
          {"conv_filters", conv_filters},
          {"conv_kernels", conv_kernels},
          {"rocket_width", rocket_width},
          {"llm_width", llm_width},
          {"rocket_hidden", rocket_hidden},
          {"projection_width", projection_width},
          {"head_hidden1", head_hidden1},
          {"head_hidden2", head_hidden2},
          {"dropout", dropout}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.mode = parse_ablation_mode(j.at("mode").get<std::string>());
    c.classes = j.at("classes").get<std::size_t>();
    c.gru_hidden = j.value("gru_hidden", c.gru_hidden);
    c.gru_layers = j.value("gru_layers", c.gru_layers);
    c.conv_filters = j.value("conv_filters", c.conv_filters);
    c.conv_kernels = j.value("conv_kernels", c.conv_kernels);
    c.rocket_width = j.value("rocket_width", c.rocket_width);
    c.llm_width = j.value("llm_width", c.llm_width);
    c.rocket_hidden = j.value("rocket_hidden", c.rocket_hidden);
    c.projection_width = j.value("projection_width", c.projection_width);
    c.head_hidden1 = j.value("head_hidden1", c.head_hidden1);
    c.head_hidden2 = j.value("head_hidden2", c.head_hidden2);
    c.dropout = j.value("dropout", c.dropout);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
std::size_t BranchInputs<T>::batch() const {
  if (!series.empty()) return series.dim(0);
  if (!rocket.empty()) return rocket.dim(0);
  if (!llm.empty()) return llm.dim(0);
  return 0;
}

namespace {

template <typename T>
void append(ParamRefs<T>& out, ParamRefs<T> more) {
  out.insert(out.end(), more.begin(), more.end());
}

template <typename T>
void check_batch(const Tensor<T>& t, std::size_t batch, std::size_t width, const char* what) {
  if (t.rank() != 2 || t.dim(0) != batch || t.dim(1) != width) {
    throw DimensionError(std::string(what) + ": expected [" + std::to_string(batch) + " x " + std::to_string(width) +
                         "], got " + nn::shape_str(t.shape()));
  }
}

}  // namespace

// --- GlobalBranch ------------------------------------------------------------

template <typename T>
GlobalBranch<T>::GlobalBranch(const std::string& name, std::size_t hidden, std::size_t layers)
    : stack_(name, 1, hidden, layers), width_(2 * hidden) {}

template <typename T>
Tensor<T> GlobalBranch<T>::forward(const Tensor<T>& series) {
  if (series.rank() != 3 || series.dim(1) == 0) throw DimensionError("global branch: expected a nonempty [B x T x 1]");
  return relu_.forward(stack_.forward(series));
}

template <typename T>
void GlobalBranch<T>::backward(const Tensor<T>& dy) {
  stack_.backward(relu_.backward(dy), false);
}

// --- LocalBranch -------------------------------------------------------------

template <typename T>
LocalBranch<T>::LocalBranch(const std::string& name, std::size_t filters, const std::vector<std::size_t>& kernels)
    : filters_(filters) {
  for (std::size_t k : kernels) {
    const std::string p = name + ".k" + std::to_string(k);
    stacks_.push_back(Stack{nn::Conv1d<T>::same(p + ".conv1", 1, filters, k), {},
                            nn::Conv1d<T>::same(p + ".conv2", filters, filters, k), {}, {}});
  }
}

template <typename T>
void LocalBranch<T>::init(Rng& rng) {
  for (auto& s : stacks_) {
    s.conv1.init(rng);
    s.conv2.init(rng);
  }
}

template <typename T>
Tensor<T> LocalBranch<T>::forward(const Tensor<T>& series) {
  if (series.rank() != 3 || series.dim(1) == 0) throw DimensionError("local branch: expected a nonempty [B x T x 1]");
  batch_ = series.dim(0);
  steps_ = series.dim(1);
  const std::size_t width = this->width();
  Tensor<T> out({batch_, width});
  for (std::size_t si = 0; si < stacks_.size(); ++si) {
    auto& s = stacks_[si];
    const Tensor<T> h = s.relu2.forward(s.conv2.forward(s.relu1.forward(s.conv1.forward(series))));
    s.argmax.assign(batch_ * filters_, 0);
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t f = 0; f < filters_; ++f) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t at = 0;
        for (std::size_t t = 0; t < steps_; ++t) {
          const T v = h[(b * steps_ + t) * filters_ + f];
          if (v > best) {
            best = v;
            at = t;
          }
        }
        s.argmax[b * filters_ + f] = at;
        out[b * width + si * filters_ + f] = best;
      }
    }
  }
  return out;
}

template <typename T>
void LocalBranch<T>::backward(const Tensor<T>& dy) {
  check_batch(dy, batch_, width(), "LocalBranch::backward");
  const std::size_t width = this->width();
  for (std::size_t si = 0; si < stacks_.size(); ++si) {
    auto& s = stacks_[si];
    Tensor<T> dh({batch_, steps_, filters_});
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t f = 0; f < filters_; ++f) {
        dh[(b * steps_ + s.argmax[b * filters_ + f]) * filters_ + f] = dy[b * width + si * filters_ + f];
      }
    }
    s.conv1.backward(s.relu1.backward(s.conv2.backward(s.relu2.backward(dh))), false);
  }
}

template <typename T>
ParamRefs<T> LocalBranch<T>::params() {
  ParamRefs<T> out;
  for (auto& s : stacks_) {
    append(out, s.conv1.params());
    append(out, s.conv2.params());
  }
  return out;
}

// --- Projection --------------------------------------------------------------

template <typename T>
Projection<T>::Projection(const std::string& name, std::vector<std::size_t> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ArgumentError(name + ": projection needs an input and an output width");
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    const std::string p = name + "." + std::to_string(i);
    stages_.push_back(Stage{nn::Dense<T>(p + ".dense", widths_[i], widths_[i + 1]),
                            nn::LayerNorm<T>(p + ".ln", widths_[i + 1]), {}});
  }
}

template <typename T>
void Projection<T>::init(Rng& rng) {
  for (auto& s : stages_) {
    s.dense.init(rng);
    s.norm.init();
  }
}

template <typename T>
Tensor<T> Projection<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (auto& s : stages_) h = s.relu.forward(s.norm.forward(s.dense.forward(h)));
  return h;
}

template <typename T>
Tensor<T> Projection<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  Tensor<T> g = dy;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    auto& s = stages_[i];
    g = s.dense.backward(s.norm.backward(s.relu.backward(g)), i > 0 || need_input_grad);
  }
  return g;
}

template <typename T>
ParamRefs<T> Projection<T>::params() {
  ParamRefs<T> out;
  for (auto& s : stages_) {
    append(out, s.dense.params());
    append(out, s.norm.params());
  }
  return out;
}

// --- Dft ---------------------------------------------------------------------

template <typename T>
Dft<T>::Dft(const ModelConfig& cfg, BranchSet branches) : block_(cfg.projection_width) {
  if (branches.global) g_.emplace("dft.g", std::vector<std::size_t>{cfg.global_width(), block_});
  if (branches.local) c_.emplace("dft.c", std::vector<std::size_t>{cfg.local_width(), block_});
  if (branches.rocket) r_.emplace("dft.r", std::vector<std::size_t>{cfg.rocket_width, cfg.rocket_hidden, block_});
  if (branches.llm) l_.emplace("dft.l", std::vector<std::size_t>{cfg.llm_width, block_});
}

template <typename T>
void Dft<T>::init(Rng& rng) {
  for (auto* p : {&g_, &c_, &r_, &l_}) {
    if (*p) (*p)->init(rng);
  }
}

template <typename T>
std::size_t Dft<T>::out_width() const noexcept {
  return block_ * (std::size_t{g_.has_value()} + c_.has_value() + r_.has_value() + l_.has_value());
}

template <typename T>
Tensor<T> Dft<T>::forward(const Tensor<T>* g, const Tensor<T>* c, const Tensor<T>* r, const Tensor<T>* l) {
  const std::pair<std::optional<Projection<T>>*, const Tensor<T>*> parts[] = {{&g_, g}, {&c_, c}, {&r_, r}, {&l_, l}};
  std::vector<Tensor<T>> blocks;
  std::size_t batch = 0;
  for (const auto& [proj, input] : parts) {
    if (proj->has_value() != (input != nullptr)) throw ArgumentError("dft: branch inputs do not match the configuration");
    if (input == nullptr) continue;
    blocks.push_back((*proj)->forward(*input));
    batch = input->dim(0);
  }
  const std::size_t width = out_width();
  Tensor<T> out({batch, width});
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(blocks[bi].data() + b * block_, block_, out.data() + b * width + bi * block_);
    }
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Dft<T>::backward(const Tensor<T>& dy) {
  const std::size_t width = out_width();
  const std::size_t batch = dy.dim(0);
  std::pair<Tensor<T>, Tensor<T>> grads;
  std::size_t bi = 0;
  auto slice = [&](std::size_t index) {
    Tensor<T> s({batch, block_});
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(dy.data() + b * width + index * block_, block_, s.data() + b * block_);
    return s;
  };
  if (g_) grads.first = g_->backward(slice(bi++), true);
  if (c_) grads.second = c_->backward(slice(bi++), true);
  if (r_) r_->backward(slice(bi++), false);
  if (l_) l_->backward(slice(bi++), false);
  return grads;
}

template <typename T>
ParamRefs<T> Dft<T>::params() {
  ParamRefs<T> out;
  for (auto* p : {&g_, &c_, &r_, &l_}) {
    if (*p) append(out, (*p)->params());
  }
  return out;
}

// --- MlpHead -----------------------------------------------------------------

template <typename T>
MlpHead<T>::MlpHead(const std::string& name, std::size_t in, std::size_t hidden1, std::size_t hidden2,
                    std::size_t classes, double dropout)
    : d1_(name + ".0.dense", in, hidden1),
      d2_(name + ".1.dense", hidden1, hidden2),
      out_(name + ".out", hidden2, classes),
      n1_(name + ".0.ln", hidden1),
      n2_(name + ".1.ln", hidden2),
      drop1_(dropout),
      drop2_(dropout) {
  if (classes < 2) throw ArgumentError("the head needs at least 2 classes, got " + std::to_string(classes));
}

template <typename T>
void MlpHead<T>::init(Rng& rng) {
  d1_.init(rng);
  n1_.init();
  d2_.init(rng);
  n2_.init();
  out_.init(rng);
}

template <typename T>
Tensor<T> MlpHead<T>::forward(const Tensor<T>& x, Mode mode, Rng& rng) {
  Tensor<T> h = drop1_.forward(r1_.forward(n1_.forward(d1_.forward(x))), mode, rng);
  h = drop2_.forward(r2_.forward(n2_.forward(d2_.forward(h))), mode, rng);
  return out_.forward(h);
}

template <typename T>
Tensor<T> MlpHead<T>::backward(const Tensor<T>& dlogits) {
  Tensor<T> g = out_.backward(dlogits);
  g = d2_.backward(n2_.backward(r2_.backward(drop2_.backward(g))));
  return d1_.backward(n1_.backward(r1_.backward(drop1_.backward(g))));
}

template <typename T>
ParamRefs<T> MlpHead<T>::params() {
  ParamRefs<T> out;
  append(out, d1_.params());
  append(out, n1_.params());
  append(out, d2_.params());
  append(out, n2_.params());
  append(out, out_.params());
  return out;
}

// --- direct_concat -----------------------------------------------------------

template <typename T>
Tensor<T> direct_concat(const Tensor<T>& g, const Tensor<T>& c, const Tensor<T>& r, const Tensor<T>& l) {
  const Tensor<T>* parts[] = {&g, &c, &r, &l};
  const bool batched = g.rank() == 2;
  const std::size_t batch = batched ? g.dim(0) : 1;
  std::size_t width = 0;
  for (const auto* p : parts) {
    if ((p->rank() == 2) != batched || (batched && p->dim(0) != batch) || p->rank() == 0 || p->rank() > 2) {
      throw DimensionError("direct_concat: branch features must share rank and batch size");
    }
    width += p->size() / batch;
  }
  Tensor<T> out(batched ? nn::Shape{batch, width} : nn::Shape{width});
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t at = 0;
    for (const auto* p : parts) {
      const std::size_t w = p->size() / batch;
      std::copy_n(p->data() + b * w, w, out.data() + b * width + at);
      at += w;
    }
  }
  return out;
}

// --- DeepFeatModel -----------------------------------------------------------

template <typename T>
DeepFeatModel<T>::DeepFeatModel(ModelConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      branches_(branches_for(cfg_.mode)),
      head_("head", cfg_.fused_width(), cfg_.head_hidden1, cfg_.head_hidden2, cfg_.classes, cfg_.dropout) {
  if (branches_.global) global_.emplace("global", cfg_.gru_hidden, cfg_.gru_layers);
  if (branches_.local) local_.emplace("local", cfg_.conv_filters, cfg_.conv_kernels);
  if (uses_projection(cfg_.mode)) dft_.emplace(cfg_, branches_);
}

template <typename T>
void DeepFeatModel<T>::init(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "init");
  if (global_) global_->init(rng);
  if (local_) local_->init(rng);
  if (dft_) dft_->init(rng);
  head_.init(rng);
}

template <typename T>
Tensor<T> DeepFeatModel<T>::forward(const BranchInputs<T>& in, Mode mode, Rng& dropout_rng) {
  batch_ = in.batch();
  if (batch_ == 0) throw ArgumentError("model forward: empty batch");
  Tensor<T> fg, fc;
  if (global_) fg = global_->forward(in.series);
  if (local_) fc = local_->forward(in.series);
  if (branches_.rocket) check_batch(in.rocket, batch_, cfg_.rocket_width, "rocket features");
  if (branches_.llm) check_batch(in.llm, batch_, cfg_.llm_width, "language-model features");
  Tensor<T> fused;
  if (dft_) {
    fused = dft_->forward(global_ ? &fg : nullptr, local_ ? &fc : nullptr, branches_.rocket ? &in.rocket : nullptr,
                          branches_.llm ? &in.llm : nullptr);
  } else {
    fused = direct_concat(fg, fc, in.rocket, in.llm);
  }
  return head_.forward(fused, mode, dropout_rng);
}

template <typename T>
void DeepFeatModel<T>::backward(const Tensor<T>& dlogits) {
  const Tensor<T> dfused = head_.backward(dlogits);
  Tensor<T> dg, dc;
  if (dft_) {
    std::tie(dg, dc) = dft_->backward(dfused);
  } else {
    const std::size_t gw = cfg_.global_width();
    const std::size_t cw = cfg_.local_width();
    const std::size_t width = dfused.dim(1);
    dg = Tensor<T>({batch_, gw});
    dc = Tensor<T>({batch_, cw});
    for (std::size_t b = 0; b < batch_; ++b) {
      std::copy_n(dfused.data() + b * width, gw, dg.data() + b * gw);
      std::copy_n(dfused.data() + b * width + gw, cw, dc.data() + b * cw);
    }
  }
  if (global_) global_->backward(dg);
  if (local_) local_->backward(dc);
}

template <typename T>
Tensor<T> DeepFeatModel<T>::predict_proba(const BranchInputs<T>& in) {
  Rng unused(0);
  Tensor<T> p = forward(in, Mode::Eval, unused);
  for (std::size_t r = 0; r < p.dim(0); ++r) nn::softmax_row<T>(p.row(r), p.row(r));
  return p;
}

template <typename T>
ParamRefs<T> DeepFeatModel<T>::params() {
  ParamRefs<T> out;
  if (global_) append(out, global_->params());
  if (local_) append(out, local_->params());
  if (dft_) append(out, dft_->params());
  append(out, head_.params());
  return out;
}

template <typename T>
std::size_t DeepFeatModel<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : params()) n += p->value.size();
  return n;
}

template <typename T>
io::TensorArchive DeepFeatModel<T>::to_archive() {
  io::TensorArchive ar;
  for (auto* p : params()) ar.add(p->name, p->value.template cast<float>());
  return ar;
}

template <typename T>
void DeepFeatModel<T>::load_archive(const io::TensorArchive& ar) {
  const auto ps = params();
  if (ar.size() != ps.size()) {
    throw FormatError("checkpoint holds " + std::to_string(ar.size()) + " tensors, model expects " +
                      std::to_string(ps.size()));
  }
  for (auto* p : ps) {
    const auto& t = ar.get(p->name);
    if (t.shape() != p->value.shape()) {
      throw FormatError("checkpoint tensor " + p->name + " has shape " + nn::shape_str(t.shape()) + ", expected " +
                        nn::shape_str(p->value.shape()));
    }
    p->value = t.template cast<T>();
  }
}

template struct BranchInputs<float>;
template struct BranchInputs<double>;
template class GlobalBranch<float>;
template class GlobalBranch<double>;
template class LocalBranch<float>;
template class LocalBranch<double>;
template class Projection<float>;
template class Projection<double>;
template class Dft<float>;
template class Dft<double>;
template class MlpHead<float>;
template class MlpHead<double>;
template class DeepFeatModel<float>;
template class DeepFeatModel<double>;
template Tensor<float> direct_concat(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                     const Tensor<float>&);
template Tensor<double> direct_concat(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                      const Tensor<double>&);

}  // namespace deepfeat::model
