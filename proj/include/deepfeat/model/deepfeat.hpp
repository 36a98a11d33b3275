#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepfeat/common/rng.hpp"
#include "deepfeat/io/tsar.hpp"
#include "deepfeat/nn/conv1d.hpp"
#include "deepfeat/nn/gru.hpp"
#include "deepfeat/nn/layers.hpp"

namespace deepfeat::model {

inline constexpr std::size_t kGlobalWidth = 128;
inline constexpr std::size_t kLocalWidth = 256;
inline constexpr std::size_t kRocketWidth = 20'000;
inline constexpr std::size_t kLlmWidth = 768;
inline constexpr std::size_t kProjectionWidth = 64;
inline constexpr std::size_t kFusedWidth = 4 * kProjectionWidth;
inline constexpr std::size_t kDirectWidth = kGlobalWidth + kLocalWidth + kRocketWidth + kLlmWidth;  // 21152

/// Which branches feed the head.
///   full   - all four branches through the dense feature transformation
///   rf     - randomized-kernel branch only
///   pf     - language-model branch only
///   rf_pf  - both frozen branches
///   dc     - all four branches concatenated raw, no transformation
enum class AblationMode { Full, Rf, Pf, RfPf, Dc };

std::string to_string(AblationMode mode);
/// Throws ArgumentError for an unknown name.
AblationMode parse_ablation_mode(const std::string& name);
const std::vector<AblationMode>& all_ablation_modes();

struct BranchSet {
  bool global = false;
  bool local = false;
  bool rocket = false;
  bool llm = false;
};

BranchSet branches_for(AblationMode mode);
/// True for every mode except dc.
bool uses_projection(AblationMode mode);

struct ModelConfig {
  AblationMode mode = AblationMode::Full;
  std::size_t classes = 2;
  std::size_t gru_hidden = 64;
  std::size_t gru_layers = 2;
  std::size_t conv_filters = 64;
  std::vector<std::size_t> conv_kernels{3, 5, 7, 11};
  std::size_t rocket_width = kRocketWidth;
  std::size_t llm_width = kLlmWidth;
  std::size_t rocket_hidden = 1024;
  std::size_t projection_width = kProjectionWidth;
  std::size_t head_hidden1 = 128;
  std::size_t head_hidden2 = 64;
  double dropout = 0.5;

  std::size_t global_width() const noexcept { return 2 * gru_hidden; }
  std::size_t local_width() const noexcept { return conv_filters * conv_kernels.size(); }
  std::size_t fused_width() const;   // input width of the head
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Per-batch branch inputs. Unused branches may be left empty.
template <typename T>
struct BranchInputs {
  nn::Tensor<T> series;  // [B x T x 1]
  nn::Tensor<T> rocket;  // [B x rocket_width]
  nn::Tensor<T> llm;     // [B x llm_width]

  std::size_t batch() const;
};

/// F_g: stacked Bi-GRU, final states of both directions, then ReLU.
template <typename T>
class GlobalBranch {
 public:
  GlobalBranch(const std::string& name, std::size_t hidden, std::size_t layers);

  void init(Rng& rng) { stack_.init(rng); }
  nn::Tensor<T> forward(const nn::Tensor<T>& series);  // [B x T x 1] -> [B x 2H]
  void backward(const nn::Tensor<T>& dy);
  nn::ParamRefs<T> params() { return stack_.params(); }
  std::size_t width() const noexcept { return width_; }

 private:
  nn::BiGruStack<T> stack_;
  nn::Relu<T> relu_;
  std::size_t width_;
};

/// F_c: per kernel size, conv -> ReLU -> conv -> ReLU -> global max pool;
/// blocks concatenated in kernel order.
template <typename T>
class LocalBranch {
 public:
  LocalBranch(const std::string& name, std::size_t filters, const std::vector<std::size_t>& kernels);

  void init(Rng& rng);
  nn::Tensor<T> forward(const nn::Tensor<T>& series);  // [B x T x 1] -> [B x F*|kernels|]
  void backward(const nn::Tensor<T>& dy);
  nn::ParamRefs<T> params();
  std::size_t width() const noexcept { return filters_ * stacks_.size(); }

  struct Stack {
    nn::Conv1d<T> conv1;
    nn::Relu<T> relu1;
    nn::Conv1d<T> conv2;
    nn::Relu<T> relu2;
    std::vector<std::size_t> argmax;  // [B x F] time index of each pooled max
  };
  std::vector<Stack>& stacks() noexcept { return stacks_; }

 private:
  std::size_t filters_;
  std::vector<Stack> stacks_;
  std::size_t batch_ = 0;
  std::size_t steps_ = 0;
};

/// dense -> layer norm -> ReLU, repeated over a list of widths.
template <typename T>
class Projection {
 public:
  Projection(const std::string& name, std::vector<std::size_t> widths);

  void init(Rng& rng);
  nn::Tensor<T> forward(const nn::Tensor<T>& x);
  nn::Tensor<T> backward(const nn::Tensor<T>& dy, bool need_input_grad);
  nn::ParamRefs<T> params();
  std::size_t out_width() const noexcept { return widths_.back(); }

 private:
  struct Stage {
    nn::Dense<T> dense;
    nn::LayerNorm<T> norm;
    nn::Relu<T> relu;
  };
  std::vector<std::size_t> widths_;
  std::vector<Stage> stages_;
};

/// Dense feature transformation: each present branch projected to the same
/// width, concatenated in the order g, c, r, l.
template <typename T>
class Dft {
 public:
  Dft(const ModelConfig& cfg, BranchSet branches);

  void init(Rng& rng);
  /// Null pointers mark absent branches; they must match the BranchSet.
  nn::Tensor<T> forward(const nn::Tensor<T>* g, const nn::Tensor<T>* c, const nn::Tensor<T>* r,
                        const nn::Tensor<T>* l);
  /// Returns input gradients for the learned branches (empty if absent).
  std::pair<nn::Tensor<T>, nn::Tensor<T>> backward(const nn::Tensor<T>& dy);
  nn::ParamRefs<T> params();
  std::size_t out_width() const noexcept;

 private:
  std::size_t block_;
  std::optional<Projection<T>> g_, c_, r_, l_;
};

/// dense -> LN -> ReLU -> dropout, twice, then dense to class logits.
template <typename T>
class MlpHead {
 public:
  MlpHead(const std::string& name, std::size_t in, std::size_t hidden1, std::size_t hidden2, std::size_t classes,
          double dropout);

  void init(Rng& rng);
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode, Rng& rng);  // logits
  nn::Tensor<T> backward(const nn::Tensor<T>& dlogits);
  nn::ParamRefs<T> params();

 private:
  nn::Dense<T> d1_, d2_, out_;
  nn::LayerNorm<T> n1_, n2_;
  nn::Relu<T> r1_, r2_;
  nn::Dropout<T> drop1_, drop2_;
};

/// Raw concatenation g | c | r | l of row-aligned branch matrices.
template <typename T>
nn::Tensor<T> direct_concat(const nn::Tensor<T>& g, const nn::Tensor<T>& c, const nn::Tensor<T>& r,
                            const nn::Tensor<T>& l);

/// The full classifier. Branches not used by the ablation mode are never
/// constructed, so they own no parameters.
///
/// Parameters are referenced by pointer (optimizer state, checkpoints), so a
/// model is neither copyable nor movable.
template <typename T>
class DeepFeatModel {
 public:
  explicit DeepFeatModel(ModelConfig cfg);
  DeepFeatModel(const DeepFeatModel&) = delete;
  DeepFeatModel& operator=(const DeepFeatModel&) = delete;

  /// Glorot-uniform weights and zero biases from Rng::stream(seed, "init").
  void init(std::uint64_t seed);

  /// Class logits [B x C].
  nn::Tensor<T> forward(const BranchInputs<T>& in, nn::Mode mode, Rng& dropout_rng);
  void backward(const nn::Tensor<T>& dlogits);
  /// Eval-mode softmax probabilities [B x C].
  nn::Tensor<T> predict_proba(const BranchInputs<T>& in);

  nn::ParamRefs<T> params();
  std::size_t parameter_count();
  const ModelConfig& config() const noexcept { return cfg_; }

  io::TensorArchive to_archive();
  /// Throws FormatError on a missing, extra or mis-shaped tensor.
  void load_archive(const io::TensorArchive& ar);

  std::optional<GlobalBranch<T>>& global() noexcept { return global_; }
  std::optional<LocalBranch<T>>& local() noexcept { return local_; }
  std::optional<Dft<T>>& dft() noexcept { return dft_; }
  MlpHead<T>& head() noexcept { return head_; }

 private:
  ModelConfig cfg_;
  BranchSet branches_;
  std::optional<GlobalBranch<T>> global_;
  std::optional<LocalBranch<T>> local_;
  std::optional<Dft<T>> dft_;
  MlpHead<T> head_;
  std::size_t batch_ = 0;
};

}  // namespace deepfeat::model
