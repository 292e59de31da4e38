#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecog/dataset.hpp"
#include "ecog/rlda.hpp"

namespace ecog {

template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    value.assign(n, T(0));
    grad.assign(n, T(0));
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// Four conv-pool blocks. Block 1 factorizes its convolution into a temporal
// convolution (shared across electrodes) followed by a spatial convolution
// across all electrodes; blocks 2.. are plain temporal convolutions. Each
// block ends in batch norm, ELU and max-pooling; a dense softmax layer follows.
struct ConvNetArchitecture {
  int n_channels{16};
  int n_samples{900};
  int n_classes{2};
  std::vector<int> filters{25, 50, 100, 200};
  int kernel{10};
  int pool{3};
  int pool_stride{3};
  double dropout{0.5};  // on the input of every convolution after block 1
  double bn_eps{1e-5};
  double bn_momentum{0.1};

  // Output length of every block (after pooling); throws ConfigError when the
  // chain collapses.
  std::vector<int> block_lengths() const;
  int conv_length(int block) const;
  int dense_inputs() const;
};

struct TrainConfig {
  double learning_rate{0.001};
  int batch_size{32};
  int max_epochs{500};  // per phase
  double beta1{0.9}, beta2{0.999}, epsilon{1e-8};
  int patience{30};
  std::uint64_t seed{1};

  void validate() const;
};

enum class Mode { Train, Eval };

template <class T>
class Adam;

template <class T>
class ConvNet {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ConvNet() = default;
  ConvNet(const ConvNetArchitecture& arch, std::uint64_t seed);

  const ConvNetArchitecture& arch() const { return arch_; }

  // Input laid out [B][n_channels][n_samples]. Returns probabilities [B][n_classes].
  // `rng` drives dropout in train mode and may be null to disable it.
  Mat forward(const T* input, int batch, Mode mode, std::mt19937_64* rng = nullptr);

  // Mean cross-entropy of the last forward pass; parameter gradients are
  // overwritten (not accumulated).
  T backward(const std::vector<int>& labels);

  // Convenience: forward + mean cross-entropy without touching gradients.
  T loss(const T* input, int batch, const std::vector<int>& labels, Mode mode);

  std::vector<Tensor<T>*> parameters();
  std::vector<std::string> parameter_names() const;

  struct BnStats {
    std::vector<T> mean, var;
  };
  std::vector<BnStats>& bn_running() { return running_; }
  const std::vector<BnStats>& bn_running() const { return running_; }

  // Per-channel input standardization (training-set statistics).
  std::vector<T> input_mean, input_std;

  // Replaces the running batch-norm statistics with cumulative averages of the
  // batch statistics of `input` ([n][C][L]) without dropout. Dropout before the
  // convolutions inflates the train-time statistics the momentum averages
  // track; recalibrating restores train/eval consistency.
  void recalibrate_batch_norm(const T* input, int n, int batch);

  nlohmann::json to_json() const;
  static ConvNet from_json(const nlohmann::json& j);

  // Raw batch-norm normalized activations of block `b` from the last forward
  // pass ([filters][B * L]), exposed for tests.
  const Mat& normalized(int block) const { return cache_[static_cast<std::size_t>(block)].xhat; }

 private:
  struct BlockCache {
    Mat input;    // [C_in][B*L_in] (after dropout for blocks > 0)
    Mat dropmask;
    Mat cols;     // im2col of `input`
    Mat z;        // conv output
    Mat xhat;     // batch-norm normalized
    std::vector<T> inv_std;
    Mat a;        // ELU output
    std::vector<int> argmax;  // pooled position -> source column in `a`
    Mat pooled;
  };

  ConvNetArchitecture arch_;
  // Block 1: temporal [F1][K], spatial [F1][F1][C].
  Tensor<T> temporal_, spatial_;
  std::vector<Tensor<T>> conv_;  // blocks 2..: [F_j][F_{j-1} * K]
  std::vector<Tensor<T>> gamma_, beta_;
  Tensor<T> dense_w_, dense_b_;
  std::vector<BnStats> running_;

  std::vector<BlockCache> cache_;
  Mat combined_;  // block-1 effective weights [F1][C*K]
  Mat flat_;      // dense input [B][F*L]
  Mat probs_;
  std::vector<T> log_norm_;  // per-row log-sum-exp of the logits
  Mat flat_logp_;            // log-probabilities [B][n_classes]
  int batch_{0};
  std::vector<int> lengths_;
  long bn_count_{0};  // > 0 while recalibrating: cumulative instead of momentum averages
};

template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>*> params, const TrainConfig& cfg);
  void step();
  // Snapshot/restore for early stopping.
  struct State {
    std::vector<std::vector<T>> m, v;
    long t{0};
  };
  State state() const { return {m_, v_, t_}; }
  void restore(const State& s) {
    m_ = s.m;
    v_ = s.v;
    t_ = s.t;
  }

 private:
  std::vector<Tensor<T>*> params_;
  std::vector<std::vector<T>> m_, v_;
  long t_{0};
  double lr_, b1_, b2_, eps_;
};

struct EpochLog {
  int epoch{0};
  int phase{1};
  double train_loss{0};
  double val_loss{0};
  double val_acc{0};
};

struct ConvNetDecoder {
  ConvNet<float> net;
  std::vector<EpochLog> log;

  Prediction predict(const ClassTrial& trial);
  std::vector<Prediction> predict(const std::vector<ClassTrial>& trials);
};

std::string training_log_csv(const std::vector<EpochLog>& log);

// Two-phase early stopping: phase 1 trains on `train`, tracking validation
// accuracy with the given patience and restoring the best state; phase 2
// continues on train + validation until the validation loss reaches the
// phase-1 training loss at the best epoch, or max_epochs run out.
ConvNetDecoder train_convnet(const std::vector<ClassTrial>& train, const std::vector<ClassTrial>& validation,
                             ConvNetArchitecture arch, const TrainConfig& cfg);

// Stacks trials into a [N][C][L] buffer after per-channel standardization.
template <class T>
std::vector<T> stack_trials(const std::vector<ClassTrial>& trials, const std::vector<T>& mean, const std::vector<T>& std);

extern template class ConvNet<float>;
extern template class ConvNet<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace ecog
