#include "ecog/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace ecog {

using nlohmann::json;

std::vector<int> ConvNetArchitecture::block_lengths() const {
  if (filters.empty()) throw ConfigError("ConvNet needs at least one block");
  if (kernel < 1 || pool < 1 || pool_stride < 1) throw ConfigError("kernel and pool sizes must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
  std::vector<int> out;
  int len = n_samples;
  for (std::size_t b = 0; b < filters.size(); ++b) {
    const int conv = len - kernel + 1;
    if (conv < pool)
      throw ConfigError("ConvNet shape chain collapses at block " + std::to_string(b + 1) + " (length " +
                        std::to_string(conv) + ")");
    len = (conv - pool) / pool_stride + 1;
    out.push_back(len);
  }
  return out;
}

int ConvNetArchitecture::conv_length(int block) const {
  const auto lens = block_lengths();
  const int in = block == 0 ? n_samples : lens[static_cast<std::size_t>(block - 1)];
  return in - kernel + 1;
}

int ConvNetArchitecture::dense_inputs() const { return filters.back() * block_lengths().back(); }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

namespace {

template <class T>
void glorot(Tensor<T>& t, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& v : t.value) v = static_cast<T>(u(rng));
}

}  // namespace

template <class T>
ConvNet<T>::ConvNet(const ConvNetArchitecture& arch, std::uint64_t seed) : arch_(arch) {
  lengths_ = arch_.block_lengths();
  std::mt19937_64 rng(seed);
  const int c = arch_.n_channels, k = arch_.kernel, f1 = arch_.filters[0];
  temporal_ = Tensor<T>({f1, k});
  spatial_ = Tensor<T>({f1, f1, c});
  glorot(temporal_, k, f1 * k, rng);
  glorot(spatial_, f1 * c, f1 * c, rng);
  for (std::size_t b = 1; b < arch_.filters.size(); ++b) {
    const int fin = arch_.filters[b - 1], fout = arch_.filters[b];
    Tensor<T> w({fout, fin * k});
    glorot(w, fin * k, fout * k, rng);
    conv_.push_back(std::move(w));
  }
  for (int f : arch_.filters) {
    Tensor<T> g({f}), be({f});
    std::fill(g.value.begin(), g.value.end(), T(1));
    gamma_.push_back(std::move(g));
    beta_.push_back(std::move(be));
    running_.push_back({std::vector<T>(static_cast<std::size_t>(f), T(0)), std::vector<T>(static_cast<std::size_t>(f), T(1))});
  }
  dense_w_ = Tensor<T>({arch_.n_classes, arch_.dense_inputs()});
  dense_b_ = Tensor<T>({arch_.n_classes});
  glorot(dense_w_, arch_.dense_inputs(), arch_.n_classes, rng);
  input_mean.assign(static_cast<std::size_t>(c), T(0));
  input_std.assign(static_cast<std::size_t>(c), T(1));
}

template <class T>
std::vector<Tensor<T>*> ConvNet<T>::parameters() {
  std::vector<Tensor<T>*> p{&temporal_, &spatial_};
  for (auto& w : conv_) p.push_back(&w);
  for (std::size_t b = 0; b < gamma_.size(); ++b) {
    p.push_back(&gamma_[b]);
    p.push_back(&beta_[b]);
  }
  p.push_back(&dense_w_);
  p.push_back(&dense_b_);
  return p;
}

template <class T>
std::vector<std::string> ConvNet<T>::parameter_names() const {
  std::vector<std::string> n{"temporal.weight", "spatial.weight"};
  for (std::size_t b = 0; b < conv_.size(); ++b) n.push_back("conv" + std::to_string(b + 2) + ".weight");
  for (std::size_t b = 0; b < gamma_.size(); ++b) {
    n.push_back("bn" + std::to_string(b + 1) + ".gamma");
    n.push_back("bn" + std::to_string(b + 1) + ".beta");
  }
  n.push_back("dense.weight");
  n.push_back("dense.bias");
  return n;
}

template <class T>
typename ConvNet<T>::Mat ConvNet<T>::forward(const T* input, int batch, Mode mode, std::mt19937_64* rng) {
  const int c_in0 = arch_.n_channels, l0 = arch_.n_samples, k = arch_.kernel;
  const int n_blocks = static_cast<int>(arch_.filters.size());
  batch_ = batch;
  cache_.resize(static_cast<std::size_t>(n_blocks));

  // [B][C][L] -> [C][B*L]
  Mat x(c_in0, static_cast<Eigen::Index>(batch) * l0);
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < c_in0; ++c)
      std::copy_n(input + (static_cast<std::size_t>(b) * c_in0 + c) * l0, l0, x.data() + c * x.cols() + b * l0);

  // Block-1 factorized weights: combined[f][c*K + k] = sum_g spatial[f][g][c] * temporal[g][k].
  const int f1 = arch_.filters[0];
  combined_ = Mat::Zero(f1, c_in0 * k);
  for (int f = 0; f < f1; ++f)
    for (int g = 0; g < f1; ++g)
      for (int c = 0; c < c_in0; ++c) {
        const T s = spatial_.value[(static_cast<std::size_t>(f) * f1 + g) * c_in0 + c];
        for (int kk = 0; kk < k; ++kk) combined_(f, c * k + kk) += s * temporal_.value[static_cast<std::size_t>(g) * k + kk];
      }

  // Keep a unit when a raw 64-bit draw falls below (1 - dropout) * 2^64.
  const double keep_scaled = std::ldexp(1.0 - arch_.dropout, 64);
  const std::uint64_t keep_below = keep_scaled >= 18446744073709551615.0 ? ~std::uint64_t{0} : static_cast<std::uint64_t>(keep_scaled);
  for (int blk = 0; blk < n_blocks; ++blk) {
    auto& bc = cache_[static_cast<std::size_t>(blk)];
    const int c_in = blk == 0 ? c_in0 : arch_.filters[static_cast<std::size_t>(blk - 1)];
    const int l_in = blk == 0 ? l0 : lengths_[static_cast<std::size_t>(blk - 1)];
    const int l_conv = l_in - k + 1;
    const int f_out = arch_.filters[static_cast<std::size_t>(blk)];

    if (blk > 0 && mode == Mode::Train && rng != nullptr && arch_.dropout > 0) {
      const T scale = static_cast<T>(1.0 / (1.0 - arch_.dropout));
      bc.dropmask.resize(x.rows(), x.cols());
      for (Eigen::Index i = 0; i < x.size(); ++i) bc.dropmask.data()[i] = (*rng)() < keep_below ? scale : T(0);
      x = x.cwiseProduct(bc.dropmask);
    } else {
      bc.dropmask.resize(0, 0);
    }
    bc.input = std::move(x);

    bc.cols.resize(static_cast<Eigen::Index>(c_in) * k, static_cast<Eigen::Index>(batch) * l_conv);
    for (int c = 0; c < c_in; ++c)
      for (int kk = 0; kk < k; ++kk) {
        T* dst = bc.cols.data() + (static_cast<Eigen::Index>(c) * k + kk) * bc.cols.cols();
        const T* src = bc.input.data() + static_cast<Eigen::Index>(c) * bc.input.cols();
        for (int b = 0; b < batch; ++b) std::copy_n(src + b * l_in + kk, l_conv, dst + b * l_conv);
      }

    if (blk == 0) {
      bc.z.noalias() = combined_ * bc.cols;
    } else {
      const auto& w = conv_[static_cast<std::size_t>(blk - 1)];
      Eigen::Map<const Mat> wm(w.value.data(), f_out, static_cast<Eigen::Index>(c_in) * k);
      bc.z.noalias() = wm * bc.cols;
    }

    // Batch norm over (batch, time) per feature map.
    const Eigen::Index n = bc.z.cols();
    auto& run = running_[static_cast<std::size_t>(blk)];
    const auto& gam = gamma_[static_cast<std::size_t>(blk)].value;
    const auto& bet = beta_[static_cast<std::size_t>(blk)].value;
    bc.xhat.resize(f_out, n);
    bc.inv_std.assign(static_cast<std::size_t>(f_out), T(0));
    bc.a.resize(f_out, n);
    for (int f = 0; f < f_out; ++f) {
      T mean, var;
      if (mode == Mode::Train) {
        mean = bc.z.row(f).mean();
        var = (bc.z.row(f).array() - mean).square().mean();
        const T mom = bn_count_ > 0 ? T(1) / static_cast<T>(bn_count_) : static_cast<T>(arch_.bn_momentum);
        const T unbiased = n > 1 ? var * static_cast<T>(n) / static_cast<T>(n - 1) : var;
        run.mean[static_cast<std::size_t>(f)] = (T(1) - mom) * run.mean[static_cast<std::size_t>(f)] + mom * mean;
        run.var[static_cast<std::size_t>(f)] = (T(1) - mom) * run.var[static_cast<std::size_t>(f)] + mom * unbiased;
      } else {
        mean = run.mean[static_cast<std::size_t>(f)];
        var = run.var[static_cast<std::size_t>(f)];
      }
      const T inv = T(1) / std::sqrt(var + static_cast<T>(arch_.bn_eps));
      bc.inv_std[static_cast<std::size_t>(f)] = inv;
      bc.xhat.row(f) = (bc.z.row(f).array() - mean) * inv;
      const T g = gam[static_cast<std::size_t>(f)], be = bet[static_cast<std::size_t>(f)];
      const auto y = bc.xhat.row(f).array() * g + be;
      bc.a.row(f) = y.max(T(0)) + (y.min(T(0)).exp() - T(1));
    }

    // Max-pool; ties go to the first maximal position.
    const int lp = lengths_[static_cast<std::size_t>(blk)];
    bc.pooled.resize(f_out, static_cast<Eigen::Index>(batch) * lp);
    bc.argmax.assign(static_cast<std::size_t>(bc.pooled.size()), 0);
    for (int f = 0; f < f_out; ++f)
      for (int b = 0; b < batch; ++b)
        for (int i = 0; i < lp; ++i) {
          const int base = b * l_conv + i * arch_.pool_stride;
          int best = base;
          for (int q = 1; q < arch_.pool; ++q)
            if (bc.a(f, base + q) > bc.a(f, best)) best = base + q;
          const Eigen::Index out = static_cast<Eigen::Index>(b) * lp + i;
          bc.pooled(f, out) = bc.a(f, best);
          bc.argmax[static_cast<std::size_t>(f * bc.pooled.cols() + out)] = best;
        }
    x = bc.pooled;
  }

  const int f_last = arch_.filters.back(), l_last = lengths_.back();
  flat_.resize(batch, static_cast<Eigen::Index>(f_last) * l_last);
  for (int b = 0; b < batch; ++b)
    for (int f = 0; f < f_last; ++f)
      std::copy_n(x.data() + f * x.cols() + b * l_last, l_last, flat_.data() + b * flat_.cols() + f * l_last);

  Eigen::Map<const Mat> wd(dense_w_.value.data(), arch_.n_classes, flat_.cols());
  Mat logits = flat_ * wd.transpose();
  probs_.resize(batch, arch_.n_classes);
  log_norm_.assign(static_cast<std::size_t>(batch), T(0));
  for (int b = 0; b < batch; ++b) {
    for (int j = 0; j < arch_.n_classes; ++j) logits(b, j) += dense_b_.value[static_cast<std::size_t>(j)];
    const T mx = logits.row(b).maxCoeff();
    const T lse = mx + std::log((logits.row(b).array() - mx).exp().sum());
    log_norm_[static_cast<std::size_t>(b)] = lse;
    probs_.row(b) = (logits.row(b).array() - lse).exp();
    logits.row(b).array() -= lse;  // keep log-probabilities for the loss
  }
  flat_logp_ = std::move(logits);
  return probs_;
}

template <class T>
void ConvNet<T>::recalibrate_batch_norm(const T* input, int n, int batch) {
  if (n < 1 || batch < 1) return;
  const std::size_t per = static_cast<std::size_t>(arch_.n_channels) * arch_.n_samples;
  bn_count_ = 1;
  for (int start = 0; start < n; start += batch, ++bn_count_)
    forward(input + static_cast<std::size_t>(start) * per, std::min(batch, n - start), Mode::Train, nullptr);
  bn_count_ = 0;
}

template <class T>
T ConvNet<T>::loss(const T* input, int batch, const std::vector<int>& labels, Mode mode) {
  forward(input, batch, mode, nullptr);
  T total = 0;
  for (int b = 0; b < batch; ++b) total -= flat_logp_(b, labels[static_cast<std::size_t>(b)] - 1);
  return total / static_cast<T>(batch);
}

template <class T>
T ConvNet<T>::backward(const std::vector<int>& labels) {
  const int batch = batch_, n_cls = arch_.n_classes, k = arch_.kernel;
  if (static_cast<int>(labels.size()) != batch) throw ConfigError("label count does not match the batch");
  for (auto* p : parameters()) p->zero_grad();

  T total = 0;
  Mat dlogits = probs_;
  for (int b = 0; b < batch; ++b) {
    const int y = labels[static_cast<std::size_t>(b)] - 1;
    if (y < 0 || y >= n_cls) throw DataError("label outside 1..n_classes");
    total -= flat_logp_(b, y);
    dlogits(b, y) -= T(1);
  }
  dlogits /= static_cast<T>(batch);

  Eigen::Map<Mat> dwd(dense_w_.grad.data(), n_cls, flat_.cols());
  dwd.noalias() = dlogits.transpose() * flat_;
  for (int j = 0; j < n_cls; ++j) dense_b_.grad[static_cast<std::size_t>(j)] = dlogits.col(j).sum();
  Eigen::Map<const Mat> wd(dense_w_.value.data(), n_cls, flat_.cols());
  const Mat dflat = dlogits * wd;

  const int n_blocks = static_cast<int>(arch_.filters.size());
  const int f_last = arch_.filters.back(), l_last = lengths_.back();
  Mat dx(f_last, static_cast<Eigen::Index>(batch) * l_last);
  for (int b = 0; b < batch; ++b)
    for (int f = 0; f < f_last; ++f)
      std::copy_n(dflat.data() + b * dflat.cols() + f * l_last, l_last, dx.data() + f * dx.cols() + b * l_last);

  for (int blk = n_blocks - 1; blk >= 0; --blk) {
    auto& bc = cache_[static_cast<std::size_t>(blk)];
    const int f_out = arch_.filters[static_cast<std::size_t>(blk)];
    const int c_in = blk == 0 ? arch_.n_channels : arch_.filters[static_cast<std::size_t>(blk - 1)];
    const int l_in = blk == 0 ? arch_.n_samples : lengths_[static_cast<std::size_t>(blk - 1)];
    const int l_conv = l_in - k + 1;
    const Eigen::Index n = bc.a.cols();

    // pool + ELU
    Mat dy = Mat::Zero(f_out, n);
    for (int f = 0; f < f_out; ++f)
      for (Eigen::Index i = 0; i < dx.cols(); ++i)
        dy(f, bc.argmax[static_cast<std::size_t>(f * dx.cols() + i)]) += dx(f, i);
    dy.array() *= (bc.a.array() + T(1)).min(T(1));  // ELU'(y) = 1 for y > 0, else a + 1

    // batch norm (train-mode statistics)
    auto& gam = gamma_[static_cast<std::size_t>(blk)];
    auto& bet = beta_[static_cast<std::size_t>(blk)];
    Mat dz(f_out, n);
    for (int f = 0; f < f_out; ++f) {
      const auto row = dy.row(f).array();
      const auto xh = bc.xhat.row(f).array();
      gam.grad[static_cast<std::size_t>(f)] = (row * xh).sum();
      bet.grad[static_cast<std::size_t>(f)] = row.sum();
      const T g = gam.value[static_cast<std::size_t>(f)];
      const T sum_dxh = g * row.sum();
      const T sum_dxh_xh = g * (row * xh).sum();
      const T nn = static_cast<T>(n);
      dz.row(f) = (bc.inv_std[static_cast<std::size_t>(f)] / nn) * (nn * g * row - sum_dxh - xh * sum_dxh_xh);
    }

    const Mat dw = dz * bc.cols.transpose();
    if (blk == 0) {
      const int f1 = f_out, ch = arch_.n_channels;
      for (int f = 0; f < f1; ++f)
        for (int g = 0; g < f1; ++g)
          for (int c = 0; c < ch; ++c) {
            const std::size_t si = (static_cast<std::size_t>(f) * f1 + g) * ch + c;
            T acc = 0;
            for (int kk = 0; kk < k; ++kk) {
              const T d = dw(f, c * k + kk);
              acc += d * temporal_.value[static_cast<std::size_t>(g) * k + kk];
              temporal_.grad[static_cast<std::size_t>(g) * k + kk] += spatial_.value[si] * d;
            }
            spatial_.grad[si] = acc;
          }
      break;
    }

    auto& w = conv_[static_cast<std::size_t>(blk - 1)];
    std::copy_n(dw.data(), dw.size(), w.grad.data());
    Eigen::Map<const Mat> wm(w.value.data(), f_out, static_cast<Eigen::Index>(c_in) * k);
    const Mat dcols = wm.transpose() * dz;
    Mat din = Mat::Zero(c_in, static_cast<Eigen::Index>(batch) * l_in);
    for (int c = 0; c < c_in; ++c)
      for (int kk = 0; kk < k; ++kk) {
        const T* src = dcols.data() + (static_cast<Eigen::Index>(c) * k + kk) * dcols.cols();
        T* dst = din.data() + static_cast<Eigen::Index>(c) * din.cols();
        for (int b = 0; b < batch; ++b)
          for (int t = 0; t < l_conv; ++t) dst[b * l_in + t + kk] += src[b * l_conv + t];
      }
    if (bc.dropmask.size() > 0) din.array() *= bc.dropmask.array();
    dx = std::move(din);
  }
  return total / static_cast<T>(batch);
}

template <class T>
json ConvNet<T>::to_json() const {
  json j;
  j["method"] = "convnet";
  j["architecture"] = {{"n_channels", arch_.n_channels}, {"n_samples", arch_.n_samples},
                       {"n_classes", arch_.n_classes},   {"filters", arch_.filters},
                       {"kernel", arch_.kernel},         {"pool", arch_.pool},
                       {"pool_stride", arch_.pool_stride}, {"dropout", arch_.dropout},
                       {"bn_eps", arch_.bn_eps},         {"bn_momentum", arch_.bn_momentum}};
  j["input_mean"] = input_mean;
  j["input_std"] = input_std;
  auto self = const_cast<ConvNet*>(this);
  const auto names = parameter_names();
  const auto params = self->parameters();
  json p = json::object();
  for (std::size_t i = 0; i < params.size(); ++i) p[names[i]] = {{"shape", params[i]->shape}, {"values", params[i]->value}};
  j["parameters"] = std::move(p);
  json bn = json::array();
  for (const auto& r : running_) bn.push_back({{"mean", r.mean}, {"var", r.var}});
  j["bn_running"] = std::move(bn);
  return j;
}

template <class T>
ConvNet<T> ConvNet<T>::from_json(const json& j) {
  const auto& a = j.at("architecture");
  ConvNetArchitecture arch;
  arch.n_channels = a.at("n_channels").get<int>();
  arch.n_samples = a.at("n_samples").get<int>();
  arch.n_classes = a.at("n_classes").get<int>();
  arch.filters = a.at("filters").get<std::vector<int>>();
  arch.kernel = a.at("kernel").get<int>();
  arch.pool = a.at("pool").get<int>();
  arch.pool_stride = a.at("pool_stride").get<int>();
  arch.dropout = a.at("dropout").get<double>();
  arch.bn_eps = a.at("bn_eps").get<double>();
  arch.bn_momentum = a.at("bn_momentum").get<double>();
  ConvNet net(arch, 0);
  net.input_mean = j.at("input_mean").template get<std::vector<T>>();
  net.input_std = j.at("input_std").template get<std::vector<T>>();
  const auto names = net.parameter_names();
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = j.at("parameters").at(names[i]);
    if (e.at("shape").template get<std::vector<int>>() != params[i]->shape)
      throw DataError("checkpoint parameter " + names[i] + " has the wrong shape");
    params[i]->value = e.at("values").template get<std::vector<T>>();
  }
  const auto& bn = j.at("bn_running");
  for (std::size_t b = 0; b < net.running_.size(); ++b) {
    net.running_[b].mean = bn.at(b).at("mean").template get<std::vector<T>>();
    net.running_[b].var = bn.at(b).at("var").template get<std::vector<T>>();
  }
  return net;
}

template <class T>
Adam<T>::Adam(std::vector<Tensor<T>*> params, const TrainConfig& cfg)
    : params_(std::move(params)), lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.epsilon) {
  for (auto* p : params_) {
    m_.emplace_back(p->size(), T(0));
    v_.emplace_back(p->size(), T(0));
  }
}

template <class T>
void Adam<T>::step() {
  ++t_;
  const T c1 = static_cast<T>(1.0 - std::pow(b1_, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(b2_, static_cast<double>(t_)));
  const T b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_), lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T g = p.grad[j];
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      p.value[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
    }
  }
}

template <class T>
std::vector<T> stack_trials(const std::vector<ClassTrial>& trials, const std::vector<T>& mean, const std::vector<T>& sd) {
  if (trials.empty()) return {};
  const auto c = trials.front().samples.rows(), l = trials.front().samples.cols();
  std::vector<T> out(trials.size() * static_cast<std::size_t>(c * l));
  std::size_t k = 0;
  for (const auto& t : trials) {
    if (t.samples.rows() != c || t.samples.cols() != l) throw DataError("class trials differ in shape");
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      const double mu = static_cast<double>(mean[static_cast<std::size_t>(ch)]);
      const double s = static_cast<double>(sd[static_cast<std::size_t>(ch)]);
      for (Eigen::Index i = 0; i < l; ++i) out[k++] = static_cast<T>((t.samples(ch, i) - mu) / s);
    }
  }
  return out;
}

template std::vector<float> stack_trials(const std::vector<ClassTrial>&, const std::vector<float>&, const std::vector<float>&);
template std::vector<double> stack_trials(const std::vector<ClassTrial>&, const std::vector<double>&,
                                          const std::vector<double>&);

template class ConvNet<float>;
template class ConvNet<double>;
template class Adam<float>;
template class Adam<double>;

namespace {

struct Snapshot {
  std::vector<std::vector<float>> params;
  std::vector<ConvNet<float>::BnStats> bn;
  Adam<float>::State adam;
};

Snapshot take(ConvNet<float>& net, const Adam<float>& adam) {
  Snapshot s;
  for (auto* p : net.parameters()) s.params.push_back(p->value);
  s.bn = net.bn_running();
  s.adam = adam.state();
  return s;
}

void restore(ConvNet<float>& net, Adam<float>& adam, const Snapshot& s) {
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.params[i];
  net.bn_running() = s.bn;
  adam.restore(s.adam);
}

constexpr int kEvalBatch = 64;
constexpr std::size_t kCalibrationTrials = 256;

}  // namespace

Prediction ConvNetDecoder::predict(const ClassTrial& trial) { return predict(std::vector<ClassTrial>{trial}).front(); }

std::vector<Prediction> ConvNetDecoder::predict(const std::vector<ClassTrial>& trials) {
  std::vector<Prediction> out;
  if (trials.empty()) return out;
  const auto& a = net.arch();
  if (trials.front().samples.rows() != a.n_channels || trials.front().samples.cols() != a.n_samples)
    throw DataError("trial shape does not match the ConvNet input");
  const auto x = stack_trials(trials, net.input_mean, net.input_std);
  const std::size_t per = static_cast<std::size_t>(a.n_channels) * a.n_samples;
  for (std::size_t start = 0; start < trials.size(); start += kEvalBatch) {
    const int b = static_cast<int>(std::min<std::size_t>(kEvalBatch, trials.size() - start));
    const auto probs = net.forward(x.data() + start * per, b, Mode::Eval);
    for (int i = 0; i < b; ++i) {
      Prediction p;
      p.scores = probs.row(i).transpose().cast<double>();
      p.label = argmax_label(p.scores);
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,phase,train_loss,val_loss,val_acc\n";
  for (const auto& e : log) os << e.epoch << ',' << e.phase << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_acc << '\n';
  return os.str();
}

ConvNetDecoder train_convnet(const std::vector<ClassTrial>& train, const std::vector<ClassTrial>& validation,
                             ConvNetArchitecture arch, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty() || validation.empty()) throw DataError("ConvNet training needs non-empty train and validation sets");
  arch.n_channels = static_cast<int>(train.front().samples.rows());
  arch.n_samples = static_cast<int>(train.front().samples.cols());

  ConvNetDecoder dec;
  dec.net = ConvNet<float>(arch, cfg.seed);
  auto& net = dec.net;

  // Per-channel standardization from the training set.
  const auto c = arch.n_channels;
  std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sq(static_cast<std::size_t>(c), 0.0);
  double count = 0;
  for (const auto& t : train) {
    for (int ch = 0; ch < c; ++ch) {
      sum[static_cast<std::size_t>(ch)] += t.samples.row(ch).sum();
      sq[static_cast<std::size_t>(ch)] += t.samples.row(ch).squaredNorm();
    }
    count += static_cast<double>(arch.n_samples);
  }
  for (int ch = 0; ch < c; ++ch) {
    const double mu = sum[static_cast<std::size_t>(ch)] / count;
    const double var = std::max(0.0, sq[static_cast<std::size_t>(ch)] / count - mu * mu);
    net.input_mean[static_cast<std::size_t>(ch)] = static_cast<float>(mu);
    net.input_std[static_cast<std::size_t>(ch)] = static_cast<float>(var > 0 ? std::sqrt(var) : 1.0);
  }

  const auto xtr = stack_trials(train, net.input_mean, net.input_std);
  const auto xva = stack_trials(validation, net.input_mean, net.input_std);
  const auto ytr = labels_of(train), yva = labels_of(validation);
  const std::size_t per = static_cast<std::size_t>(c) * arch.n_samples;

  Adam<float> adam(net.parameters(), cfg);
  std::mt19937_64 rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

  std::vector<float> batch_buf;
  std::vector<int> batch_y;
  auto run_epoch = [&](const std::vector<const float*>& rows, const std::vector<int>& labels) {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      batch_buf.resize(b * per);
      batch_y.resize(b);
      for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(rows[order[start + i]], per, batch_buf.data() + i * per);
        batch_y[i] = labels[order[start + i]];
      }
      net.forward(batch_buf.data(), static_cast<int>(b), Mode::Train, &rng);
      const float l = net.backward(batch_y);
      if (!std::isfinite(l)) throw NumericError("ConvNet loss became non-finite");
      adam.step();
      total += static_cast<double>(l) * static_cast<double>(b);
    }
    return total / static_cast<double>(order.size());
  };
  // Batch-norm statistics are re-estimated without dropout on a fixed random
  // subset of the fitting data after every epoch.
  auto calibration_set = [&](bool with_validation) {
    const std::size_t n = ytr.size() + (with_validation ? yva.size() : 0);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 pick(cfg.seed ^ (with_validation ? 0x9E3779B97F4A7C15ULL : 0xBF58476D1CE4E5B9ULL));
    std::shuffle(idx.begin(), idx.end(), pick);
    idx.resize(std::min<std::size_t>(n, kCalibrationTrials));
    std::vector<float> out(idx.size() * per);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const float* src = idx[i] < ytr.size() ? xtr.data() + idx[i] * per : xva.data() + (idx[i] - ytr.size()) * per;
      std::copy_n(src, per, out.data() + i * per);
    }
    return out;
  };
  const auto calib_train = calibration_set(false);
  std::vector<float> calib_all;
  auto recalibrate = [&](bool with_validation) {
    if (with_validation && calib_all.empty()) calib_all = calibration_set(true);
    const auto& x = with_validation ? calib_all : calib_train;
    net.recalibrate_batch_norm(x.data(), static_cast<int>(x.size() / per), kEvalBatch);
  };
  auto evaluate = [&](const std::vector<float>& x, const std::vector<int>& y) {
    double loss = 0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < y.size(); start += kEvalBatch) {
      const int b = static_cast<int>(std::min<std::size_t>(kEvalBatch, y.size() - start));
      const auto probs = net.forward(x.data() + start * per, b, Mode::Eval);
      for (int i = 0; i < b; ++i) {
        const int truth = y[start + static_cast<std::size_t>(i)];
        loss -= std::log(std::max(static_cast<double>(probs(i, truth - 1)), 1e-30));
        Eigen::VectorXd p = probs.row(i).transpose().cast<double>();
        hits += argmax_label(p) == truth ? 1 : 0;
      }
    }
    return std::pair{loss / static_cast<double>(y.size()), static_cast<double>(hits) / static_cast<double>(y.size())};
  };

  std::vector<const float*> train_rows, all_rows;
  for (std::size_t i = 0; i < ytr.size(); ++i) train_rows.push_back(xtr.data() + i * per);
  all_rows = train_rows;
  for (std::size_t i = 0; i < yva.size(); ++i) all_rows.push_back(xva.data() + i * per);
  auto all_y = ytr;
  all_y.insert(all_y.end(), yva.begin(), yva.end());

  double best_acc = -1, best_train_loss = 0;
  int since_best = 0;
  Snapshot best = take(net, adam);
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    const double tl = run_epoch(train_rows, ytr);
    recalibrate(false);
    const auto [vl, va] = evaluate(xva, yva);
    dec.log.push_back({epoch + 1, 1, tl, vl, va});
    if (va > best_acc) {
      best_acc = va;
      best_train_loss = tl;
      best = take(net, adam);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore(net, adam, best);

  for (int e = 0; e < cfg.max_epochs; ++e) {
    const double tl = run_epoch(all_rows, all_y);
    recalibrate(true);
    const auto [vl, va] = evaluate(xva, yva);
    dec.log.push_back({static_cast<int>(dec.log.size()) + 1, 2, tl, vl, va});
    if (vl <= best_train_loss) break;
  }
  return dec;
}

}  // namespace ecog
