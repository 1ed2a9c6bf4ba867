#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgcl/tensor.hpp"

namespace sgcl {

// Named parameter set for one model role ("encoder", "projection" or "decoder").
// std::map keeps walks deterministic for cloning, merging and serialization.
struct ParameterStore {
  std::string role;
  std::map<std::string, Tensor> params;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  Tensor& add(const std::string& name, Tensor t);

  void zero_grad();
  void set_trainable(bool trainable);
  ParameterStore clone() const;  // deep copy of values; grads dropped
  void add_grads_from(const ParameterStore& other);
  size_t param_count() const;
  bool all_finite() const;
  uint64_t content_hash() const;  // over names, shapes and exact value bytes
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero unless noted.
Tensor init_uniform(Rng& rng, std::vector<int> shape, int fan_in);

struct LinearWeights {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
};

LinearWeights make_linear(ParameterStore& store, const std::string& prefix, int in, int out,
                          Rng& rng);
LinearWeights linear_weights(ParameterStore& store, const std::string& prefix);

// y = x.w + b for rank-1 x; row-wise for rank-2 x.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear(const Tensor& x, const LinearWeights& lw);

// Fused-gate LSTM cell, gate layout [input | forget | output | candidate].
// The forget-gate bias block starts at 1.
struct LstmWeights {
  Tensor wx;  // [in x 4H]
  Tensor wh;  // [H x 4H]
  Tensor b;   // [4H]
};

LstmWeights make_lstm(ParameterStore& store, const std::string& prefix, int in, int hidden,
                      Rng& rng);
LstmWeights lstm_weights(ParameterStore& store, const std::string& prefix);

struct LstmState {
  Tensor h;
  Tensor c;
};

LstmState lstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const LstmWeights& w);

struct AdamConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// Bias-corrected Adam with decoupled weight decay; clears gradients afterwards.
// A trainable parameter without a populated gradient is an error naming it.
void adam_step(ParameterStore& store, AdamState& state);

struct Checkpoint {
  std::string config_hash;
  uint64_t seed = 0;
  std::string tag;  // "pretrained" or the training regime
  std::vector<ParameterStore> stores;

  const ParameterStore* find(const std::string& role) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sgcl
