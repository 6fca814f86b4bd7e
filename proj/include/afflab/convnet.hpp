#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "afflab/planes.hpp"

namespace afflab::nn {

enum class Group : std::uint8_t { kBackbone = 0, kHead = 1 };

const char* to_string(Group group) noexcept;

struct LayerSpec {
  std::string_view name;
  int in_channels;
  int out_channels;
  int kernel;
  int dilation;
  bool residual;  // output = act(conv(x) + x)
  bool relu;
  Group group;
};

// Seven-layer fully-convolutional residual net. Stride 1 everywhere and
// "same" zero padding, so logits keep the input's H×W. The first five
// layers form the backbone, the last two the head.
inline constexpr std::array<LayerSpec, 7> kArchitecture{{
    {"conv1", 4, 16, 3, 1, false, true, Group::kBackbone},
    {"res2", 16, 16, 3, 2, true, true, Group::kBackbone},
    {"res3", 16, 16, 3, 4, true, true, Group::kBackbone},
    {"conv4", 16, 32, 3, 1, false, true, Group::kBackbone},
    {"res5", 32, 32, 3, 2, true, true, Group::kBackbone},
    {"conv6", 32, 16, 3, 1, false, true, Group::kHead},
    {"logits7", 16, 1, 1, 1, false, false, Group::kHead},
}};

inline constexpr int kInputChannels = 4;
inline constexpr int kMinSpatial = 8;

/// Radius (pixels) of the region of input that influences one output pixel.
constexpr int receptive_radius() {
  int r = 0;
  for (const auto& l : kArchitecture) r += l.dilation * (l.kernel - 1) / 2;
  return r;
}

constexpr std::size_t parameter_count() {
  std::size_t n = 0;
  for (const auto& l : kArchitecture)
    n += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel + l.out_channels;
  return n;
}

using Fingerprint = std::array<std::uint8_t, 32>;

/// SHA-256 over a canonical text description of kArchitecture.
const Fingerprint& architecture_fingerprint();

template <typename T>
struct ParamTensor {
  std::string name;
  Group group = Group::kBackbone;
  std::vector<int> shape;
  std::vector<T> values;

  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Named parameter collection: tensors[2*l] is layer l's weight
/// [out, in, k, k], tensors[2*l+1] its bias [out]. Gradients and optimizer
/// state reuse the same structure.
template <typename T>
struct BasicNetParams {
  std::vector<ParamTensor<T>> tensors;

  static BasicNetParams zeros();

  ParamTensor<T>& weight(std::size_t layer) { return tensors[2 * layer]; }
  const ParamTensor<T>& weight(std::size_t layer) const { return tensors[2 * layer]; }
  ParamTensor<T>& bias(std::size_t layer) { return tensors[2 * layer + 1]; }
  const ParamTensor<T>& bias(std::size_t layer) const { return tensors[2 * layer + 1]; }

  const ParamTensor<T>* find(std::string_view name) const;
  ParamTensor<T>* find(std::string_view name);

  std::size_t scalar_count() const;

  template <typename U>
  BasicNetParams<U> cast() const {
    BasicNetParams<U> out;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) {
      out.tensors.push_back({t.name, t.group, t.shape, std::vector<U>(t.values.begin(), t.values.end())});
    }
    return out;
  }

  friend bool operator==(const BasicNetParams&, const BasicNetParams&) = default;
};

using NetParams = BasicNetParams<float>;

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
NetParams init_params(std::uint64_t seed);

/// Throws ShapeMismatch unless params has exactly the kArchitecture layout.
template <typename T>
void check_layout(const BasicNetParams<T>& params);

/// FNV-1a over every parameter bit pattern; identifies the params a cache came from.
template <typename T>
std::uint64_t params_hash(const BasicNetParams<T>& params);

template <typename T>
struct ForwardCache {
  int height = 0;
  int width = 0;
  std::uint64_t params_hash = 0;
  // activations[0] is the input, activations[l + 1] the output of layer l
  // (post-activation); the last entry holds the logits.
  std::vector<std::vector<T>> activations;
};

/// Logits (H×W, row-major) for a kInputChannels×H×W input. Fills `cache`
/// when non-null so backward() can run.
template <typename T>
std::vector<T> forward(const BasicNetParams<T>& params, const Planes<T>& input,
                       ForwardCache<T>* cache = nullptr);

template <typename T>
struct LossReport {
  double loss = 0.0;
  std::vector<T> grad_logits;
  int n_active = 0;
};

/// Mean binary cross-entropy of sigmoid(logits) over the mask's active
/// pixels. grad_logits is (sigmoid(z) - y) / n_active at active pixels and
/// exactly zero elsewhere.
template <typename T>
LossReport<T> bce_loss_masked(std::span<const T> logits, std::span<const std::uint8_t> target,
                              std::span<const std::uint8_t> mask);

/// Reverse-mode gradients of a scalar loss whose gradient w.r.t. the logits
/// is `grad_logits`.
template <typename T>
BasicNetParams<T> backward(const BasicNetParams<T>& params, const ForwardCache<T>& cache,
                           std::span<const T> grad_logits);

/// Momentum SGD: v = momentum * v + g; p = p - lr * v.
void sgd_step(NetParams& params, const NetParams& grads, double lr, double momentum, NetParams& velocity);

void save_params(const NetParams& params, const std::filesystem::path& path);

/// Loads a full parameter set; any mismatch with kArchitecture (fingerprint,
/// tensor layout, truncation) raises IncompatibleArchitecture.
NetParams load_params(const std::filesystem::path& path);

/// Copies only the tensors of `group` from the file into `into`. Returns the
/// names of the tensors that were overwritten.
std::vector<std::string> load_params_group(const std::filesystem::path& path, Group group, NetParams& into);

/// Numerically stable logistic function.
template <typename T>
T sigmoid(T z) noexcept;

}  // namespace afflab::nn
