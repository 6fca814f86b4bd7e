#include "afflab/convnet.hpp"

#include <openssl/sha.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "afflab/binary_io.hpp"
#include "afflab/error.hpp"
#include "afflab/random.hpp"

namespace afflab::nn {

namespace {

constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Column matrix for a k×k kernel with dilation d and "same" zero padding:
// row (c, ky, kx) holds the input plane c shifted by the tap offset.
template <typename T>
void im2col(const T* in, int channels, int h, int w, int k, int d, T* col) {
  const int pad = d * (k - 1) / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dy = ky * d - pad;
        const int dx = kx * d - pad;
        const int x0 = std::clamp(-dx, 0, w);
        const int x1 = std::clamp(w - dx, x0, w);
        for (int y = 0; y < h; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, T{0});
            continue;
          }
          const T* src = in + (static_cast<std::size_t>(c) * h + sy) * w + dx;
          std::fill(dst, dst + x0, T{0});
          std::copy(src + x0, src + x1, dst + x0);
          std::fill(dst + x1, dst + w, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, int k, int d, T* out) {
  const int pad = d * (k - 1) / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * hw;
        const int dy = ky * d - pad;
        const int dx = kx * d - pad;
        const int x0 = std::clamp(-dx, 0, w);
        const int x1 = std::clamp(w - dx, x0, w);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * w;
          T* dst = out + (static_cast<std::size_t>(c) * h + sy) * w + dx;
          for (int x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& workspace() {
  thread_local std::vector<T> buf;
  return buf;
}

std::string architecture_description() {
  std::ostringstream os;
  os << "afflab.fcn.v1 input_channels=" << kInputChannels << "\n";
  for (const auto& l : kArchitecture) {
    os << l.name << " in=" << l.in_channels << " out=" << l.out_channels << " k=" << l.kernel
       << " dil=" << l.dilation << " res=" << l.residual << " relu=" << l.relu
       << " group=" << to_string(l.group) << "\n";
  }
  return os.str();
}

[[noreturn]] void incompatible(const std::string& what) {
  throw Error(ErrorCode::kIncompatibleArchitecture, what);
}

NetParams read_params_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open weights file " + path.string());
  BinaryReader r(in, ErrorCode::kIncompatibleArchitecture);
  r.expect_magic("ANP1");
  if (r.u32() != kFormatVersion) incompatible("unsupported weights format version");
  Fingerprint fp;
  r.read(reinterpret_cast<char*>(fp.data()), fp.size());
  if (fp != architecture_fingerprint()) incompatible("architecture fingerprint mismatch");

  NetParams expected = NetParams::zeros();
  const std::uint32_t count = r.u32();
  if (count != expected.tensors.size()) incompatible("tensor count mismatch");
  for (auto& t : expected.tensors) {
    const std::string name = r.str(256);
    const auto group = static_cast<Group>(r.u8());
    if (name != t.name || group != t.group) incompatible("unexpected tensor " + name);
    const std::uint32_t rank = r.u32();
    if (rank != t.shape.size()) incompatible("rank mismatch for " + name);
    for (int dim : t.shape) {
      if (r.u32() != static_cast<std::uint32_t>(dim)) incompatible("shape mismatch for " + name);
    }
    r.f32s(t.values);
  }
  return expected;
}

}  // namespace

const char* to_string(Group group) noexcept { return group == Group::kBackbone ? "backbone" : "head"; }

const Fingerprint& architecture_fingerprint() {
  static const Fingerprint fp = [] {
    const std::string desc = architecture_description();
    Fingerprint out{};
    SHA256(reinterpret_cast<const unsigned char*>(desc.data()), desc.size(), out.data());
    return out;
  }();
  return fp;
}

template <typename T>
BasicNetParams<T> BasicNetParams<T>::zeros() {
  BasicNetParams<T> p;
  p.tensors.reserve(2 * kArchitecture.size());
  for (const auto& l : kArchitecture) {
    const std::string base(l.name);
    const std::size_t wn = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
    p.tensors.push_back({base + ".weight", l.group, {l.out_channels, l.in_channels, l.kernel, l.kernel},
                         std::vector<T>(wn, T{0})});
    p.tensors.push_back({base + ".bias", l.group, {l.out_channels},
                         std::vector<T>(static_cast<std::size_t>(l.out_channels), T{0})});
  }
  return p;
}

template <typename T>
const ParamTensor<T>* BasicNetParams<T>::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

template <typename T>
ParamTensor<T>* BasicNetParams<T>::find(std::string_view name) {
  for (auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

template <typename T>
std::size_t BasicNetParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

NetParams init_params(std::uint64_t seed) {
  NetParams p = NetParams::zeros();
  Rng rng(derive_seed(seed, 0x1417));
  for (std::size_t l = 0; l < kArchitecture.size(); ++l) {
    const auto& spec = kArchitecture[l];
    const double fan_in = static_cast<double>(spec.in_channels) * spec.kernel * spec.kernel;
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (float& w : p.weight(l).values) w = static_cast<float>(std_dev * standard_normal(rng));
  }
  return p;
}

template <typename T>
void check_layout(const BasicNetParams<T>& params) {
  if (params.tensors.size() != 2 * kArchitecture.size())
    throw Error(ErrorCode::kShapeMismatch, "parameter tensor count does not match the architecture");
  for (std::size_t l = 0; l < kArchitecture.size(); ++l) {
    const auto& s = kArchitecture[l];
    const std::size_t wn = static_cast<std::size_t>(s.out_channels) * s.in_channels * s.kernel * s.kernel;
    if (params.weight(l).values.size() != wn ||
        params.bias(l).values.size() != static_cast<std::size_t>(s.out_channels)) {
      throw Error(ErrorCode::kShapeMismatch, "parameter shape mismatch in layer " + std::string(s.name));
    }
  }
}

template <typename T>
std::uint64_t params_hash(const BasicNetParams<T>& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x00000100000001b3ull;
    }
  };
  for (const auto& t : params.tensors) {
    mix(t.name.data(), t.name.size());
    mix(t.values.data(), t.values.size() * sizeof(T));
  }
  return h;
}

template <typename T>
std::vector<T> forward(const BasicNetParams<T>& params, const Planes<T>& input, ForwardCache<T>* cache) {
  check_layout(params);
  if (input.channels != kInputChannels || input.height < kMinSpatial || input.width < kMinSpatial ||
      input.data.size() != static_cast<std::size_t>(input.channels) * input.height * input.width) {
    throw Error(ErrorCode::kShapeMismatch, "network input must be 4xHxW with H,W >= 8");
  }
  const int h = input.height;
  const int w = input.width;
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  // Without a caller cache the activations still go through a reused
  // per-thread scratch cache so repeated inference does not reallocate.
  thread_local ForwardCache<T> scratch;
  ForwardCache<T>& c = cache ? *cache : scratch;
  c.height = h;
  c.width = w;
  c.params_hash = cache ? params_hash(params) : 0;
  c.activations.resize(kArchitecture.size() + 1);
  c.activations[0].assign(input.data.begin(), input.data.end());

  std::vector<T>& col = workspace<T>();
  for (std::size_t l = 0; l < kArchitecture.size(); ++l) {
    const auto& s = kArchitecture[l];
    const int taps = s.kernel * s.kernel;
    const std::vector<T>& current = c.activations[l];
    const T* col_ptr = current.data();
    if (s.kernel > 1) {
      col.resize(static_cast<std::size_t>(s.in_channels) * taps * hw);
      im2col(current.data(), s.in_channels, h, w, s.kernel, s.dilation, col.data());
      col_ptr = col.data();
    }
    std::vector<T>& out = c.activations[l + 1];
    out.resize(static_cast<std::size_t>(s.out_channels) * hw);
    MapMat<T> out_m(out.data(), s.out_channels, static_cast<Eigen::Index>(hw));
    ConstMapMat<T> w_m(params.weight(l).values.data(), s.out_channels, s.in_channels * taps);
    ConstMapMat<T> col_m(col_ptr, s.in_channels * taps, static_cast<Eigen::Index>(hw));
    out_m.noalias() = w_m * col_m;
    const auto& bias = params.bias(l).values;
    for (int ch = 0; ch < s.out_channels; ++ch) out_m.row(ch).array() += bias[ch];
    if (s.residual) {
      ConstMapMat<T> in_m(current.data(), s.in_channels, static_cast<Eigen::Index>(hw));
      out_m += in_m;
    }
    if (s.relu) {
      for (T& v : out) v = v > T{0} ? v : T{0};
    }
  }
  return c.activations.back();
}

template <typename T>
T sigmoid(T z) noexcept {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
LossReport<T> bce_loss_masked(std::span<const T> logits, std::span<const std::uint8_t> target,
                              std::span<const std::uint8_t> mask) {
  if (logits.size() != target.size() || logits.size() != mask.size())
    throw Error(ErrorCode::kShapeMismatch, "logits, target and mask sizes differ");
  LossReport<T> report;
  report.grad_logits.assign(logits.size(), T{0});
  for (std::uint8_t m : mask) report.n_active += m ? 1 : 0;
  if (report.n_active == 0) throw Error(ErrorCode::kEmptyMask, "mask has no active pixel");

  const double inv_n = 1.0 / report.n_active;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    const double z = static_cast<double>(logits[i]);
    const double y = target[i] ? 1.0 : 0.0;
    // softplus(z) - y*z, written to avoid overflow for large |z|
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    report.grad_logits[i] = static_cast<T>((sigmoid(z) - y) * inv_n);
  }
  report.loss = total * inv_n;
  return report;
}

template <typename T>
BasicNetParams<T> backward(const BasicNetParams<T>& params, const ForwardCache<T>& cache,
                           std::span<const T> grad_logits) {
  check_layout(params);
  if (cache.activations.size() != kArchitecture.size() + 1 || cache.params_hash != params_hash(params))
    throw Error(ErrorCode::kCacheMismatch, "forward cache was not produced by these parameters");
  const int h = cache.height;
  const int w = cache.width;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  if (grad_logits.size() != hw) throw Error(ErrorCode::kCacheMismatch, "grad_logits size does not match cache");

  BasicNetParams<T> grads = BasicNetParams<T>::zeros();
  std::vector<T> d(grad_logits.begin(), grad_logits.end());
  std::vector<T>& col = workspace<T>();
  std::vector<T> dcol;
  for (std::size_t li = kArchitecture.size(); li-- > 0;) {
    const auto& s = kArchitecture[li];
    const int taps = s.kernel * s.kernel;
    const std::vector<T>& in = cache.activations[li];
    const std::vector<T>& out = cache.activations[li + 1];
    if (s.relu) {
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(out[i] > T{0})) d[i] = T{0};
    }
    const T* col_ptr = in.data();
    if (s.kernel > 1) {
      col.resize(static_cast<std::size_t>(s.in_channels) * taps * hw);
      im2col(in.data(), s.in_channels, h, w, s.kernel, s.dilation, col.data());
      col_ptr = col.data();
    }
    ConstMapMat<T> d_m(d.data(), s.out_channels, static_cast<Eigen::Index>(hw));
    ConstMapMat<T> col_m(col_ptr, s.in_channels * taps, static_cast<Eigen::Index>(hw));
    MapMat<T> dw_m(grads.weight(li).values.data(), s.out_channels, s.in_channels * taps);
    dw_m.noalias() = d_m * col_m.transpose();
    auto& db = grads.bias(li).values;
    // plain loop: Eigen's vectorized sum order depends on the buffer's alignment
    for (int c = 0; c < s.out_channels; ++c) {
      const T* row = d.data() + static_cast<std::size_t>(c) * hw;
      T acc{0};
      for (std::size_t i = 0; i < hw; ++i) acc += row[i];
      db[c] = acc;
    }
    if (li == 0) break;

    std::vector<T> din(static_cast<std::size_t>(s.in_channels) * hw, T{0});
    if (s.residual) std::copy(d.begin(), d.end(), din.begin());
    ConstMapMat<T> w_m(params.weight(li).values.data(), s.out_channels, s.in_channels * taps);
    if (s.kernel > 1) {
      dcol.resize(static_cast<std::size_t>(s.in_channels) * taps * hw);
      MapMat<T> dcol_m(dcol.data(), s.in_channels * taps, static_cast<Eigen::Index>(hw));
      dcol_m.noalias() = w_m.transpose() * d_m;
      col2im_add(dcol.data(), s.in_channels, h, w, s.kernel, s.dilation, din.data());
    } else {
      MapMat<T> din_m(din.data(), s.in_channels, static_cast<Eigen::Index>(hw));
      din_m.noalias() += w_m.transpose() * d_m;
    }
    d = std::move(din);
  }
  return grads;
}

void sgd_step(NetParams& params, const NetParams& grads, double lr, double momentum, NetParams& velocity) {
  check_layout(params);
  check_layout(grads);
  if (!(lr > 0.0) || !(momentum >= 0.0 && momentum < 1.0))
    throw Error(ErrorCode::kInvalidArgument, "sgd_step needs lr > 0 and momentum in [0, 1)");
  for (const auto& t : grads.tensors)
    for (float g : t.values)
      if (!std::isfinite(g)) throw Error(ErrorCode::kDivergedGradient, "non-finite gradient in " + t.name);
  if (velocity.tensors.empty()) velocity = NetParams::zeros();
  check_layout(velocity);
  const float m = static_cast<float>(momentum);
  const float step = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i].values;
    auto& v = velocity.tensors[i].values;
    const auto& g = grads.tensors[i].values;
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = m * v[j] + g[j];
      p[j] -= step * v[j];
    }
  }
}

void save_params(const NetParams& params, const std::filesystem::path& path) {
  check_layout(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write weights file " + path.string());
  BinaryWriter wr(out);
  wr.magic("ANP1");
  wr.u32(kFormatVersion);
  const auto& fp = architecture_fingerprint();
  wr.bytes(std::as_bytes(std::span(fp)));
  wr.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    wr.str(t.name);
    wr.u8(static_cast<std::uint8_t>(t.group));
    wr.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int dim : t.shape) wr.u32(static_cast<std::uint32_t>(dim));
    wr.f32s(t.values);
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

NetParams load_params(const std::filesystem::path& path) { return read_params_file(path); }

std::vector<std::string> load_params_group(const std::filesystem::path& path, Group group, NetParams& into) {
  check_layout(into);
  const NetParams source = read_params_file(path);
  std::vector<std::string> loaded;
  for (std::size_t i = 0; i < source.tensors.size(); ++i) {
    if (source.tensors[i].group != group) continue;
    into.tensors[i].values = source.tensors[i].values;
    loaded.push_back(source.tensors[i].name);
  }
  return loaded;
}

#define AFFLAB_INSTANTIATE(T)                                                                              \
  template struct BasicNetParams<T>;                                                                       \
  template void check_layout<T>(const BasicNetParams<T>&);                                                 \
  template std::uint64_t params_hash<T>(const BasicNetParams<T>&);                                         \
  template std::vector<T> forward<T>(const BasicNetParams<T>&, const Planes<T>&, ForwardCache<T>*);        \
  template LossReport<T> bce_loss_masked<T>(std::span<const T>, std::span<const std::uint8_t>,             \
                                            std::span<const std::uint8_t>);                                \
  template BasicNetParams<T> backward<T>(const BasicNetParams<T>&, const ForwardCache<T>&, std::span<const T>); \
  template T sigmoid<T>(T) noexcept;

AFFLAB_INSTANTIATE(float)
AFFLAB_INSTANTIATE(double)

#undef AFFLAB_INSTANTIATE

}  // namespace afflab::nn
