#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gaitcontour::nc {

// Dense f64 row-major tensor node. Gradients are accumulated (summed) into
// `grad` by Tape::backward; `grad` stays empty until first touched.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string name;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

using Tensor = std::shared_ptr<TensorNode>;

std::size_t shape_numel(const std::vector<int>& shape);
Tensor make_tensor(std::vector<int> shape, std::vector<double> value, bool requires_grad = false,
                   std::string name = "");
Tensor zeros(std::vector<int> shape, bool requires_grad = false, std::string name = "");

// Batch-norm state: learnable scale/shift plus running statistics
// (running stats are buffers, not tape tensors).
struct BnParams {
  Tensor gamma, beta;
  std::vector<double> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
BnParams make_bn(int channels, const std::string& name);

struct MhaParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // each w: [C,C], b: [C]
  int heads = 4;
};

// Records ops for one forward pass; backward() replays them in exact reverse
// order, accumulating gradients. One tape is a single-threaded unit of work.
class Tape {
 public:
  // ---- elementwise / structural ----
  Tensor add(const Tensor& a, const Tensor& b);            // same shape
  Tensor sub(const Tensor& a, const Tensor& b);            // same shape
  Tensor mul(const Tensor& a, const Tensor& b);            // Hadamard
  Tensor mul_scalar(const Tensor& a, double s);
  Tensor add_scalar(const Tensor& a, double s);
  Tensor add_channels(const Tensor& x, const Tensor& v);   // v:[C] broadcast over leading dims
  Tensor relu(const Tensor& x);
  Tensor sqrt_eps(const Tensor& x, double eps = 1e-12);    // sqrt(x + eps)
  Tensor reshape(const Tensor& x, std::vector<int> shape);
  Tensor transpose_last2(const Tensor& x);                 // rank >= 2
  Tensor permute_0213(const Tensor& x);                    // rank 4: [A,B,C,D] -> [A,C,B,D]
  Tensor concat(const std::vector<Tensor>& xs, int dim);
  Tensor narrow0(const Tensor& x, int start, int len);     // slice along dim 0
  Tensor narrow1(const Tensor& x, int start, int len);     // slice along dim 1
  Tensor sum_all(const Tensor& x);                         // -> [1]
  Tensor mean_axis0(const Tensor& x);                      // drop leading dim

  // ---- linear algebra ----
  Tensor matmul(const Tensor& a, const Tensor& b);         // [M,K]x[K,N]
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // [..,K]x[K,N]+[N]
  Tensor bmm(const Tensor& a, const Tensor& b);            // [B,M,K]x[B,K,N]

  // ---- neural ops ----
  Tensor softmax(const Tensor& x, int dim);                // max-stabilized
  // x:[T,J,Cin], w:[k,Cin,Cout], b:[Cout]; zero padding (k-1)/2, k odd.
  Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& b);
  // Per-channel normalization over all non-channel positions (channel-last).
  Tensor batch_norm(const Tensor& x, BnParams& bn, bool train_mode);
  Tensor avg_pool_points(const Tensor& x, int window);     // [T,J,C] -> [T,J/window,C]
  // Scaled dot-product self-attention over dim 1 tokens, per dim-0 slice.
  Tensor multi_head_attention(const Tensor& x, const MhaParams& p);

  void backward(const Tensor& loss);                       // loss: numel 1

 private:
  struct Step {
    Tensor out;
    std::function<void()> back;
  };
  std::vector<Step> steps_;
  Tensor record(std::vector<int> shape, std::vector<double> value,
                const std::vector<Tensor>& inputs, std::function<void()> back);
};

// ---- gradient checking ----
struct GradCheckConfig {
  double h = 1e-5;
  double tol = 1e-4;
  int coords_per_tensor = 6;  // randomly sampled coordinates per leaf
  std::uint64_t seed = 1;
};
struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
  bool ok = true;
  std::string worst;  // "name[i]: analytic vs fd"
};
// build() must construct a fresh graph over the given leaves and return a
// scalar loss; it is re-invoked for every finite-difference evaluation.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& build,
                           const std::vector<Tensor>& leaves, const GradCheckConfig& cfg);

// ---- checkpoint serialization ----
// Flat binary: magic "GCT1", u32 entry count, then per entry
// {u32 name_len, name, u32 rank, u32 dims..., f64 data...}, and a trailing
// u32 CRC-32 of all preceding bytes. Bit-exact round-trip.
struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;
};
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

}  // namespace gaitcontour::nc
