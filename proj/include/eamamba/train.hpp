#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "eamamba/restoration_net.hpp"
#include "eamamba/synth.hpp"

namespace eamamba {

// Progressive training stage: from iteration `start` on, crops are
// patch x patch and each step averages `batch` items.
struct Stage {
  std::size_t patch = 32;
  std::size_t batch = 4;
  std::size_t start = 0;

  bool operator==(const Stage&) const = default;
};

std::string to_string(const std::vector<Stage>& stages);
// "16x8@0, 32x4@1000"
std::vector<Stage> parse_stages(std::string_view text);

struct TrainConfig {
  std::size_t iterations = 2000;
  double lr_init = 3e-4;
  double lr_final = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  double eps = 1e-8;
  std::vector<Stage> stages{{32, 4, 0}};
  bool augment = true;
  std::uint64_t seed = 1;

  // Stages must start at 0, be strictly increasing and use patches that
  // are multiples of the network's padding granule.
  void validate(const NetConfig& net) const;
  // Cosine annealing from lr_init at t = 0 to lr_final at t = iterations.
  double lr(std::size_t t) const;
  const Stage& stage_at(std::size_t t) const;

  bool operator==(const TrainConfig&) const = default;
};

// Decoupled weight decay with bias-corrected moments.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(const std::vector<Parameter<float>*>& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// Eight dihedral transforms: bit 0 horizontal flip, bit 1 vertical flip,
// bit 2 transpose (applied last). Code 0 is the identity.
template <typename T>
Tensor<T> dihedral(const Tensor<T>& image, unsigned code);

struct LogRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::size_t patch = 0;
  std::size_t batch = 0;
};

// iteration,lr,loss,patch,batch with fixed formatting.
void write_log_csv(std::ostream& os, const std::vector<LogRow>& log);

struct TrainOptions {
  // Where a failing batch is dumped on a non-finite loss; empty disables.
  std::filesystem::path dump_dir;
  // Called after every iteration.
  std::function<void(const LogRow&)> on_step;
};

// L1 training on random crops of `data`. Throws NumericError on a
// non-finite loss after dumping the batch.
std::vector<LogRow> train(RestorationNet<float>& net, const std::vector<ImagePair>& data,
                          const TrainConfig& cfg, const TrainOptions& opt = {});

struct EvalResult {
  double noisy_psnr = 0.0;
  double restored_psnr = 0.0;
  double restored_ssim = 0.0;
};

// Mean metrics over full images.
EvalResult evaluate(RestorationNet<float>& net, const std::vector<ImagePair>& data);

}  // namespace eamamba
