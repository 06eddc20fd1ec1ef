#pragma once

// Desk-scale Sim-MPNet: two encoders whose stage outputs are summed, a three-stage
// DMW-LA decoder with CA/SA skip gates, and a 1x1 head restored to the input size.
//
//   E_f[i] = E_f1[i] + resize(E_f2[i])
//   O_i    = SA(CA(E_f[4-i] + D_i)),  next decoder input = O_i + D_i

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "simmp/dmw_la.hpp"
#include "simmp/ds_gim.hpp"
#include "simmp/layers.hpp"

namespace simmp {

inline constexpr std::size_t kStages = 4;
inline constexpr std::size_t kDecoderStages = 3;

struct NetworkConfig {
  std::size_t res1 = 64;
  std::size_t res2 = 64;
  std::size_t in_channels = 1;
  std::size_t classes = 4;  // also the K-means cluster count
  std::array<std::size_t, kStages> channels{16, 32, 64, 64};
  std::array<std::size_t, kStages> depth1{1, 1, 3, 1};
  std::array<std::size_t, kStages> depth2{1, 1, 1, 1};
  std::size_t window = 4;
  std::size_t slots = 32;
  std::size_t ca_reduction = 4;
  std::size_t sa_kernel = 7;
  bool use_memory = true;
  bool use_encoder2 = true;

  // Throws ContractError naming the first bad field.
  void validate() const;

  // Flat `key = value` form. Unknown keys are rejected by set().
  bool set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
  static NetworkConfig from_text(const std::string& text);
};

struct StageFeatures {
  std::array<Var, kStages> enc1, enc2, fused;
  std::array<Var, kDecoderStages> decoder, skip;
};

// CA then SA on x[H x W x C]; gates are sigmoids of a shared two-layer MLP over
// average/max pooled channels and of a k x k conv over the channel mean/max maps.
class SkipAttention {
 public:
  SkipAttention(ParameterStore& store, Initializer& init, const std::string& name, std::size_t channels,
                std::size_t reduction, std::size_t kernel);

  Var channel_gate(const Var& x) const;  // [C]
  Var spatial_gate(const Var& x) const;  // [H x W x 1]
  Var operator()(const Var& x) const;

 private:
  Linear fc1_, fc2_;
  Conv spatial_;
};

// skip_attention(E, D) = SA(CA(E + D)).
Var skip_attention(const SkipAttention& gate, const Var& encoder, const Var& decoder);

// E_f2[i] resized to E_f1[i]'s extents and added.
std::array<Var, kStages> fuse_stages(const std::array<Var, kStages>& enc1, const std::array<Var, kStages>& enc2);

class SimMpNet {
 public:
  SimMpNet(const NetworkConfig& config, std::uint64_t seed, InitMode mode = InitMode::random);

  const NetworkConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  std::array<Var, kStages> encoder1_forward(const Var& image);
  std::array<Var, kStages> encoder2_forward(const Var& image);
  // Logits [res1 x res1 x classes].
  Var forward_full(const Var& image1, const Var& image2, StageFeatures* features = nullptr);
  // Resizes a single H x W x in_channels image to both encoder resolutions.
  Var forward(const Tensor& image, StageFeatures* features = nullptr);

  void set_training(bool training);
  void set_discrete_mode(DiscreteMode mode);
  void set_collecting(bool on);
  std::vector<DmwLaBlock*> memory_blocks();
  std::vector<const DmwLaBlock*> memory_blocks() const;
  std::vector<std::optional<UpdateReport>> apply_memory_update(std::size_t budget);

 private:
  struct Block {
    std::unique_ptr<DmwLaBlock> dmw;
    std::unique_ptr<DsGimBlock> gim;
    Var operator()(const Var& x) const;
  };
  struct WindowBlock {
    AttentionWeights attention;
    Conv proj;
  };
  struct Stage {
    Conv down;
    Conv embed;  // 1x1 projection of the resized image
    std::vector<Block> blocks;
    std::vector<WindowBlock> window_blocks;
  };
  struct DecoderStage {
    Conv reduce;
    std::unique_ptr<DmwLaBlock> dmw;
    std::unique_ptr<SkipAttention> skip;
  };

  Var stage_input(const Stage& stage, const Var& previous, const Var& image) const;

  NetworkConfig config_;
  ParameterStore store_;
  std::vector<Stage> enc1_, enc2_;
  std::vector<DecoderStage> decoder_;
  Conv head_;
};

}  // namespace simmp
