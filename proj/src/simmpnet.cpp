#include "simmp/simmpnet.hpp"

#include <algorithm>
#include <sstream>

#include "simmp/errors.hpp"
#include "simmp/ops.hpp"

namespace simmp {

namespace {

std::string join(const std::array<std::size_t, kStages>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    throw ContractError("config: " + key + " expects a non-negative integer, got '" + text + "'");
  }
  if (pos != text.size() || text.empty() || text.front() == '-') {
    throw ContractError("config: " + key + " expects a non-negative integer, got '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ContractError("config: " + key + " expects true/false, got '" + text + "'");
}

std::array<std::size_t, kStages> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    items.push_back(parse_size(key, item));
  }
  if (items.size() != kStages) {
    throw ContractError("config: " + key + " expects " + std::to_string(kStages) + " comma-separated values");
  }
  std::array<std::size_t, kStages> out{};
  std::copy(items.begin(), items.end(), out.begin());
  return out;
}

// Keeps the initial logits small so the first losses sit near chance.
constexpr double kHeadGain = 0.1;

std::uint64_t block_seed(std::uint64_t seed, std::size_t index) {
  return seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL * (index + 1);
}

}  // namespace

void NetworkConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ContractError("network config: " + what);
  };
  need(res1 >= 1 && res2 >= 1, "resolutions must be positive");
  need(in_channels >= 1, "in_channels must be positive");
  need(classes >= 2, "classes must be at least 2");
  for (auto c : channels) need(c >= 1, "channel widths must be positive");
  need(depth1[2] >= 1, "stage 3 of encoder 1 needs at least one block");
  need(window >= 1, "window must be positive");
  need(slots >= 1, "slots must be positive");
  need(ca_reduction >= 1, "ca_reduction must be positive");
  need(sa_kernel % 2 == 1, "sa_kernel must be odd");
}

bool NetworkConfig::set(const std::string& key, const std::string& value) {
  if (key == "res1") res1 = parse_size(key, value);
  else if (key == "res2") res2 = parse_size(key, value);
  else if (key == "in_channels") in_channels = parse_size(key, value);
  else if (key == "classes") classes = parse_size(key, value);
  else if (key == "channels") channels = parse_list(key, value);
  else if (key == "depth1") depth1 = parse_list(key, value);
  else if (key == "depth2") depth2 = parse_list(key, value);
  else if (key == "window") window = parse_size(key, value);
  else if (key == "slots") slots = parse_size(key, value);
  else if (key == "ca_reduction") ca_reduction = parse_size(key, value);
  else if (key == "sa_kernel") sa_kernel = parse_size(key, value);
  else if (key == "use_memory") use_memory = parse_bool(key, value);
  else if (key == "use_encoder2") use_encoder2 = parse_bool(key, value);
  else return false;
  return true;
}

std::map<std::string, std::string> NetworkConfig::to_map() const {
  return {
      {"res1", std::to_string(res1)},
      {"res2", std::to_string(res2)},
      {"in_channels", std::to_string(in_channels)},
      {"classes", std::to_string(classes)},
      {"channels", join(channels)},
      {"depth1", join(depth1)},
      {"depth2", join(depth2)},
      {"window", std::to_string(window)},
      {"slots", std::to_string(slots)},
      {"ca_reduction", std::to_string(ca_reduction)},
      {"sa_kernel", std::to_string(sa_kernel)},
      {"use_memory", use_memory ? "true" : "false"},
      {"use_encoder2", use_encoder2 ? "true" : "false"},
  };
}

std::string NetworkConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

NetworkConfig NetworkConfig::from_text(const std::string& text) {
  NetworkConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw FormatError("network config: expected key = value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    if (!cfg.set(key, trim(line.substr(eq + 1)))) throw FormatError("network config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

SkipAttention::SkipAttention(ParameterStore& store, Initializer& init, const std::string& name,
                             std::size_t channels, std::size_t reduction, std::size_t kernel)
    : fc1_(Linear::create(store, init, name + ".ca1", channels, std::max<std::size_t>(1, channels / reduction))),
      fc2_(Linear::create(store, init, name + ".ca2", std::max<std::size_t>(1, channels / reduction), channels)),
      spatial_(Conv::create(store, init, name + ".sa", 2, 1, kernel, 1)) {}

Var SkipAttention::channel_gate(const Var& x) const {
  const std::size_t c = x.shape().back();
  auto mlp = [&](const Var& pooled) { return fc2_(relu(fc1_(reshape(pooled, {1, c})))); };
  return reshape(sigmoid(add(mlp(mean_over_positions(x)), mlp(max_over_positions(x)))), {c});
}

Var SkipAttention::spatial_gate(const Var& x) const {
  return sigmoid(spatial_(concat_lastdim(mean_lastdim(x), max_lastdim(x))));
}

Var SkipAttention::operator()(const Var& x) const {
  Var ca = mul_lastdim(x, channel_gate(x));
  return mul_broadcast_lastdim(ca, spatial_gate(ca));
}

Var skip_attention(const SkipAttention& gate, const Var& encoder, const Var& decoder) {
  if (encoder.shape() != decoder.shape()) {
    throw DimensionError("skip_attention: " + shape_str(encoder.shape()) + " vs " + shape_str(decoder.shape()));
  }
  return gate(add(encoder, decoder));
}

std::array<Var, kStages> fuse_stages(const std::array<Var, kStages>& enc1, const std::array<Var, kStages>& enc2) {
  std::array<Var, kStages> out;
  for (std::size_t i = 0; i < kStages; ++i) {
    const Shape& a = enc1[i].shape();
    const Shape& b = enc2[i].shape();
    if (a.size() != 3 || b.size() != 3 || a[2] != b[2]) {
      throw DimensionError("fuse_stages: stage " + std::to_string(i + 1) + " " + shape_str(a) + " vs " + shape_str(b));
    }
    out[i] = add(enc1[i], bilinear_resize(enc2[i], a[0], a[1]));
  }
  return out;
}

Var SimMpNet::Block::operator()(const Var& x) const { return dmw ? dmw->forward(x) : gim->forward(x); }

SimMpNet::SimMpNet(const NetworkConfig& config, std::uint64_t seed, InitMode mode) : config_(config) {
  config_.validate();
  Initializer init(seed, mode);
  std::size_t memory_index = 0;
  auto memory = [&] {
    return MemoryConfig{config_.classes, config_.slots, block_seed(seed, memory_index++), config_.use_memory};
  };

  for (std::size_t s = 0; s < kStages; ++s) {
    const std::size_t in = s == 0 ? config_.in_channels : config_.channels[s - 1];
    const std::size_t c = config_.channels[s];
    const std::string p = "enc1.s" + std::to_string(s + 1);
    Stage st{Conv::create(store_, init, p + ".down", in, c, 3, 2),
             Conv::create(store_, init, p + ".embed", config_.in_channels, c, 1, 1),
             {},
             {}};
    for (std::size_t b = 0; b < config_.depth1[s]; ++b) {
      const std::string bn = p + ".b" + std::to_string(b);
      Block block;
      if (s == 2 && b % 2 == 1) {
        block.gim = std::make_unique<DsGimBlock>(store_, init, bn + ".gim", c, config_.window);
      } else {
        block.dmw = std::make_unique<DmwLaBlock>(store_, init, bn + ".dmw", c, memory());
      }
      st.blocks.push_back(std::move(block));
    }
    enc1_.push_back(std::move(st));
  }

  if (config_.use_encoder2) {
    for (std::size_t s = 0; s < kStages; ++s) {
      const std::size_t in = s == 0 ? config_.in_channels : config_.channels[s - 1];
      const std::size_t c = config_.channels[s];
      const std::string p = "enc2.s" + std::to_string(s + 1);
      Stage st{Conv::create(store_, init, p + ".down", in, c, 3, 2),
               Conv::create(store_, init, p + ".embed", config_.in_channels, c, 1, 1),
               {},
               {}};
      for (std::size_t b = 0; b < config_.depth2[s]; ++b) {
        const std::string bn = p + ".b" + std::to_string(b);
        st.window_blocks.push_back(
            {AttentionWeights::create(store_, init, bn + ".attn", c), Conv::create(store_, init, bn + ".proj", c, c, 1, 1)});
      }
      enc2_.push_back(std::move(st));
    }
  }

  for (std::size_t i = 1; i <= kDecoderStages; ++i) {
    const std::size_t from = config_.channels[kStages - i];
    const std::size_t to = config_.channels[kStages - 1 - i];
    const std::string p = "dec.s" + std::to_string(i);
    DecoderStage d{Conv::create(store_, init, p + ".reduce", from, to, 1, 1),
                   std::make_unique<DmwLaBlock>(store_, init, p + ".dmw", to, memory()),
                   std::make_unique<SkipAttention>(store_, init, p + ".skip", to, config_.ca_reduction,
                                                   config_.sa_kernel)};
    decoder_.push_back(std::move(d));
  }
  head_ = Conv::create(store_, init, "head", config_.channels[0], config_.classes, 1, 1, true, kHeadGain);
}

Var SimMpNet::stage_input(const Stage& stage, const Var& previous, const Var& image) const {
  Var x = stage.down(previous);
  const Shape& s = x.shape();
  return add(x, stage.embed(bilinear_resize(image, s[0], s[1])));
}

std::array<Var, kStages> SimMpNet::encoder1_forward(const Var& image) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != config_.res1 || s[1] != config_.res1 || s[2] != config_.in_channels) {
    throw DimensionError("encoder1_forward: image " + shape_str(s) + ", expected " + std::to_string(config_.res1) +
                         "x" + std::to_string(config_.res1) + "x" + std::to_string(config_.in_channels));
  }
  std::array<Var, kStages> out;
  Var x = image;
  for (std::size_t i = 0; i < kStages; ++i) {
    x = stage_input(enc1_[i], x, image);
    for (const auto& block : enc1_[i].blocks) x = add(x, block(normalize_lastdim(x)));
    out[i] = x;
  }
  return out;
}

std::array<Var, kStages> SimMpNet::encoder2_forward(const Var& image) {
  if (!config_.use_encoder2) throw StateError("encoder2_forward: encoder 2 is disabled in this configuration");
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != config_.res2 || s[1] != config_.res2 || s[2] != config_.in_channels) {
    throw DimensionError("encoder2_forward: image " + shape_str(s) + ", expected " + std::to_string(config_.res2) +
                         "x" + std::to_string(config_.res2) + "x" + std::to_string(config_.in_channels));
  }
  std::array<Var, kStages> out;
  Var x = image;
  for (std::size_t i = 0; i < kStages; ++i) {
    x = stage_input(enc2_[i], x, image);
    const Shape& xs = x.shape();
    const std::size_t win = effective_window(config_.window, xs[0], xs[1]);
    for (const auto& wb : enc2_[i].window_blocks) {
      auto windows = window_partition(normalize_lastdim(x), win);
      for (auto& w : windows) w = global_interaction(w, wb.attention);
      x = add(x, wb.proj(window_merge(windows, xs[0], xs[1], win)));
    }
    out[i] = x;
  }
  return out;
}

Var SimMpNet::forward_full(const Var& image1, const Var& image2, StageFeatures* features) {
  auto enc1 = encoder1_forward(image1);
  std::array<Var, kStages> enc2;
  std::array<Var, kStages> fused = enc1;
  if (config_.use_encoder2) {
    enc2 = encoder2_forward(image2);
    fused = fuse_stages(enc1, enc2);
  }
  Var d = fused[kStages - 1];
  std::array<Var, kDecoderStages> dec, skip;
  for (std::size_t i = 0; i < kDecoderStages; ++i) {
    const Var& e = fused[kStages - 2 - i];
    const auto& st = decoder_[i];
    Var p = st.reduce(bilinear_resize(d, e.shape()[0], e.shape()[1]));
    dec[i] = add(p, st.dmw->forward(normalize_lastdim(p)));
    skip[i] = skip_attention(*st.skip, e, dec[i]);
    d = add(skip[i], dec[i]);
  }
  Var logits = bilinear_resize(head_(d), config_.res1, config_.res1);
  if (features) *features = StageFeatures{enc1, enc2, fused, dec, skip};
  return logits;
}

Var SimMpNet::forward(const Tensor& image, StageFeatures* features) {
  Var src = Var::constant(image);
  Var a = bilinear_resize(src, config_.res1, config_.res1);
  Var b = config_.use_encoder2 ? bilinear_resize(src, config_.res2, config_.res2) : Var();
  return forward_full(a, b, features);
}

std::vector<DmwLaBlock*> SimMpNet::memory_blocks() {
  std::vector<DmwLaBlock*> out;
  for (auto& st : enc1_)
    for (auto& b : st.blocks)
      if (b.dmw) out.push_back(b.dmw.get());
  for (auto& d : decoder_) out.push_back(d.dmw.get());
  return out;
}

std::vector<const DmwLaBlock*> SimMpNet::memory_blocks() const {
  std::vector<const DmwLaBlock*> out;
  for (auto* b : const_cast<SimMpNet*>(this)->memory_blocks()) out.push_back(b);
  return out;
}

void SimMpNet::set_training(bool training) {
  for (auto* b : memory_blocks()) b->set_training(training);
}

void SimMpNet::set_discrete_mode(DiscreteMode mode) {
  for (auto* b : memory_blocks()) b->set_discrete_mode(mode);
  for (auto& st : enc1_)
    for (auto& b : st.blocks)
      if (b.gim) b.gim->set_discrete_mode(mode);
}

void SimMpNet::set_collecting(bool on) {
  for (auto* b : memory_blocks()) b->set_collecting(on);
}

std::vector<std::optional<UpdateReport>> SimMpNet::apply_memory_update(std::size_t budget) {
  std::vector<std::optional<UpdateReport>> out;
  for (auto* b : memory_blocks()) out.push_back(b->apply_memory_update(budget));
  return out;
}

}  // namespace simmp
