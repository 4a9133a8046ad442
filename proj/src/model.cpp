#include "vidtr/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include "vidtr/ops.hpp"

namespace vidtr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

std::string join(const std::vector<std::size_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" +
                      value + "'");
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::out_of_range&) {
    throw ConfigError("key '" + key + "': value out of range");
  }
}

std::vector<std::size_t> parse_list(const std::string& key,
                                    const std::string& value) {
  std::vector<std::size_t> out;
  const std::string v = trim(value);
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, item));
  return out;
}

}  // namespace

PatchLattice ModelConfig::lattice() const {
  return patch_lattice(channels, clip_len, frame_width, frame_height,
                       geometry());
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(clip_len, "clip_len");
  positive(sample_rate, "sample_rate");
  positive(frame_width, "frame_width");
  positive(frame_height, "frame_height");
  positive(channels, "channels");
  positive(patch, "patch");
  positive(temporal_patch, "temporal_patch");
  positive(embed_dim, "embed_dim");
  positive(heads, "heads");
  positive(mlp_hidden, "mlp_hidden");
  positive(class_count, "classes");
  if (frame_width % patch || frame_height % patch)
    throw ConfigError("patch " + std::to_string(patch) + " does not divide " +
                      std::to_string(frame_width) + "x" +
                      std::to_string(frame_height) + " frames");
  if (clip_len % temporal_patch)
    throw ConfigError("temporal_patch " + std::to_string(temporal_patch) +
                      " does not divide clip_len " + std::to_string(clip_len));
  if (embed_dim % heads)
    throw ConfigError("heads " + std::to_string(heads) +
                      " does not divide embed_dim " + std::to_string(embed_dim));
  if (downsample_layers.size() != downsample_taus.size())
    throw ConfigError("downsample_layers has " +
                      std::to_string(downsample_layers.size()) +
                      " entries but downsample_taus has " +
                      std::to_string(downsample_taus.size()));
  if (downsample_layers.empty()) return;

  if (factorization != Factorization::Separable &&
      factorization != Factorization::Axial)
    throw ConfigError("temporal down-sampling needs separable or axial "
                      "attention, not " + to_string(factorization));
  if (pool == PoolKind::None)
    throw ConfigError("a down-sample schedule needs a pool kind");

  std::size_t extent = temporal_tokens();
  for (std::size_t i = 0; i < downsample_layers.size(); ++i) {
    const std::size_t layer = downsample_layers[i], tau = downsample_taus[i];
    const std::string pair = "down-sample layer " + std::to_string(layer) +
                             " with tau " + std::to_string(tau) + ": ";
    if (layer >= depth)
      throw ConfigError(pair + "layer index beyond depth " + std::to_string(depth));
    if (i > 0 && layer <= downsample_layers[i - 1])
      throw ConfigError(pair + "layers must be strictly increasing");
    if (i > 0 && tau >= downsample_taus[i - 1])
      throw ConfigError(pair + "tau values must be strictly decreasing");
    if (tau < 1 || tau > extent)
      throw ConfigError(pair + "tau must lie in [1, " + std::to_string(extent) +
                        "] for an incoming extent of " +
                        std::to_string(extent + 1) + " rows");
    if ((pool == PoolKind::Avg || pool == PoolKind::Conv1d) &&
        tau != (extent + 1) / 2)
      throw ConfigError(pair + to_string(pool) + " pooling halves " +
                        std::to_string(extent) + " frames to " +
                        std::to_string((extent + 1) / 2));
    extent = tau;
  }
}

PoolSpec ModelConfig::pool_at(std::size_t layer) const {
  for (std::size_t i = 0; i < downsample_layers.size(); ++i)
    if (downsample_layers[i] == layer) return {pool, downsample_taus[i]};
  return {};
}

std::vector<std::size_t> ModelConfig::temporal_extents() const {
  std::vector<std::size_t> out;
  std::size_t extent = temporal_tokens();
  for (std::size_t l = 0; l < depth; ++l) {
    const PoolSpec p = pool_at(l);
    if (p.kind != PoolKind::None) extent = p.target_tau;
    out.push_back(extent + 1);
  }
  return out;
}

ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  if (name == "toy") return c;

  c.frame_width = c.frame_height = 224;
  c.channels = 3;
  c.patch = 16;
  c.embed_dim = 768;
  c.depth = 12;
  c.heads = 8;
  c.mlp_hidden = 3072;
  c.class_count = 400;
  if (name == "vidtr_s" || name == "c_vidtr_s") {
    c.clip_len = 8;
    c.sample_rate = 8;
  } else if (name == "vidtr_m" || name == "c_vidtr_m") {
    c.clip_len = 16;
    c.sample_rate = 4;
  } else if (name == "vidtr_l") {
    c.clip_len = 32;
    c.sample_rate = 2;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  if (name == "c_vidtr_s") {
    c.pool = PoolKind::TopkStd;
    c.downsample_layers = {1, 2, 4};
    c.downsample_taus = {6, 4, 2};
  } else if (name == "c_vidtr_m") {
    c.pool = PoolKind::TopkStd;
    c.downsample_layers = {1, 2, 4};
    c.downsample_taus = {8, 4, 2};
  }
  return c;
}

std::vector<std::string> model_preset_names() {
  return {"vidtr_s", "vidtr_m", "vidtr_l", "c_vidtr_s", "c_vidtr_m", "toy"};
}

std::string model_config_text(const ModelConfig& c) {
  std::ostringstream os;
  os << "clip_len=" << c.clip_len << '\n'
     << "sample_rate=" << c.sample_rate << '\n'
     << "frame_width=" << c.frame_width << '\n'
     << "frame_height=" << c.frame_height << '\n'
     << "channels=" << c.channels << '\n'
     << "patch=" << c.patch << '\n'
     << "temporal_patch=" << c.temporal_patch << '\n'
     << "embed_dim=" << c.embed_dim << '\n'
     << "depth=" << c.depth << '\n'
     << "heads=" << c.heads << '\n'
     << "mlp_hidden=" << c.mlp_hidden << '\n'
     << "factorization=" << to_string(c.factorization) << '\n'
     << "pool=" << to_string(c.pool) << '\n'
     << "downsample_layers=" << join(c.downsample_layers) << '\n'
     << "downsample_taus=" << join(c.downsample_taus) << '\n'
     << "classes=" << c.class_count << '\n';
  return os.str();
}

bool set_model_key(ModelConfig& c, const std::string& key,
                   const std::string& value) {
  static const std::map<std::string, std::size_t ModelConfig::*> counts = {
      {"clip_len", &ModelConfig::clip_len},
      {"sample_rate", &ModelConfig::sample_rate},
      {"frame_width", &ModelConfig::frame_width},
      {"frame_height", &ModelConfig::frame_height},
      {"channels", &ModelConfig::channels},
      {"patch", &ModelConfig::patch},
      {"temporal_patch", &ModelConfig::temporal_patch},
      {"embed_dim", &ModelConfig::embed_dim},
      {"depth", &ModelConfig::depth},
      {"heads", &ModelConfig::heads},
      {"mlp_hidden", &ModelConfig::mlp_hidden},
      {"classes", &ModelConfig::class_count},
  };
  if (auto it = counts.find(key); it != counts.end()) {
    c.*(it->second) = parse_count(key, value);
    return true;
  }
  if (key == "factorization") {
    c.factorization = parse_factorization(trim(value));
  } else if (key == "pool") {
    c.pool = parse_pool_kind(trim(value));
  } else if (key == "downsample_layers") {
    c.downsample_layers = parse_list(key, value);
  } else if (key == "downsample_taus") {
    c.downsample_taus = parse_list(key, value);
  } else if (key == "preset") {
    c = model_preset(trim(value));
  } else {
    return false;
  }
  return true;
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig c;
  std::istringstream is(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (!set_model_key(c, key, line.substr(eq + 1)))
      throw ConfigError("line " + std::to_string(number) + ": unknown key '" +
                        key + "'");
  }
  c.validate();
  return c;
}

TokenLayout layout_for(Factorization kind) {
  switch (kind) {
    case Factorization::Joint:
      return TokenLayout::Flat;
    case Factorization::Separable:
      return TokenLayout::Grid;
    case Factorization::Axial:
      return TokenLayout::Axial;
    case Factorization::SpatialOnly:
      return TokenLayout::Frames;
  }
  return TokenLayout::Grid;
}

template <class Real>
Model<Real> Model<Real>::build(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config_ = config;
  std::mt19937_64 rng(seed);
  const PatchLattice lattice = config.lattice();
  m.layout_ = make_embed_layout(layout_for(config.factorization), lattice);
  m.embed_ = init_embed_params<Real>(m.layout_, lattice.patch_dim,
                                     config.embed_dim, rng);
  for (std::size_t l = 0; l < config.depth; ++l) {
    const bool kernel = config.pool_at(l).kind == PoolKind::Conv1d;
    m.layers_.push_back(init_encoder_layer<Real>(
        config.factorization, config.embed_dim, config.mlp_hidden, kernel, rng));
  }
  std::normal_distribution<double> dist(
      0.0, 1.0 / std::sqrt(static_cast<double>(config.embed_dim)));
  m.head_w_ = Tensor<Real>({config.embed_dim, config.class_count}, true);
  for (auto& v : m.head_w_.mutable_values()) v = static_cast<Real>(dist(rng));
  m.head_b_ = Tensor<Real>({config.class_count}, true);
  return m;
}

template <class Real>
NamedTensors<Real> Model<Real>::parameters() const {
  NamedTensors<Real> out;
  out.emplace_back("embed.weight", embed_.weight);
  out.emplace_back("embed.bias", embed_.bias);
  out.emplace_back("embed.cls", embed_.cls);
  for (std::size_t i = 0; i < embed_.pos.size(); ++i)
    out.emplace_back("embed.pos." + std::to_string(i), embed_.pos[i]);
  for (std::size_t l = 0; l < layers_.size(); ++l)
    layers_[l].collect("layers." + std::to_string(l), out);
  out.emplace_back("head.weight", head_w_);
  out.emplace_back("head.bias", head_b_);
  return out;
}

template <class Real>
std::size_t Model<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.size();
  return n;
}

template <class Real>
void Model<Real>::check_clip(const VideoClip& clip) const {
  const auto& c = config_;
  if (clip.channels != c.channels || clip.frames != c.clip_len ||
      clip.width != c.frame_width || clip.height != c.frame_height)
    throw DimensionError(
        "clip " + shape_string({clip.channels, clip.frames, clip.width, clip.height}) +
        " does not match model geometry " +
        shape_string({c.channels, c.clip_len, c.frame_width, c.frame_height}));
}

template <class Real>
Tensor<Real> Model<Real>::encode(std::span<const VideoClip* const> clips,
                                 std::vector<AttentionMaps<Real>>* maps) const {
  if (clips.empty()) throw DimensionError("encode: empty batch");
  for (const VideoClip* clip : clips) check_clip(*clip);
  auto patches = patchify_batch<Real>(clips, config_.geometry());
  Tensor<Real> x = embed_and_position(patches, embed_, layout_);
  if (maps) maps->assign(layers_.size(), AttentionMaps<Real>{});
  const std::size_t heads = config_.heads;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    AttentionMaps<Real>* m = maps ? &(*maps)[l] : nullptr;
    switch (config_.factorization) {
      case Factorization::Separable:
        x = separable_encoder_layer(x, layers_[l], heads, config_.pool_at(l), m);
        break;
      case Factorization::Axial:
        x = axial_encoder_layer(x, layers_[l], heads, config_.pool_at(l), m);
        break;
      case Factorization::Joint:
        x = joint_encoder_layer(x, layers_[l], heads, m);
        break;
      case Factorization::SpatialOnly:
        x = spatial_only_layer(x, layers_[l], heads, m);
        break;
    }
  }
  return x;
}

template <class Real>
Tensor<Real> Model<Real>::class_feature(const Tensor<Real>& encoded) const {
  const std::size_t B = encoded.dim(0), C = encoded.shape().back();
  const std::vector<std::size_t> first(B, 0);
  if (config_.factorization == Factorization::SpatialOnly) {
    auto cls = take_rows(encoded, first, 1);  // [B x T x 1 x C]
    return mean_axis(reshape(cls, {B, encoded.dim(1), C}), 1);
  }
  const std::size_t tokens = encoded.size() / (B * C);
  auto cls = take_rows(reshape(encoded, {B, 1, tokens, C}), first, 1);
  return reshape(cls, {B, C});
}

template <class Real>
Tensor<Real> Model<Real>::head(const Tensor<Real>& features) const {
  return linear(features, head_w_, head_b_);
}

template <class Real>
Tensor<Real> Model<Real>::forward(std::span<const VideoClip* const> clips,
                                  std::vector<AttentionMaps<Real>>* maps) const {
  return head(class_feature(encode(clips, maps)));
}

template <class Real>
Tensor<Real> Model<Real>::forward(const VideoClip& clip,
                                  std::vector<AttentionMaps<Real>>* maps) const {
  const VideoClip* one[] = {&clip};
  auto logits = forward(std::span<const VideoClip* const>(one), maps);
  return reshape(logits, {config_.class_count});
}

template class Model<float>;
template class Model<double>;

// ---- checkpoint -----------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string text(std::size_t n) {
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() {
    float v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ModelConfig read_header(Reader& r, const std::filesystem::path& path) {
  if (!r.has(kCheckpointMagicSize))
    throw CheckpointHeaderError(path.string() + ": file too short for a header");
  const std::string magic = r.text(kCheckpointMagicSize);
  if (magic != kCheckpointMagic) {
    if (magic.rfind("VIDTR", 0) == 0)
      throw CheckpointHeaderError(path.string() +
                                  ": unsupported checkpoint version '" + magic + "'");
    throw CheckpointHeaderError(path.string() + ": not a VidTr checkpoint");
  }
  if (!r.has(4))
    throw CheckpointHeaderError(path.string() + ": missing config length");
  const std::uint32_t len = r.u32();
  if (!r.has(len))
    throw CheckpointHeaderError(path.string() + ": config block of " +
                                std::to_string(len) + " bytes exceeds the file");
  try {
    return parse_model_config(r.text(len));
  } catch (const ConfigError& e) {
    throw CheckpointHeaderError(path.string() + ": bad config block: " + e.what());
  }
}

template <class Real>
void read_tensors(Reader& r, const NamedTensors<Real>& params,
                  const std::filesystem::path& path) {
  if (!r.has(4))
    throw CheckpointTruncatedError(path.string() + ": missing tensor count");
  const std::uint32_t count = r.u32();
  if (count != params.size())
    throw CheckpointMismatchError(path.string() + ": holds " +
                                  std::to_string(count) + " tensors, model has " +
                                  std::to_string(params.size()));
  // Values are staged so a failed load leaves the model untouched.
  std::vector<std::vector<Real>> staged(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [expected, tensor] = params[i];
    auto truncated = [&](const std::string& what) {
      return CheckpointTruncatedError(path.string() + ": truncated in " + what +
                                      " of tensor '" + expected + "'");
    };
    if (!r.has(4)) throw truncated("name length");
    const std::uint32_t name_len = r.u32();
    if (!r.has(name_len)) throw truncated("name");
    const std::string name = r.text(name_len);
    if (name != expected)
      throw CheckpointMismatchError(path.string() + ": expected tensor '" +
                                    expected + "', found '" + name + "'");
    if (!r.has(4)) throw truncated("rank");
    const std::uint32_t rank = r.u32();
    if (!r.has(4 * static_cast<std::size_t>(rank))) throw truncated("extents");
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    if (shape != tensor.shape())
      throw CheckpointMismatchError(path.string() + ": tensor '" + name +
                                    "' is " + shape_string(shape) +
                                    ", model expects " +
                                    shape_string(tensor.shape()));
    if (!r.has(4 * tensor.size())) throw truncated("data");
    staged[i].resize(tensor.size());
    for (auto& v : staged[i]) v = static_cast<Real>(r.f32());
  }
  if (r.remaining() != 0)
    throw CheckpointHeaderError(path.string() + ": " +
                                std::to_string(r.remaining()) +
                                " unexpected trailing bytes");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<Real> t = params[i].second;
    std::copy(staged[i].begin(), staged[i].end(), t.mutable_values().begin());
  }
}

}  // namespace

template <class Real>
void save_checkpoint(const Model<Real>& model,
                     const std::filesystem::path& path) {
  std::string out(kCheckpointMagic, kCheckpointMagicSize);
  const std::string config = model_config_text(model.config());
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (Real v : t.values()) {
      const float f = static_cast<float>(v);
      char b[4];
      std::memcpy(b, &f, 4);
      out.append(b, 4);
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError("cannot write checkpoint " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError("write failed for " + path.string());
}

template <class Real>
Model<Real> load_checkpoint(const std::filesystem::path& path) {
  Reader r(read_file(path));
  const ModelConfig config = read_header(r, path);
  Model<Real> model = Model<Real>::build(config, 0);
  read_tensors(r, model.parameters(), path);
  return model;
}

template <class Real>
void load_checkpoint_into(Model<Real>& model,
                          const std::filesystem::path& path) {
  Reader r(read_file(path));
  const ModelConfig config = read_header(r, path);
  if (!(config == model.config()))
    throw CheckpointMismatchError(path.string() +
                                  ": stored config differs from the model's");
  read_tensors(r, model.parameters(), path);
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  Reader r(read_file(path));
  return read_header(r, path);
}

template void save_checkpoint(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint<float>(const std::filesystem::path&);
template Model<double> load_checkpoint<double>(const std::filesystem::path&);
template void load_checkpoint_into(Model<float>&, const std::filesystem::path&);
template void load_checkpoint_into(Model<double>&, const std::filesystem::path&);

}  // namespace vidtr
