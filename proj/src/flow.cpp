#include "rfgen/flow.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace rfgen {

ConditioningBundle build_conditioning(const PhantomRecord& record, const TreatmentContext& ctx,
                                      const ModelConfig& config) {
  ctx.validate();
  ConditioningBundle b;
  b.context = ctx;
  if (config.use_dose) {
    ImageF dose = record.dose;
    dose.data = (dose.data.array() * static_cast<float>(ctx.dose_scale)).min(kMaxScaledDose).max(0.0f).matrix();
    b.spatial = concat_channels(record.baseline, dose);
  } else {
    b.spatial = record.baseline;
  }
  return b;
}

ModelCheckpoint initial_checkpoint(const ModelConfig& config, std::uint64_t seed, InitMode mode) {
  const VelocityNet net(config);
  ModelCheckpoint c;
  c.config = config;
  c.weights = net.init<float>(seed, mode);
  c.meta.seed = seed;
  return c;
}

ImageF FlowModel::velocity(const ImageF& x_t, double t, const ConditioningBundle& cond) const {
  if (x_t.width != ckpt_.config.image_width || x_t.height != ckpt_.config.image_height || x_t.channels() != 3) {
    throw ArgumentError("velocity_forward: x_t shape does not match checkpoint config");
  }
  nn::Mat<float> v = net_.forward<float>(ckpt_.weights, x_t.data, static_cast<float>(t), cond.spatial.data, cond.context);
  return ImageF(x_t.width, x_t.height, std::move(v));
}

ImageF velocity_forward(const ModelCheckpoint& ckpt, const ImageF& x_t, double t, const ConditioningBundle& cond) {
  return FlowModel(ckpt).velocity(x_t, t, cond);
}

ImageF standard_normal_image(int width, int height, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  ImageF img(width, height, channels);
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data.data()[i] = n(rng);
  return img;
}

LossResult<float> rf_loss(const VelocityNet& net, const ParamStore<float>& p, const ImageF& x1,
                          const ConditioningBundle& cond, std::mt19937_64& rng) {
  const ImageF x0 = standard_normal_image(x1.width, x1.height, x1.channels(), rng());
  const float t = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
  return rf_loss_at<float>(net, p, x1.data, x0.data, t, cond.spatial.data, cond.context);
}

// ---------------------------------------------------------------------------
// Checkpoint file: "RFCKPT1", u32 header length, JSON header, u32 tensor
// count, then per tensor: u32 name length, name, u32 rank, u32 dims[rank],
// float32 data (row-major). All little-endian.

namespace {

constexpr char kCkptMagic[] = "RFCKPT1";
constexpr std::size_t kCkptMagicLen = 7;

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

struct Reader {
  const std::string& s;
  std::size_t pos = 0;
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, s.data() + pos, 4);
    pos += 4;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s.substr(pos, n);
    pos += n;
    return out;
  }
  void need(std::size_t n) const {
    if (pos + n > s.size()) throw IoError("checkpoint: truncated file");
  }
};

nlohmann::json meta_json(const TrainingMeta& m) {
  return {{"epoch", m.epoch}, {"seed", m.seed}, {"train_loss", m.train_loss}, {"val_loss", m.val_loss}, {"extra", m.extra}};
}

}  // namespace

std::string encode_checkpoint(const ModelCheckpoint& ckpt) {
  std::string out(kCkptMagic, kCkptMagicLen);
  const std::string header = nlohmann::json{{"config", to_json(ckpt.config)}, {"meta", meta_json(ckpt.meta)}}.dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  const auto& w = ckpt.weights;
  put_u32(out, static_cast<std::uint32_t>(w.size()));
  for (int i = 0; i < w.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(w.name(i).size()));
    out += w.name(i);
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(w[i].rows()));
    put_u32(out, static_cast<std::uint32_t>(w[i].cols()));
    out.append(reinterpret_cast<const char*>(w[i].data()), static_cast<std::size_t>(w[i].size()) * sizeof(float));
  }
  return out;
}

ModelCheckpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kCkptMagicLen || bytes.compare(0, kCkptMagicLen, kCkptMagic) != 0) {
    throw IoError("checkpoint: bad magic");
  }
  Reader r{bytes, kCkptMagicLen};
  ModelCheckpoint c;
  try {
    const auto header = nlohmann::json::parse(r.bytes(r.u32()));
    c.config = model_config_from_json(header.at("config"));
    const auto& m = header.at("meta");
    c.meta.epoch = m.at("epoch");
    c.meta.seed = m.at("seed");
    c.meta.train_loss = m.at("train_loss").get<std::vector<double>>();
    c.meta.val_loss = m.at("val_loss").get<std::vector<double>>();
    c.meta.extra = m.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  c.weights = VelocityNet(c.config).layout<float>();
  const std::uint32_t count = r.u32();
  if (static_cast<int>(count) != c.weights.size()) throw IoError("checkpoint: tensor count does not match config");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 2) throw IoError("checkpoint: unsupported tensor rank for " + name);
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = rank == 2 ? r.u32() : 1;
    if (!c.weights.contains(name)) throw IoError("checkpoint: unexpected tensor " + name);
    auto& t = c.weights[c.weights.index(name)];
    if (t.rows() != rows || t.cols() != cols) throw IoError("checkpoint: shape mismatch for " + name);
    const std::string data = r.bytes(static_cast<std::size_t>(rows) * cols * sizeof(float));
    std::memcpy(t.data(), data.data(), data.size());
  }
  if (r.pos != bytes.size()) throw IoError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path.string());
  const std::string bytes = encode_checkpoint(ckpt);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace rfgen
