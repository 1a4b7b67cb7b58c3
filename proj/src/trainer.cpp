#include "lvcvc/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "lvcvc/errors.hpp"

namespace fs = std::filesystem;

namespace lvcvc::train {

using ad::Mat;
using ad::Tape;
using ad::Var;

// ---------- config ----------

namespace {

// Tracks consumed keys so unknown config entries are rejected.
class StrictReader {
 public:
  StrictReader(const nlohmann::json& j, std::string context)
      : j_(j), context_(std::move(context)) {
    if (!j.is_object()) throw DataError("config section '" + context_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (j_.contains(key)) {
      try {
        out = j_.at(key).get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError("config key '" + std::string(key) + "': " + e.what());
      }
    }
    seen_.insert(key);
  }

  bool take_section(const char* key, nlohmann::json& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return false;
    out = j_.at(key);
    return true;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw DataError("unknown config key '" + it.key() + "' in " + context_);
  }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.iters_phase1 = 1800000;
  c.iters_phase2 = 5000;
  c.anneal_steps = 2000;
  c.batch = 32;
  c.checkpoint_interval = 50000;
  return c;
}

dsp::ConditioningLayout TrainConfig::layout() const {
  dsp::ConditioningLayout l;
  l.embed_dim = embed_dim;
  l.use_pnorm = use_pnorm;
  l.use_median_f0 = use_median_f0;
  return l;
}

void TrainConfig::validate() const {
  if (lr_phase1 <= 0.0 || lr_phase2 <= 0.0) throw DataError("learning rates must be > 0");
  if (batch < 1) throw DataError("batch must be >= 1");
  if (iters_phase1 < 0 || iters_phase2 < 0) throw DataError("iteration counts must be >= 0");
  if (anneal_steps < 0 || anneal_steps > iters_phase2)
    throw DataError("anneal_steps must lie in [0, iters_phase2]");
  if (n_ssc < 1) throw DataError("n_ssc must be >= 1");
  if (warp_min < 0.85 || warp_max > 1.15 || warp_min > warp_max)
    throw DataError("warp range must lie within [0.85, 1.15]");
  if (crop_frames < 1) throw DataError("crop_frames must be >= 1");
  if (embed_dim < 1) throw DataError("embed_dim must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["lr_phase1"] = lr_phase1;
  j["lr_phase2"] = lr_phase2;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["weight_decay"] = weight_decay;
  j["batch"] = batch;
  j["iters_phase1"] = iters_phase1;
  j["iters_phase2"] = iters_phase2;
  j["anneal_steps"] = anneal_steps;
  j["lambda_aux"] = lambda_aux;
  j["lambda_ssc"] = lambda_ssc;
  j["n_ssc"] = n_ssc;
  j["warp_min"] = warp_min;
  j["warp_max"] = warp_max;
  j["seed"] = seed;
  j["crop_frames"] = crop_frames;
  j["checkpoint_interval"] = checkpoint_interval;
  j["use_gaussian_embeddings"] = use_gaussian_embeddings;
  j["use_ssc"] = use_ssc;
  j["use_warping"] = use_warping;
  j["use_pnorm"] = use_pnorm;
  j["use_median_f0"] = use_median_f0;
  j["ssc_raw_cosine"] = ssc_raw_cosine;
  j["embed_dim"] = embed_dim;

  nlohmann::json g;
  g["z_dim"] = generator.z_dim;
  g["channels"] = generator.channels;
  g["upsample_rates"] = generator.upsample_rates;
  g["kp_hidden"] = generator.kp_hidden;
  g["kp_residual_blocks"] = generator.kp_residual_blocks;
  g["lvc_kernel_size"] = generator.stack.kernel_size;
  g["lvc_dilations"] = generator.stack.dilations;
  j["generator"] = g;

  nlohmann::json resolutions = nlohmann::json::array();
  for (const auto& r : mrsd.resolutions)
    resolutions.push_back({r.n_fft, r.hop, r.win_length});
  j["mrsd_resolutions"] = resolutions;
  j["mrsd_channels"] = mrsd.body_channels;
  j["mpwd_periods"] = mpwd.periods;
  j["mpwd_channels"] = mpwd.body_channels;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  StrictReader r(j, "config");
  r.read("lr_phase1", c.lr_phase1);
  r.read("lr_phase2", c.lr_phase2);
  r.read("beta1", c.beta1);
  r.read("beta2", c.beta2);
  r.read("weight_decay", c.weight_decay);
  r.read("batch", c.batch);
  r.read("iters_phase1", c.iters_phase1);
  r.read("iters_phase2", c.iters_phase2);
  r.read("anneal_steps", c.anneal_steps);
  r.read("lambda_aux", c.lambda_aux);
  r.read("lambda_ssc", c.lambda_ssc);
  r.read("n_ssc", c.n_ssc);
  r.read("warp_min", c.warp_min);
  r.read("warp_max", c.warp_max);
  r.read("seed", c.seed);
  r.read("crop_frames", c.crop_frames);
  r.read("checkpoint_interval", c.checkpoint_interval);
  r.read("use_gaussian_embeddings", c.use_gaussian_embeddings);
  r.read("use_ssc", c.use_ssc);
  r.read("use_warping", c.use_warping);
  r.read("use_pnorm", c.use_pnorm);
  r.read("use_median_f0", c.use_median_f0);
  r.read("ssc_raw_cosine", c.ssc_raw_cosine);
  r.read("embed_dim", c.embed_dim);

  nlohmann::json section;
  if (r.take_section("generator", section)) {
    StrictReader g(section, "generator");
    g.read("z_dim", c.generator.z_dim);
    g.read("channels", c.generator.channels);
    g.read("upsample_rates", c.generator.upsample_rates);
    g.read("kp_hidden", c.generator.kp_hidden);
    g.read("kp_residual_blocks", c.generator.kp_residual_blocks);
    g.read("lvc_kernel_size", c.generator.stack.kernel_size);
    g.read("lvc_dilations", c.generator.stack.dilations);
    g.finish();
  }
  if (r.take_section("mrsd_resolutions", section)) {
    c.mrsd.resolutions.clear();
    for (const auto& triple : section) {
      if (!triple.is_array() || triple.size() != 3)
        throw DataError("mrsd_resolutions entries must be [n_fft, hop, win_length]");
      c.mrsd.resolutions.push_back(
          {triple[0].get<int>(), triple[1].get<int>(), triple[2].get<int>()});
    }
  }
  r.read("mrsd_channels", c.mrsd.body_channels);
  r.read("mpwd_periods", c.mpwd.periods);
  r.read("mpwd_channels", c.mpwd.body_channels);
  r.finish();
  c.validate();
  return c;
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << to_json().dump(2) << "\n";
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed config '" + path + "': " + e.what());
  }
  return from_json(j);
}

nlohmann::json LossRecord::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["phase"] = phase;
  j["L_D"] = loss_d;
  j["L_G"] = loss_g;
  j["L_aux"] = loss_aux;
  j["L_ssc"] = loss_ssc;
  j["lambda_ssc"] = lambda_ssc;
  return j;
}

// ---------- training data ----------

TrainingData TrainingData::load(const io::SpeakerRegistry& registry,
                                const std::string& cache_dir,
                                const speaker::SpeakerEncoder& encoder,
                                const speaker::GaussianStore& store) {
  TrainingData data;
  data.store_ = store;
  for (const auto& rec : registry.split_records(io::Split::kTrain)) {
    const std::string cache_path = (fs::path(cache_dir) / (rec.utt_id + ".lvca")).string();
    if (!fs::exists(cache_path))
      throw DataError("missing feature cache for '" + rec.utt_id + "' (expected " +
                      cache_path + ")");
    const ArrayFile cache = ArrayFile::load(cache_path);
    TrainingUtterance utt;
    utt.utt_id = rec.utt_id;
    utt.speaker_id = rec.speaker_id;
    utt.samples = io::read_wav(rec.path).samples;
    utt.envelope = cache.get("H");
    utt.pnorm_classes = cache.get("p_norm").row(0).transpose().cast<int>();
    utt.median_bin = static_cast<int>(cache.get("m")(0, 0));
    utt.embedding = speaker::embedding_from_cache(cache, encoder);
    if (!store.gaussians.count(rec.speaker_id))
      throw DataError("missing Gaussian for speaker '" + rec.speaker_id + "'");
    data.by_speaker_[rec.speaker_id].push_back(static_cast<int>(data.utts_.size()));
    data.utts_.push_back(std::move(utt));
  }
  if (data.utts_.empty()) throw DataError("no training utterances in manifest");
  for (const auto& [spk, _] : data.by_speaker_) {
    std::vector<int> others;
    for (int i = 0; i < static_cast<int>(data.utts_.size()); ++i)
      if (data.utts_[i].speaker_id != spk) others.push_back(i);
    data.others_[spk] = others;
  }
  return data;
}

const speaker::SpeakerGaussian& TrainingData::gaussian(const std::string& speaker_id) const {
  auto it = store_.gaussians.find(speaker_id);
  if (it == store_.gaussians.end())
    throw DataError("missing Gaussian for speaker '" + speaker_id + "'");
  return it->second;
}

const std::vector<int>& TrainingData::other_speaker_utts(const std::string& speaker_id) const {
  auto it = others_.find(speaker_id);
  if (it == others_.end()) throw DataError("unknown speaker '" + speaker_id + "'");
  return it->second;
}

// ---------- trainer ----------

Trainer::Trainer(const TrainConfig& config, const speaker::SpeakerEncoder& encoder)
    : config_(config), encoder_(encoder), rng_(config.seed) {
  config_.validate();
  if (encoder.config().embed_dim != config.embed_dim)
    throw DataError("encoder embed_dim " + std::to_string(encoder.config().embed_dim) +
                    " != config embed_dim " + std::to_string(config.embed_dim));
  gen::GeneratorConfig gcfg = config_.generator;
  gcfg.cond_channels = config_.layout().channels();
  gcfg.stack.channels = gcfg.channels;
  Rng init_rng(config_.seed ^ 0x9e3779b97f4a7c15ull);
  generator_ = gen::Generator(gcfg, init_rng);
  discriminators_ = gan::DiscriminatorSet(config_.mrsd, config_.mpwd, init_rng);

  std::vector<ad::NamedParam> gparams, dparams;
  generator_.params("gen", gparams);
  discriminators_.params("disc", dparams);
  ad::AdamW::Config oc;
  oc.lr = config_.lr_phase1;
  oc.beta1 = config_.beta1;
  oc.beta2 = config_.beta2;
  oc.weight_decay = config_.weight_decay;
  opt_g_ = ad::AdamW(gparams, oc);
  opt_d_ = ad::AdamW(dparams, oc);
}

void Trainer::rebind_optimizers() {
  std::vector<ad::NamedParam> gparams, dparams;
  generator_.params("gen", gparams);
  discriminators_.params("disc", dparams);
  opt_g_.rebind(std::move(gparams));
  opt_d_.rebind(std::move(dparams));
}

Trainer::Trainer(const Trainer& other)
    : config_(other.config_),
      encoder_(other.encoder_),
      generator_(other.generator_),
      discriminators_(other.discriminators_),
      opt_g_(other.opt_g_),
      opt_d_(other.opt_d_),
      rng_(other.rng_),
      step_(other.step_) {
  rebind_optimizers();
}

Trainer::Trainer(Trainer&& other) noexcept
    : config_(std::move(other.config_)),
      encoder_(std::move(other.encoder_)),
      generator_(std::move(other.generator_)),
      discriminators_(std::move(other.discriminators_)),
      opt_g_(std::move(other.opt_g_)),
      opt_d_(std::move(other.opt_d_)),
      rng_(other.rng_),
      step_(other.step_) {
  rebind_optimizers();
}

Trainer& Trainer::operator=(Trainer other) {
  config_ = std::move(other.config_);
  encoder_ = std::move(other.encoder_);
  generator_ = std::move(other.generator_);
  discriminators_ = std::move(other.discriminators_);
  opt_g_ = std::move(other.opt_g_);
  opt_d_ = std::move(other.opt_d_);
  rng_ = other.rng_;
  step_ = other.step_;
  rebind_optimizers();
  return *this;
}

double Trainer::lambda_ssc_at(long phase2_step) const {
  if (!config_.use_ssc) return 0.0;
  if (config_.anneal_steps == 0) return config_.lambda_ssc;
  const double ramp =
      std::min(1.0, static_cast<double>(phase2_step) /
                        static_cast<double>(config_.anneal_steps));
  return config_.lambda_ssc * ramp;
}

struct Trainer::BatchItem {
  int utt_index = 0;
  int frame_start = 0;
  float alpha = 1.0f;
  Eigen::VectorXf embedding;
  Mat z;
  Mat cond;
  Mat x_real;  // 1 x crop*hop
};

dsp::ConditioningBundle Trainer::make_bundle(const dsp::SpectralEnvelope& envelope,
                                             const dsp::NormalizedQuantizedF0& pnorm,
                                             const Eigen::VectorXf& embedding,
                                             int median_bin) const {
  dsp::MedianF0OneHot m;
  m.bin = median_bin;
  return dsp::build_conditioning(envelope, pnorm, embedding, m, config_.layout());
}

std::vector<Trainer::BatchItem> Trainer::sample_batch(const TrainingData& data) {
  const int crop = config_.crop_frames;
  std::vector<BatchItem> batch;
  for (int b = 0; b < config_.batch; ++b) {
    BatchItem item;
    item.utt_index = static_cast<int>(rng_.uniform_index(data.utterances().size()));
    const TrainingUtterance& utt = data.utterances()[item.utt_index];
    const int frames = static_cast<int>(utt.envelope.cols());
    const int usable = std::min<long>(frames, utt.samples.size() / dsp::kHop);
    const int max_start = usable - crop;
    if (max_start < 0)
      throw DataError("utterance '" + utt.utt_id + "' too short for a " +
                      std::to_string(crop) + "-frame crop");
    item.frame_start = static_cast<int>(rng_.uniform_index(max_start + 1));
    item.alpha = config_.use_warping
                     ? static_cast<float>(rng_.uniform(config_.warp_min, config_.warp_max))
                     : 1.0f;
    item.embedding = config_.use_gaussian_embeddings
                         ? speaker::sample_embedding(data.gaussian(utt.speaker_id), rng_)
                         : utt.embedding;
    item.z = gen::sample_noise(crop, rng_.next_u64(), config_.generator.z_dim).values;

    dsp::SpectralEnvelope env;
    env.values = utt.envelope.middleCols(item.frame_start, crop);
    if (item.alpha != 1.0f) env = dsp::warp_envelope(env, item.alpha);
    dsp::NormalizedQuantizedF0 pnorm;
    pnorm.classes = utt.pnorm_classes.segment(item.frame_start, crop);
    item.cond = make_bundle(env, pnorm, item.embedding, utt.median_bin).values;
    item.x_real = utt.samples.segment(static_cast<Eigen::Index>(item.frame_start) * dsp::kHop,
                                      static_cast<Eigen::Index>(crop) * dsp::kHop)
                      .transpose();
    batch.push_back(std::move(item));
  }
  return batch;
}

LossRecord Trainer::step(const TrainingData& data) {
  const int phase = current_phase();
  const double lr = phase == 1 ? config_.lr_phase1 : config_.lr_phase2;
  opt_g_.set_lr(lr);
  opt_d_.set_lr(lr);
  const float inv_batch = 1.0f / static_cast<float>(config_.batch);

  std::vector<BatchItem> batch = sample_batch(data);

  // Discriminator update on reconstructions from the current generator.
  std::vector<Mat> fakes;
  for (const BatchItem& item : batch) {
    Tape tape;
    fakes.push_back(generator_
                        .forward(tape, tape.constant(item.z), tape.constant(item.cond))
                        .value());
  }
  LossRecord record;
  record.step = step_;
  record.phase = phase;
  {
    opt_d_.zero_grad();
    Tape tape;
    Var total;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto real_scores = discriminators_.forward(tape, tape.constant(batch[b].x_real));
      auto fake_scores = discriminators_.forward(tape, tape.constant(fakes[b]));
      Var l = ad::scale(gan::loss_discriminator(real_scores, fake_scores), inv_batch);
      total = total.valid() ? ad::add(total, l) : l;
    }
    record.loss_d = total.scalar();
    tape.backward(total);
    opt_d_.step();
  }

  // Generator update against the just-updated discriminators.
  {
    opt_g_.zero_grad();
    Tape tape;
    Var total;
    double aux_sum = 0.0;
    for (const BatchItem& item : batch) {
      Var x_hat =
          generator_.forward(tape, tape.constant(item.z), tape.constant(item.cond));
      std::vector<Var> scores;
      {
        ad::FreezeGuard freeze(tape);
        scores = discriminators_.forward(tape, x_hat);
      }
      Var x_real = tape.constant(item.x_real);
      Var aux = gan::loss_aux(x_real, x_hat, config_.mrsd);
      aux_sum += aux.scalar();
      Var l = ad::add(gan::loss_generator_adv(scores),
                      ad::scale(aux, static_cast<float>(config_.lambda_aux)));
      total = total.valid() ? ad::add(total, ad::scale(l, inv_batch))
                            : ad::scale(l, inv_batch);
    }
    record.loss_aux = aux_sum / batch.size();

    record.lambda_ssc = phase == 2 ? lambda_ssc_at(step_ - config_.iters_phase1) : 0.0;
    if (phase == 2 && config_.use_ssc) {
      // Cross-speaker conversions toward the first batch sample's speaker.
      const TrainingUtterance& target = data.utterances()[batch[0].utt_index];
      const auto& pool = data.other_speaker_utts(target.speaker_id);
      if (pool.empty())
        throw DataError("speaker similarity phase needs utterances from at least 2 speakers");
      std::vector<Var> converted;
      const int crop = config_.crop_frames;
      for (int n = 0; n < config_.n_ssc; ++n) {
        const TrainingUtterance& source =
            data.utterances()[pool[rng_.uniform_index(pool.size())]];
        const int frames = static_cast<int>(source.envelope.cols());
        const int usable = std::min<long>(frames, source.samples.size() / dsp::kHop);
        const int max_start = usable - crop;
        if (max_start < 0)
          throw DataError("utterance '" + source.utt_id + "' too short for a crop");
        const int start = static_cast<int>(rng_.uniform_index(max_start + 1));
        dsp::SpectralEnvelope env;
        env.values = source.envelope.middleCols(start, crop);
        dsp::NormalizedQuantizedF0 pnorm;
        pnorm.classes = source.pnorm_classes.segment(start, crop);
        Mat cond =
            make_bundle(env, pnorm, batch[0].embedding, target.median_bin).values;
        Mat z = gen::sample_noise(crop, rng_.next_u64(), config_.generator.z_dim).values;
        Var x_conv = generator_.forward(tape, tape.constant(z), tape.constant(cond));
        ad::FreezeGuard freeze(tape);
        Var mel = dsp::diff_log_mel(x_conv);
        converted.push_back(encoder_.embed(tape, mel));
      }
      Var ssc = gan::loss_ssc(converted, tape.constant(batch[0].embedding),
                              config_.ssc_raw_cosine);
      record.loss_ssc = ssc.scalar();
      if (record.lambda_ssc != 0.0)
        total = ad::add(total, ad::scale(ssc, static_cast<float>(record.lambda_ssc)));
    }
    record.loss_g = total.scalar();
    tape.backward(total);
    opt_g_.step();
  }

  ++step_;
  return record;
}

void Trainer::run(const TrainingData& data, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream log((fs::path(out_dir) / "train_log.jsonl").string(), std::ios::app);
  if (!log) throw DataError("cannot open loss log in '" + out_dir + "'");
  const long total = config_.iters_phase1 + config_.iters_phase2;
  while (step_ < total) {
    LossRecord record = step(data);
    log << record.to_json().dump() << "\n";
    log.flush();
    if (step_ == config_.iters_phase1)
      save_checkpoint((fs::path(out_dir) / "phase1.lvcc").string());
    if (config_.checkpoint_interval > 0 && step_ % config_.checkpoint_interval == 0 &&
        step_ < total)
      save_checkpoint((fs::path(out_dir) / ("step_" + std::to_string(step_) + ".lvcc")).string());
  }
  save_checkpoint((fs::path(out_dir) / "final.lvcc").string());
}

void Trainer::save_checkpoint(const std::string& path) const {
  ArrayFile file;
  nlohmann::json meta;
  meta["kind"] = "checkpoint";
  meta["format_version"] = 1;
  meta["step"] = step_;
  meta["phase"] = current_phase();
  meta["config"] = config_.to_json();
  meta["rng"] = rng_.state();
  meta["encoder"] = {{"mel_bins", encoder_.config().mel_bins},
                     {"channels", encoder_.config().channels},
                     {"embed_dim", encoder_.config().embed_dim}};
  file.set_meta(meta);

  std::vector<ad::NamedParam> params;
  generator_.params("gen", params);
  discriminators_.params("disc", params);
  encoder_.params("encoder", params);
  for (const auto& np : params) file.add(np.name, np.param->value);
  opt_g_.state_to(file, "opt_g.");
  opt_d_.state_to(file, "opt_d.");
  file.save(path);
}

Trainer Trainer::load_checkpoint(const std::string& path) {
  try {
    const ArrayFile file = ArrayFile::load(path);
    if (file.meta().value("kind", "") != "checkpoint")
      throw DataError("'" + path + "' is not a checkpoint");
    if (file.meta().value("format_version", 0) != 1)
      throw DataError("unsupported checkpoint version in '" + path + "'");
    TrainConfig config = TrainConfig::from_json(file.meta().at("config"));

    speaker::EncoderConfig ec;
    ec.mel_bins = file.meta().at("encoder").at("mel_bins").get<int>();
    ec.channels = file.meta().at("encoder").at("channels").get<int>();
    ec.embed_dim = file.meta().at("encoder").at("embed_dim").get<int>();
    Rng dummy(0);
    speaker::SpeakerEncoder encoder(ec, dummy);

    Trainer trainer(config, encoder);
    trainer.step_ = file.meta().at("step").get<long>();
    trainer.rng_.set_state(file.meta().at("rng").get<std::string>());

    std::vector<ad::NamedParam> params;
    trainer.generator_.params("gen", params);
    trainer.discriminators_.params("disc", params);
    trainer.encoder_.params("encoder", params);
    for (const auto& np : params) {
      const Mat& stored = file.get(np.name);
      if (stored.rows() != np.param->value.rows() ||
          stored.cols() != np.param->value.cols())
        throw DataError("checkpoint parameter shape mismatch for " + np.name);
      const_cast<Mat&>(np.param->value) = stored;
    }
    trainer.opt_g_.state_from(file, "opt_g.");
    trainer.opt_d_.state_from(file, "opt_d.");
    return trainer;
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
}

Eigen::VectorXf Trainer::convert(const dsp::SpectralEnvelope& envelope,
                                 const dsp::NormalizedQuantizedF0& pnorm,
                                 const Eigen::VectorXf& target_embedding,
                                 int target_median_bin, std::uint64_t noise_seed) const {
  dsp::ConditioningBundle bundle =
      make_bundle(envelope, pnorm, target_embedding, target_median_bin);
  gen::NoiseSequence z = gen::sample_noise(static_cast<int>(bundle.frames()), noise_seed,
                                           config_.generator.z_dim);
  return generator_.generate(z, bundle);
}

Eigen::VectorXf Trainer::convert_with_taps(const dsp::SpectralEnvelope& envelope,
                                           const dsp::NormalizedQuantizedF0& pnorm,
                                           const Eigen::VectorXf& target_embedding,
                                           int target_median_bin, std::uint64_t noise_seed,
                                           gen::IntermediateTaps& taps) const {
  dsp::ConditioningBundle bundle =
      make_bundle(envelope, pnorm, target_embedding, target_median_bin);
  gen::NoiseSequence z = gen::sample_noise(static_cast<int>(bundle.frames()), noise_seed,
                                           config_.generator.z_dim);
  return generator_.generate_with_taps(z, bundle, taps);
}

}  // namespace lvcvc::train
