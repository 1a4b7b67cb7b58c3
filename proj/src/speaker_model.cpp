#include "lvcvc/speaker_model.hpp"

#include <algorithm>
#include <filesystem>

#include "lvcvc/errors.hpp"
#include "lvcvc/nn_init.hpp"
#include "lvcvc/optimizer.hpp"

namespace lvcvc::speaker {

using ad::Mat;
using ad::Tape;
using ad::Var;

SpeakerEncoder::SpeakerEncoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  const int c = config.channels;
  conv1_w_ = ad::Parameter("conv1.w", ad::fan_in_init(c, config.mel_bins * 5, rng));
  conv1_b_ = ad::Parameter("conv1.b", Mat::Zero(c, 1));
  conv2_w_ = ad::Parameter("conv2.w", ad::fan_in_init(c, c * 3, rng));
  conv2_b_ = ad::Parameter("conv2.b", Mat::Zero(c, 1));
  conv3_w_ = ad::Parameter("conv3.w", ad::fan_in_init(c, c * 3, rng));
  conv3_b_ = ad::Parameter("conv3.b", Mat::Zero(c, 1));
  att_w_ = ad::Parameter("att.w", ad::fan_in_init(c, c, rng));
  att_b_ = ad::Parameter("att.b", Mat::Zero(c, 1));
  att_v_ = ad::Parameter("att.v", ad::fan_in_init(1, c, rng));
  proj_w_ = ad::Parameter("proj.w", ad::fan_in_init(config.embed_dim, c, rng));
  proj_b_ = ad::Parameter("proj.b", Mat::Zero(config.embed_dim, 1));
}

Var SpeakerEncoder::embed(Tape& tape, Var mel) const {
  if (mel.cols() < 1) throw DataError("speaker encoder: empty spectrogram");
  if (mel.rows() != config_.mel_bins)
    throw DataError("speaker encoder: expected " + std::to_string(config_.mel_bins) +
                    " mel bins, got " + std::to_string(mel.rows()));
  Var h = ad::leaky_relu(ad::conv1d(mel, tape.param(conv1_w_), tape.param(conv1_b_), 5));
  h = ad::leaky_relu(ad::conv1d(h, tape.param(conv2_w_), tape.param(conv2_b_), 3));
  h = ad::leaky_relu(ad::conv1d(h, tape.param(conv3_w_), tape.param(conv3_b_), 3));
  // Self-attentive pooling over frames.
  Var keys = ad::tanh_v(
      ad::bias_add(ad::matmul(tape.param(att_w_), h), tape.param(att_b_)));
  Var scores = ad::matmul(tape.param(att_v_), keys);  // 1 x frames
  Var attention = ad::softmax_row(scores);
  Var pooled = ad::matmul(h, ad::transpose_v(attention));  // channels x 1
  Var projected =
      ad::bias_add(ad::matmul(tape.param(proj_w_), pooled), tape.param(proj_b_));
  return ad::l2_normalize(projected);
}

Eigen::VectorXf SpeakerEncoder::embed(const dsp::LogMelSpectrogram& mel) const {
  Tape tape;
  Var e = embed(tape, tape.constant(mel.values));
  return e.value().col(0);
}

void SpeakerEncoder::params(const std::string& prefix,
                            std::vector<ad::NamedParam>& out) const {
  out.push_back({prefix + ".conv1.w", &conv1_w_});
  out.push_back({prefix + ".conv1.b", &conv1_b_});
  out.push_back({prefix + ".conv2.w", &conv2_w_});
  out.push_back({prefix + ".conv2.b", &conv2_b_});
  out.push_back({prefix + ".conv3.w", &conv3_w_});
  out.push_back({prefix + ".conv3.b", &conv3_b_});
  out.push_back({prefix + ".att.w", &att_w_});
  out.push_back({prefix + ".att.b", &att_b_});
  out.push_back({prefix + ".att.v", &att_v_});
  out.push_back({prefix + ".proj.w", &proj_w_});
  out.push_back({prefix + ".proj.b", &proj_b_});
}

void save_encoder(const SpeakerEncoder& encoder, const std::string& path) {
  ArrayFile file;
  nlohmann::json meta;
  meta["kind"] = "speaker_encoder";
  meta["mel_bins"] = encoder.config().mel_bins;
  meta["channels"] = encoder.config().channels;
  meta["embed_dim"] = encoder.config().embed_dim;
  file.set_meta(meta);
  std::vector<ad::NamedParam> params;
  encoder.params("encoder", params);
  for (const auto& np : params) file.add(np.name, np.param->value);
  file.save(path);
}

SpeakerEncoder load_encoder(const std::string& path) {
  const ArrayFile file = ArrayFile::load(path);
  if (file.meta().value("kind", "") != "speaker_encoder")
    throw DataError("'" + path + "' is not a speaker encoder file");
  EncoderConfig config;
  config.mel_bins = file.meta().at("mel_bins").get<int>();
  config.channels = file.meta().at("channels").get<int>();
  config.embed_dim = file.meta().at("embed_dim").get<int>();
  Rng rng(0);
  SpeakerEncoder encoder(config, rng);
  std::vector<ad::NamedParam> params;
  encoder.params("encoder", params);
  for (const auto& np : params) {
    const Mat& stored = file.get(np.name);
    if (stored.rows() != np.param->value.rows() || stored.cols() != np.param->value.cols())
      throw DataError("encoder parameter shape mismatch for " + np.name);
    const_cast<Mat&>(np.param->value) = stored;
  }
  return encoder;
}

namespace {

struct LabeledMel {
  Eigen::MatrixXf mel;
  int label;
};

}  // namespace

PretrainResult pretrain_speaker_encoder(const io::SpeakerRegistry& registry,
                                        const EncoderTrainConfig& config) {
  std::vector<std::string> speakers;
  for (const auto& s : registry.seen_speakers()) speakers.push_back(s);
  if (speakers.size() < 2)
    throw DataError("speaker encoder pretraining needs at least 2 speakers, found " +
                    std::to_string(speakers.size()));
  std::map<std::string, int> label_of;
  for (std::size_t i = 0; i < speakers.size(); ++i)
    label_of[speakers[i]] = static_cast<int>(i);

  std::vector<LabeledMel> train, holdout;
  for (const auto& rec : registry.all()) {
    if (rec.split == io::Split::kUnseen) continue;
    LabeledMel item;
    item.mel = dsp::compute_log_mel(io::read_wav(rec.path)).values;
    item.label = label_of.at(rec.speaker_id);
    (rec.split == io::Split::kTrain ? train : holdout).push_back(std::move(item));
  }
  if (train.empty()) throw DataError("no training utterances for encoder pretraining");

  Rng rng(config.seed);
  SpeakerEncoder encoder(config.encoder, rng);
  ad::Parameter head_w("head.w",
                       ad::fan_in_init(static_cast<int>(speakers.size()),
                                       config.encoder.embed_dim, rng));
  ad::Parameter head_b("head.b", Mat::Zero(static_cast<int>(speakers.size()), 1));

  std::vector<ad::NamedParam> params;
  encoder.params("encoder", params);
  params.push_back({"head.w", &head_w});
  params.push_back({"head.b", &head_b});
  ad::AdamW::Config opt_config;
  opt_config.lr = config.lr;
  opt_config.beta1 = 0.9;
  opt_config.beta2 = 0.999;
  opt_config.weight_decay = 0.0;
  ad::AdamW opt(params, opt_config);

  for (int step = 0; step < config.steps; ++step) {
    opt.zero_grad();
    for (int b = 0; b < config.batch; ++b) {
      const LabeledMel& item = train[rng.uniform_index(train.size())];
      const int frames = static_cast<int>(item.mel.cols());
      const int crop = std::min(config.crop_frames, frames);
      const int start =
          frames > crop ? static_cast<int>(rng.uniform_index(frames - crop + 1)) : 0;
      Tape tape;
      Var mel = tape.constant(item.mel.middleCols(start, crop));
      Var emb = encoder.embed(tape, mel);
      Var logits = ad::bias_add(ad::matmul(tape.param(head_w), emb), tape.param(head_b));
      Var loss = ad::scale(ad::cross_entropy_logits(logits, item.label),
                           1.0f / static_cast<float>(config.batch));
      tape.backward(loss);
    }
    opt.step();
  }

  PretrainResult result;
  result.encoder = encoder;
  result.holdout_clips = static_cast<int>(holdout.size());
  if (!holdout.empty()) {
    int correct = 0;
    for (const auto& item : holdout) {
      Tape tape;
      Var emb = encoder.embed(tape, tape.constant(item.mel));
      Var logits = ad::bias_add(ad::matmul(tape.param(head_w), emb), tape.param(head_b));
      Eigen::Index argmax;
      logits.value().col(0).maxCoeff(&argmax);
      if (static_cast<int>(argmax) == item.label) ++correct;
    }
    result.holdout_accuracy =
        static_cast<double>(correct) / static_cast<double>(holdout.size());
  }
  return result;
}

SpeakerGaussian fit_gaussian(const std::vector<Eigen::VectorXf>& embeddings) {
  if (embeddings.empty()) throw DataError("fit_gaussian: empty embedding list");
  const Eigen::Index d = embeddings.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (const auto& e : embeddings) mean += e.cast<double>();
  mean /= static_cast<double>(embeddings.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
  for (const auto& e : embeddings) {
    const Eigen::VectorXd diff = e.cast<double>() - mean;
    var += diff.cwiseProduct(diff);
  }
  var /= static_cast<double>(embeddings.size());

  SpeakerGaussian g;
  g.mean = mean.cast<float>();
  g.var = var.cast<float>().cwiseMax(kVarianceFloor);
  g.count = static_cast<int>(embeddings.size());
  return g;
}

Eigen::VectorXf sample_embedding(const SpeakerGaussian& gaussian, Rng& rng) {
  Eigen::VectorXf sample(gaussian.mean.size());
  for (Eigen::Index i = 0; i < sample.size(); ++i)
    sample[i] = gaussian.mean[i] +
                std::sqrt(gaussian.var[i]) * static_cast<float>(rng.normal());
  const float norm = sample.norm();
  if (norm > 0.0f) sample /= norm;
  return sample;
}

void GaussianStore::save(const std::string& path) const {
  ArrayFile file;
  nlohmann::json meta;
  meta["kind"] = "gaussian_store";
  std::vector<std::string> speakers;
  for (const auto& [spk, g] : gaussians) speakers.push_back(spk);
  meta["speakers"] = speakers;
  file.set_meta(meta);
  for (const auto& [spk, g] : gaussians) {
    file.add(spk + "/mean", g.mean);
    file.add(spk + "/var", g.var);
    Mat count(1, 1);
    count(0, 0) = static_cast<float>(g.count);
    file.add(spk + "/count", count);
    Mat bin(1, 1);
    bin(0, 0) = static_cast<float>(median_bins.at(spk));
    file.add(spk + "/median_bin", bin);
  }
  file.save(path);
}

GaussianStore GaussianStore::load(const std::string& path) {
  const ArrayFile file = ArrayFile::load(path);
  if (file.meta().value("kind", "") != "gaussian_store")
    throw DataError("'" + path + "' is not a gaussian store");
  GaussianStore store;
  for (const auto& spk : file.meta().at("speakers").get<std::vector<std::string>>()) {
    SpeakerGaussian g;
    g.mean = file.get(spk + "/mean").col(0);
    g.var = file.get(spk + "/var").col(0);
    g.count = static_cast<int>(file.get(spk + "/count")(0, 0));
    store.gaussians[spk] = g;
    store.median_bins[spk] = static_cast<int>(file.get(spk + "/median_bin")(0, 0));
  }
  return store;
}

GaussianStore build_gaussian_store(const io::SpeakerRegistry& registry,
                                   const std::string& cache_dir,
                                   const SpeakerEncoder& encoder) {
  namespace fs = std::filesystem;
  GaussianStore store;
  for (const auto& spk : registry.seen_speakers()) {
    std::vector<Eigen::VectorXf> embeddings;
    std::vector<int> bins;
    for (const auto& rec : registry.utterances(spk)) {
      if (rec.split != io::Split::kTrain) continue;
      const std::string path = (fs::path(cache_dir) / (rec.utt_id + ".lvca")).string();
      const ArrayFile cache = ArrayFile::load(path);
      embeddings.push_back(embedding_from_cache(cache, encoder));
      bins.push_back(static_cast<int>(cache.get("m")(0, 0)));
    }
    if (embeddings.empty()) continue;
    store.gaussians[spk] = fit_gaussian(embeddings);
    std::sort(bins.begin(), bins.end());
    store.median_bins[spk] = bins[bins.size() / 2];
  }
  if (store.gaussians.empty())
    throw DataError("no seen speakers with training utterances");
  return store;
}

Eigen::VectorXf embedding_from_cache(const ArrayFile& cache, const SpeakerEncoder& encoder) {
  if (cache.has("speaker_embedding")) {
    Eigen::VectorXf e = cache.get("speaker_embedding").col(0);
    const float norm = e.norm();
    if (norm == 0.0f) throw DataError("cached speaker_embedding has zero norm");
    return e / norm;
  }
  dsp::LogMelSpectrogram mel;
  mel.values = cache.get("X");
  return encoder.embed(mel);
}

}  // namespace lvcvc::speaker
