#pragma once

#include <map>
#include <string>
#include <vector>

#include "lvcvc/corpus_io.hpp"
#include "lvcvc/dsp_features.hpp"
#include "lvcvc/gan_losses.hpp"
#include "lvcvc/generator.hpp"
#include "lvcvc/optimizer.hpp"
#include "lvcvc/rng.hpp"
#include "lvcvc/speaker_model.hpp"
#include "lvcvc/vendor_json.hpp"

namespace lvcvc::train {

/// Full experiment configuration. The JSON round trip is strict: unknown
/// keys are rejected at every level.
struct TrainConfig {
  double lr_phase1 = 1e-4;
  double lr_phase2 = 5e-5;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double weight_decay = 0.01;
  int batch = 32;
  long iters_phase1 = 20000;
  long iters_phase2 = 1000;
  long anneal_steps = 400;
  double lambda_aux = 2.5;
  double lambda_ssc = 0.9;
  int n_ssc = 8;
  double warp_min = 0.85;
  double warp_max = 1.15;
  std::uint64_t seed = 0;
  int crop_frames = 32;
  long checkpoint_interval = 1000;

  bool use_gaussian_embeddings = true;
  bool use_ssc = true;
  bool use_warping = true;
  bool use_pnorm = true;
  bool use_median_f0 = true;
  bool ssc_raw_cosine = false;

  int embed_dim = 256;
  gen::GeneratorConfig generator;  // cond_channels derived from the layout
  gan::MrsdConfig mrsd;
  gan::MpwdConfig mpwd;

  // Paper-scale schedule: 1.8M reconstruction iterations, then 5000 SSC
  // iterations with a 2000-step anneal at half the learning rate.
  static TrainConfig paper_scale();

  dsp::ConditioningLayout layout() const;
  void validate() const;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static TrainConfig load(const std::string& path);
};

struct LossRecord {
  long step = 0;
  int phase = 1;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double loss_aux = 0.0;
  double loss_ssc = 0.0;
  double lambda_ssc = 0.0;

  nlohmann::json to_json() const;
};

struct TrainingUtterance {
  std::string utt_id;
  std::string speaker_id;
  Eigen::VectorXf samples;
  Eigen::MatrixXf envelope;        // 80 x frames
  Eigen::VectorXi pnorm_classes;   // per frame
  int median_bin = 0;
  Eigen::VectorXf embedding;       // unit norm
};

/// Train-split utterances with cached features, waveforms, embeddings, and
/// the per-speaker Gaussians.
class TrainingData {
 public:
  static TrainingData load(const io::SpeakerRegistry& registry,
                           const std::string& cache_dir,
                           const speaker::SpeakerEncoder& encoder,
                           const speaker::GaussianStore& store);

  const std::vector<TrainingUtterance>& utterances() const { return utts_; }
  const speaker::SpeakerGaussian& gaussian(const std::string& speaker_id) const;
  // Indices of train utterances from speakers other than `speaker_id`.
  const std::vector<int>& other_speaker_utts(const std::string& speaker_id) const;
  int speaker_count() const { return static_cast<int>(by_speaker_.size()); }

 private:
  std::vector<TrainingUtterance> utts_;
  std::map<std::string, std::vector<int>> by_speaker_;
  std::map<std::string, std::vector<int>> others_;
  speaker::GaussianStore store_;
};

/// Two-phase GAN training: reconstruction-only at lr_phase1, then the
/// speaker-similarity criterion joins with a linear anneal at lr_phase2.
/// Each iteration runs one discriminator update then one generator update.
/// Every random draw flows from one serialized RNG, so a checkpoint resumes
/// the exact training trace.
class Trainer {
 public:
  Trainer() = default;
  Trainer(const TrainConfig& config, const speaker::SpeakerEncoder& encoder);

  // The optimizers hold pointers into the model members, so copies and moves
  // must rebind them to the new object's parameters.
  Trainer(const Trainer& other);
  Trainer(Trainer&& other) noexcept;
  Trainer& operator=(Trainer other);

  LossRecord step(const TrainingData& data);
  // Full schedule with JSONL loss logging and periodic checkpoints under
  // out_dir (step_<n>.lvcc, phase1.lvcc, final.lvcc).
  void run(const TrainingData& data, const std::string& out_dir);

  long current_step() const { return step_; }
  int current_phase() const { return step_ < config_.iters_phase1 ? 1 : 2; }
  double lambda_ssc_at(long phase2_step) const;
  int conditioning_channels() const { return config_.layout().channels(); }

  const TrainConfig& config() const { return config_; }
  const gen::Generator& generator() const { return generator_; }
  const speaker::SpeakerEncoder& encoder() const { return encoder_; }
  const gan::DiscriminatorSet& discriminators() const { return discriminators_; }

  void save_checkpoint(const std::string& path) const;
  static Trainer load_checkpoint(const std::string& path);

  // Inference: conditioning from source content and target speaker features,
  // seeded noise. H is never warped here.
  Eigen::VectorXf convert(const dsp::SpectralEnvelope& envelope,
                          const dsp::NormalizedQuantizedF0& pnorm,
                          const Eigen::VectorXf& target_embedding,
                          int target_median_bin, std::uint64_t noise_seed) const;
  Eigen::VectorXf convert_with_taps(const dsp::SpectralEnvelope& envelope,
                                    const dsp::NormalizedQuantizedF0& pnorm,
                                    const Eigen::VectorXf& target_embedding,
                                    int target_median_bin, std::uint64_t noise_seed,
                                    gen::IntermediateTaps& taps) const;
  dsp::ConditioningBundle make_bundle(const dsp::SpectralEnvelope& envelope,
                                      const dsp::NormalizedQuantizedF0& pnorm,
                                      const Eigen::VectorXf& embedding,
                                      int median_bin) const;

 private:
  struct BatchItem;
  std::vector<BatchItem> sample_batch(const TrainingData& data);
  void rebind_optimizers();

  TrainConfig config_;
  speaker::SpeakerEncoder encoder_;
  gen::Generator generator_;
  gan::DiscriminatorSet discriminators_;
  ad::AdamW opt_g_, opt_d_;
  Rng rng_;
  long step_ = 0;
};

}  // namespace lvcvc::train
