// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Training-based criteria use a seeded toy corpus (two synthetic
// speakers, four 2-second clips each) with thresholds frozen from the first
// seeded run of this budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "lvcvc/cli.hpp"
#include "lvcvc/corpus_io.hpp"
#include "lvcvc/dsp_features.hpp"
#include "lvcvc/gan_losses.hpp"
#include "lvcvc/generator.hpp"
#include "lvcvc/lvc_core.hpp"
#include "lvcvc/nn_init.hpp"
#include "lvcvc/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/toy_pipeline.hpp"

using namespace lvcvc;
using ad::Mat;
using ad::Tape;
using ad::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
};

#define REQUIRE_THAT(cond, msg)                                   \
  do {                                                            \
    if (!(cond)) {                                                \
      out.pass = false;                                           \
      out.detail << (out.detail.str().empty() ? "" : "; ") << msg; \
    }                                                             \
  } while (0)

std::string root_dir() {
  return (fs::temp_directory_path() / "lvcvc_acceptance").string();
}

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

// Shared toy artifacts built by criterion 7 and reused by 8, 10, and 11.
struct ToyRun {
  testsupport::ToyPipeline pipeline;
  train::TrainingData data;
  train::Trainer trainer;
  std::string phase1_ckpt;
  std::string final_ckpt;
  double loss_aux_step0 = 0.0;
  double loss_aux_phase1_end = 0.0;
};

train::TrainConfig toy_config() {
  train::TrainConfig c;  // channels 16, embed 256, default discriminators
  c.batch = 3;
  c.crop_frames = 16;
  c.seed = 7;
  c.generator.kp_hidden = 32;
  c.iters_phase1 = 400;
  c.iters_phase2 = 60;
  c.anneal_steps = 12;
  c.checkpoint_interval = 0;
  return c;
}

ToyRun* g_toy = nullptr;

double mean_recon_cosine(const train::Trainer& trainer, const train::TrainingData& data) {
  double total = 0.0;
  for (const auto& utt : data.utterances()) {
    dsp::SpectralEnvelope env;
    env.values = utt.envelope;
    dsp::NormalizedQuantizedF0 pnorm;
    pnorm.classes = utt.pnorm_classes;
    Eigen::VectorXf wave =
        trainer.convert(env, pnorm, utt.embedding, utt.median_bin, 42);
    io::AudioClip clip;
    clip.samples = wave;
    Eigen::VectorXf e = trainer.encoder().embed(dsp::compute_log_mel(clip));
    total += e.dot(utt.embedding);
  }
  return total / static_cast<double>(data.utterances().size());
}

// Fixed 8-pair list: every toy utterance converted toward the other speaker's
// Gaussian mean.
double mean_conversion_cosine(const train::Trainer& trainer,
                              const train::TrainingData& data,
                              const speaker::GaussianStore& store) {
  double total = 0.0;
  for (const auto& utt : data.utterances()) {
    const std::string target = utt.speaker_id == "spk_a" ? "spk_b" : "spk_a";
    Eigen::VectorXf tgt = store.gaussians.at(target).mean.normalized();
    dsp::SpectralEnvelope env;
    env.values = utt.envelope;
    dsp::NormalizedQuantizedF0 pnorm;
    pnorm.classes = utt.pnorm_classes;
    Eigen::VectorXf wave =
        trainer.convert(env, pnorm, tgt, store.median_bins.at(target), 42);
    io::AudioClip clip;
    clip.samples = wave;
    Eigen::VectorXf e = trainer.encoder().embed(dsp::compute_log_mel(clip));
    total += e.dot(tgt);
  }
  return total / static_cast<double>(data.utterances().size());
}

// ---- criteria ----

Outcome criterion1_lvc_oracle() {
  Outcome out;
  Rng rng(1);
  const int frame_counts[] = {1, 2, 4, 8};
  const int kernel_sizes[] = {1, 3, 5};
  const int dilations[] = {1, 3, 9, 27};
  float worst = 0.0f;
  int cases = 0;
  while (cases < 200) {
    const int t_h = frame_counts[rng.uniform_index(4)];
    const int k = kernel_sizes[rng.uniform_index(3)];
    const int dilation = dilations[rng.uniform_index(4)];
    const int interval = 1 + static_cast<int>(rng.uniform_index(512 / t_h));
    const int total = t_h * interval;
    if (total < 4 || total > 512) continue;
    const int c_in = 1 + static_cast<int>(rng.uniform_index(4));
    const int c_out = 1 + static_cast<int>(rng.uniform_index(4));
    Mat x = ad::normal_init(c_in, total, 1.0f, rng);
    Mat kernels = ad::normal_init(c_out * c_in * k, t_h, 0.5f, rng);
    Mat bias = ad::normal_init(c_out, t_h, 0.3f, rng);
    Mat fast = lvc::lvc_apply(x, kernels, bias, k, dilation);
    Mat oracle = lvc::lvc_apply_oracle(x, kernels, bias, k, dilation);
    const float scale = std::max(1.0f, oracle.cwiseAbs().maxCoeff());
    worst = std::max(worst, (fast - oracle).cwiseAbs().maxCoeff() / scale);
    ++cases;
  }
  REQUIRE_THAT(worst <= 1e-5f, "relative Linf " << worst << " > 1e-5");
  out.detail << "200 cases, max rel Linf " << worst;
  return out;
}

Outcome criterion2_output_length() {
  Outcome out;
  Rng rng(2);
  gen::GeneratorConfig config;  // channels 16, rates 8*8*4 = 256
  config.kp_hidden = 16;
  config.kp_residual_blocks = 1;
  config.cond_channels = dsp::ConditioningLayout{}.channels();
  gen::Generator g(config, rng);
  for (int frames = 1; frames <= 100; ++frames) {
    auto z = gen::sample_noise(frames, 1000 + frames);
    dsp::ConditioningBundle cond;
    cond.values = ad::normal_init(config.cond_channels, frames, 1.0f, rng);
    Eigen::VectorXf wave = g.generate(z, cond);
    if (wave.size() != 256 * frames) {
      REQUIRE_THAT(false, "frames " << frames << " gave " << wave.size() << " samples");
      return out;
    }
  }
  out.detail << "len(generate) == 256 x frames for frames 1..100";
  return out;
}

Outcome criterion3_liftering() {
  Outcome out;
  Rng rng(3);
  float worst_idem = 0.0f, worst_lin = 0.0f, worst_const = 0.0f;
  for (int trial = 0; trial < 100; ++trial) {
    dsp::LogMelSpectrogram x, y;
    x.values = ad::normal_init(80, 6, 4.0f, rng);
    y.values = ad::normal_init(80, 6, 4.0f, rng);
    auto once = dsp::lifter_envelope(x);
    auto twice = dsp::lifter_envelope(once);
    const float scale = std::max(1.0f, once.values.cwiseAbs().maxCoeff());
    worst_idem = std::max(worst_idem,
                          (once.values - twice.values).cwiseAbs().maxCoeff() / scale);

    const float a = 1.3f, b = -0.8f;
    dsp::LogMelSpectrogram combo;
    combo.values = a * x.values + b * y.values;
    Eigen::MatrixXf lhs = dsp::lifter_envelope(combo).values;
    Eigen::MatrixXf rhs =
        a * dsp::lifter_envelope(x).values + b * dsp::lifter_envelope(y).values;
    const float lscale = std::max(1.0f, lhs.cwiseAbs().maxCoeff());
    worst_lin = std::max(worst_lin, (lhs - rhs).cwiseAbs().maxCoeff() / lscale);
  }
  dsp::SpectralEnvelope constant;
  constant.values = Eigen::MatrixXf::Constant(80, 3, 2.5f);
  worst_const =
      (dsp::lifter_envelope(constant).values - constant.values).cwiseAbs().maxCoeff() /
      2.5f;
  REQUIRE_THAT(worst_idem <= 1e-6f, "idempotence " << worst_idem << " > 1e-6");
  REQUIRE_THAT(worst_lin <= 1e-6f, "linearity " << worst_lin << " > 1e-6");
  REQUIRE_THAT(worst_const <= 1e-6f, "constant fixpoint " << worst_const << " > 1e-6");
  out.detail << "idempotence " << worst_idem << ", linearity " << worst_lin
             << ", constant fixpoint " << worst_const;
  return out;
}

Outcome criterion4_warp() {
  Outcome out;
  Rng rng(4);
  dsp::SpectralEnvelope env;
  env.values = ad::normal_init(80, 8, 3.0f, rng);
  auto same = dsp::warp_envelope(env, 1.0f);
  REQUIRE_THAT((same.values - env.values).cwiseAbs().maxCoeff() == 0.0f,
               "alpha=1 warp is not exact identity");

  dsp::SpectralEnvelope impulse;
  impulse.values = Eigen::MatrixXf::Zero(80, 1);
  impulse.values(20, 0) = 1.0f;
  auto warped = dsp::warp_envelope(impulse, 1.15f);
  Eigen::Index peak;
  warped.values.col(0).maxCoeff(&peak);
  REQUIRE_THAT(peak == 23, "impulse at 20 peaked at " << peak << ", expected 23");
  out.detail << "identity exact; impulse 20 -> " << peak << " under alpha 1.15";
  return out;
}

Outcome criterion5_loss_closed_forms() {
  Outcome out;
  Rng rng(5);
  Mat s(6, 5);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 6; ++i) s(i, j) = 0.1f + static_cast<float>(rng.uniform(0.0, 2.0));
  Tape tape;
  Var ref = tape.constant(s);
  const float sc = gan::loss_sc(ref, tape.constant(Mat(2.0f * s))).scalar();
  const float mag =
      gan::loss_mag(ref, tape.constant(Mat(static_cast<float>(M_E) * s))).scalar();
  std::vector<Var> ones(8, tape.constant(Mat::Ones(2, 3)));
  std::vector<Var> zeros(8, tape.constant(Mat::Zero(2, 3)));
  const float disc = gan::loss_discriminator(ones, zeros).scalar();
  Eigen::VectorXf target = Eigen::VectorXf::Random(32).normalized();
  std::vector<Var> match(4, tape.constant(target));
  const float ssc = gan::loss_ssc(match, tape.constant(target)).scalar();

  REQUIRE_THAT(std::abs(sc - 1.0f) <= 1e-6f, "loss_sc(s,2s) = " << sc);
  REQUIRE_THAT(std::abs(mag - 1.0f) <= 1e-6f, "loss_mag(s,e*s) = " << mag);
  REQUIRE_THAT(std::abs(disc) <= 1e-6f, "loss_discriminator(1,0) = " << disc);
  REQUIRE_THAT(std::abs(ssc) <= 1e-6f, "loss_ssc(match) = " << ssc);
  out.detail << "sc=" << sc << ", mag=" << mag << ", disc=" << disc << ", ssc=" << ssc;
  return out;
}

Outcome criterion6_gradients() {
  Outcome out;
  Rng rng(6);
  // Float32 central differences carry ~5e-5 of evaluation noise, so
  // coordinates with tiny gradients are held to absolute agreement via the
  // 1e-2 floor inside the relative-error denominator.
  const float kFloor = 1e-2f;

  // loss_aux w.r.t. the generated waveform, default resolutions.
  Eigen::VectorXf x(1536);
  for (int i = 0; i < 1536; ++i) x[i] = 0.4f * static_cast<float>(rng.normal());
  Mat x_hat = ad::normal_init(1, 1536, 0.4f, rng);
  gan::MrsdConfig mrsd;
  auto rep = testsupport::check_gradients(
      {x_hat},
      [&](Tape& t, const std::vector<Var>& in) {
        return gan::loss_aux(t.constant(x.transpose()), in[0], mrsd);
      },
      60, rng, 1e-3f, kFloor);
  REQUIRE_THAT(rep.max_rel_err <= 1e-2f, "loss_aux grad err " << rep.max_rel_err);
  out.detail << "loss_aux " << rep.max_rel_err;

  // loss_ssc w.r.t. the converted embeddings.
  Eigen::VectorXf target = Eigen::VectorXf::Random(16).normalized();
  std::vector<Mat> embs;
  for (int n = 0; n < 8; ++n) embs.push_back(ad::normal_init(16, 1, 1.0f, rng));
  rep = testsupport::check_gradients(
      embs,
      [&](Tape& t, const std::vector<Var>& in) {
        return gan::loss_ssc(in, t.constant(target));
      },
      8, rng);  // 8 coords x 8 embeddings = 64 samples
  REQUIRE_THAT(rep.max_rel_err <= 1e-2f, "loss_ssc grad err " << rep.max_rel_err);
  out.detail << ", loss_ssc " << rep.max_rel_err;

  // loss_generator w.r.t. score maps, waveform, and the ssc term.
  Mat score0 = ad::normal_init(2, 5, 1.0f, rng);
  Mat score1 = ad::normal_init(2, 5, 1.0f, rng);
  Mat ssc_in = ad::normal_init(1, 1, 0.3f, rng);
  rep = testsupport::check_gradients(
      {score0, score1, x_hat, ssc_in},
      [&](Tape& t, const std::vector<Var>& in) {
        return gan::loss_generator({in[0], in[1]}, t.constant(x.transpose()), in[2],
                                   in[3], 2.5f, 0.9f, mrsd);
      },
      20, rng, 2e-3f, kFloor);
  REQUIRE_THAT(rep.max_rel_err <= 1e-2f, "loss_generator grad err " << rep.max_rel_err);
  out.detail << ", loss_generator " << rep.max_rel_err;

  // lvc_apply w.r.t. input, kernels, and biases.
  Mat lx = ad::normal_init(2, 8, 1.0f, rng);
  Mat lk = ad::normal_init(2 * 2 * 3, 2, 0.5f, rng);
  Mat lb = ad::normal_init(2, 2, 0.3f, rng);
  rep = testsupport::check_gradients(
      {lx, lk, lb},
      [](Tape&, const std::vector<Var>& in) {
        return ad::mean(ad::square_v(ad::lvc_apply(in[0], in[1], in[2], 3, 1)));
      },
      20, rng);
  REQUIRE_THAT(rep.max_rel_err <= 1e-2f, "lvc_apply grad err " << rep.max_rel_err);
  out.detail << ", lvc_apply " << rep.max_rel_err;
  return out;
}

Outcome criterion7_toy_overfit() {
  Outcome out;
  testsupport::ToyPipelineOptions opts;
  opts.utts_per_speaker = 4;
  opts.seconds = 2.0f;
  opts.seed = 1;
  opts.encoder_steps = 250;
  opts.encoder_channels = 32;
  opts.embed_dim = 256;

  static ToyRun toy{testsupport::build_toy_pipeline(root_dir() + "/toy", opts),
                    train::TrainingData{}, train::Trainer{}, "", ""};
  g_toy = &toy;
  toy.data = train::TrainingData::load(toy.pipeline.registry, toy.pipeline.cache_dir,
                                       toy.pipeline.encoder, toy.pipeline.store);
  train::TrainConfig config = toy_config();
  toy.trainer = train::Trainer(config, toy.pipeline.encoder);

  while (toy.trainer.current_step() < config.iters_phase1) {
    train::LossRecord rec = toy.trainer.step(toy.data);
    if (rec.step == 0) toy.loss_aux_step0 = rec.loss_aux;
    toy.loss_aux_phase1_end = rec.loss_aux;
  }
  toy.phase1_ckpt = root_dir() + "/toy/phase1.lvcc";
  toy.trainer.save_checkpoint(toy.phase1_ckpt);

  const double drop = 1.0 - toy.loss_aux_phase1_end / toy.loss_aux_step0;
  const double cosine = mean_recon_cosine(toy.trainer, toy.data);
  REQUIRE_THAT(drop >= 0.5, "L_aux fell only " << drop * 100.0 << "%");
  REQUIRE_THAT(cosine >= 0.8, "reconstruction self-similarity " << cosine << " < 0.8");
  out.detail << "L_aux " << toy.loss_aux_step0 << " -> " << toy.loss_aux_phase1_end
             << " (" << drop * 100.0 << "% drop), recon cosine " << cosine;
  return out;
}

Outcome criterion8_ssc_direction() {
  Outcome out;
  if (g_toy == nullptr) {
    REQUIRE_THAT(false, "toy run unavailable (criterion 7 failed to build)");
    return out;
  }
  ToyRun& toy = *g_toy;
  train::Trainer phase1 = train::Trainer::load_checkpoint(toy.phase1_ckpt);
  const double before = mean_conversion_cosine(phase1, toy.data, toy.pipeline.store);

  const train::TrainConfig& config = toy.trainer.config();
  while (toy.trainer.current_step() < config.iters_phase1 + config.iters_phase2)
    toy.trainer.step(toy.data);
  toy.final_ckpt = root_dir() + "/toy/final.lvcc";
  toy.trainer.save_checkpoint(toy.final_ckpt);

  const double after = mean_conversion_cosine(toy.trainer, toy.data, toy.pipeline.store);
  REQUIRE_THAT(after > before, "mean conversion cosine " << before << " -> " << after
                                                         << " did not increase");
  out.detail << "mean cosine to target " << before << " -> " << after
             << " over the fixed 8-pair list";
  return out;
}

Outcome criterion9_ablation_matrix() {
  Outcome out;
  if (g_toy == nullptr) {
    REQUIRE_THAT(false, "toy run unavailable");
    return out;
  }
  struct Setting {
    const char* name;
    void (*apply)(train::TrainConfig&);
    int expected_channels;
  };
  const Setting settings[] = {
      {"w/o Gaussian embeddings",
       [](train::TrainConfig& c) { c.use_gaussian_embeddings = false; }, 657},
      {"w/o SSC loss", [](train::TrainConfig& c) { c.use_ssc = false; }, 657},
      {"w/o warping", [](train::TrainConfig& c) { c.use_warping = false; }, 657},
      {"w/o p_norm", [](train::TrainConfig& c) { c.use_pnorm = false; }, 657 - 257},
      {"w/o median F0", [](train::TrainConfig& c) { c.use_median_f0 = false; }, 657 - 64},
  };
  for (const auto& setting : settings) {
    train::TrainConfig config = toy_config();
    config.batch = 2;
    config.iters_phase1 = 40;
    config.iters_phase2 = 10;
    config.anneal_steps = 5;
    setting.apply(config);
    try {
      train::Trainer trainer(config, g_toy->pipeline.encoder);
      if (trainer.conditioning_channels() != setting.expected_channels) {
        REQUIRE_THAT(false, setting.name << " has " << trainer.conditioning_channels()
                                         << " cond channels, expected "
                                         << setting.expected_channels);
        continue;
      }
      for (int i = 0; i < 50; ++i) trainer.step(g_toy->data);
      const std::string path = root_dir() + "/ablate_ckpt.lvcc";
      trainer.save_checkpoint(path);
      train::Trainer::load_checkpoint(path);
    } catch (const std::exception& e) {
      REQUIRE_THAT(false, setting.name << " failed: " << e.what());
    }
  }
  out.detail << "5 settings x 50 steps + checkpoint; cond channels 657/400/593 as built";
  return out;
}

Outcome criterion10_determinism() {
  Outcome out;
  if (g_toy == nullptr) {
    REQUIRE_THAT(false, "toy run unavailable");
    return out;
  }
  train::TrainConfig config = toy_config();
  config.batch = 2;
  config.seed = 11;
  config.iters_phase1 = 100;
  config.iters_phase2 = 0;
  config.anneal_steps = 0;
  const std::string dir_a = root_dir() + "/det_a";
  const std::string dir_b = root_dir() + "/det_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  {
    train::Trainer t(config, g_toy->pipeline.encoder);
    t.run(g_toy->data, dir_a);
  }
  {
    train::Trainer t(config, g_toy->pipeline.encoder);
    t.run(g_toy->data, dir_b);
  }
  const std::string log_a = read_bytes(dir_a + "/train_log.jsonl");
  REQUIRE_THAT(!log_a.empty(), "first run produced no loss log");
  REQUIRE_THAT(log_a == read_bytes(dir_b + "/train_log.jsonl"),
               "loss logs differ between identically seeded runs");
  REQUIRE_THAT(read_bytes(dir_a + "/final.lvcc") == read_bytes(dir_b + "/final.lvcc"),
               "final checkpoints differ between identically seeded runs");

  const std::string src = g_toy->pipeline.registry.utterances("spk_a")[0].path;
  const std::string tgt = g_toy->pipeline.registry.utterances("spk_b")[0].path;
  const std::string conv_a = root_dir() + "/det_conv_a.wav";
  const std::string conv_b = root_dir() + "/det_conv_b.wav";
  const std::string ckpt = dir_a + "/final.lvcc";
  int rc1 = cli::run_cli({"convert", "--checkpoint", ckpt, "--source", src, "--target",
                          tgt, "--out", conv_a, "--seed", "21"});
  int rc2 = cli::run_cli({"convert", "--checkpoint", ckpt, "--source", src, "--target",
                          tgt, "--out", conv_b, "--seed", "21"});
  REQUIRE_THAT(rc1 == 0 && rc2 == 0, "convert exited " << rc1 << "/" << rc2);
  REQUIRE_THAT(read_bytes(conv_a) == read_bytes(conv_b),
               "seeded conversions are not bit-identical");
  out.detail << "100-step loss logs and seeded conversions bit-identical";
  return out;
}

Outcome criterion11_probe_totality() {
  Outcome out;
  if (g_toy == nullptr || g_toy->final_ckpt.empty()) {
    REQUIRE_THAT(false, "toy final checkpoint unavailable");
    return out;
  }
  const std::string src = g_toy->pipeline.registry.utterances("spk_a")[0].path;
  const std::string probe_dir = root_dir() + "/probes";
  int rc = cli::run_cli({"probe-stacks", "--checkpoint", g_toy->final_ckpt, "--source",
                         src, "--out", probe_dir});
  REQUIRE_THAT(rc == 0, "probe-stacks exited " << rc);
  if (rc == 0) {
    ArrayFile probes = ArrayFile::load(probe_dir + "/stack_probes.lvca");
    const long frames = probes.meta().at("frames").get<long>();
    int stft_count = 0;
    for (const auto& name : probes.names())
      if (name.find("/stft") != std::string::npos) ++stft_count;
    REQUIRE_THAT(stft_count == 48, "expected 48 STFT matrices, got " << stft_count);
    REQUIRE_THAT(probes.get("stack0/tap").cols() == frames * 8, "stack0 length law");
    REQUIRE_THAT(probes.get("stack1/tap").cols() == frames * 64, "stack1 length law");
    REQUIRE_THAT(probes.get("stack2/tap").cols() == frames * 256, "stack2 length law");
  }

  const std::string ablate_dir = root_dir() + "/ablate";
  rc = cli::run_cli({"zero-ablate", "--checkpoint", g_toy->final_ckpt, "--source", src,
                     "--out", ablate_dir});
  REQUIRE_THAT(rc == 0, "zero-ablate exited " << rc);
  if (rc == 0) {
    auto spk = io::read_wav(ablate_dir + "/speaker_zeroed.wav");
    auto con = io::read_wav(ablate_dir + "/content_zeroed.wav");
    REQUIRE_THAT(spk.samples.allFinite() && con.samples.allFinite(),
                 "zero-ablated audio is not finite");
    REQUIRE_THAT(spk.samples.size() == con.samples.size() && spk.samples.size() > 0,
                 "zero-ablated lengths disagree");
    ArrayFile spectra = ArrayFile::load(ablate_dir + "/spectrograms.lvca");
    REQUIRE_THAT(spectra.has("original") && spectra.has("speaker_zeroed") &&
                     spectra.has("content_zeroed"),
                 "spectrogram triple missing");
  }
  out.detail << "48 probe matrices with x8/x64/x256 lengths; both ablations finite";
  return out;
}

}  // namespace

int main() {
  fs::remove_all(root_dir());
  fs::create_directories(root_dir());

  struct Entry {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Entry> criteria = {
      {1, "LVC oracle equivalence", criterion1_lvc_oracle},
      {2, "output-length law", criterion2_output_length},
      {3, "liftering projection", criterion3_liftering},
      {4, "warp identity and locality", criterion4_warp},
      {5, "loss closed forms", criterion5_loss_closed_forms},
      {6, "gradient checks", criterion6_gradients},
      {7, "toy overfit regression", criterion7_toy_overfit},
      {8, "SSC direction check", criterion8_ssc_direction},
      {9, "ablation matrix", criterion9_ablation_matrix},
      {10, "determinism", criterion10_determinism},
      {11, "probe totality", criterion11_probe_totality},
  };

  int failures = 0;
  for (const auto& entry : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = entry.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << "exception: " << e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %d: %s (%s; %.1fs)\n", out.pass ? "PASS" : "FAIL",
                entry.id, entry.name, out.detail.str().c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  if (failures > 0) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
