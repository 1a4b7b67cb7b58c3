#include "lvcvc/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lvcvc/corpus_io.hpp"
#include "lvcvc/diff_dsp.hpp"
#include "lvcvc/dsp_features.hpp"
#include "lvcvc/errors.hpp"
#include "lvcvc/gan_losses.hpp"
#include "lvcvc/speaker_model.hpp"
#include "lvcvc/trainer.hpp"

namespace fs = std::filesystem;

namespace lvcvc::cli {

namespace {

// Resolution used for probe spectrograms of short per-stack signals.
constexpr dsp::StftResolution kProbeResolution{256, 64, 128};

ad::Mat stft_mag_value(const Eigen::VectorXf& samples, const dsp::StftResolution& res,
                       bool centered) {
  ad::Tape tape;
  ad::Var wave = tape.constant(samples.transpose());
  return dsp::stft_magnitude(wave, *dsp::StftBasis::get(res), centered).value();
}

struct SourceFeatures {
  dsp::SpectralEnvelope envelope;
  dsp::NormalizedQuantizedF0 pnorm;
  dsp::F0Contour f0;
  dsp::LogMelSpectrogram mel;
};

SourceFeatures analyze(const std::string& wav_path) {
  auto clip = io::read_wav(wav_path);
  SourceFeatures f;
  f.mel = dsp::compute_log_mel(clip);
  f.envelope = dsp::lifter_envelope(f.mel);
  f.f0 = dsp::estimate_f0(clip);
  f.pnorm = dsp::pnorm_f0(f.f0);
  return f;
}

void write_clip(const Eigen::VectorXf& samples, const std::string& path) {
  io::AudioClip clip;
  clip.samples = samples;
  io::write_wav(clip, path);
}

// ---- subcommand bodies ----

int cmd_extract(const std::string& manifest, const std::string& out_dir) {
  auto registry = io::load_manifest(manifest);
  fs::create_directories(out_dir);
  int failures = 0;
  for (const auto& rec : registry.all()) {
    try {
      auto feats = dsp::extract_features(io::read_wav(rec.path));
      dsp::save_feature_cache(feats, rec.utt_id,
                              (fs::path(out_dir) / (rec.utt_id + ".lvca")).string());
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "extract: " << rec.utt_id << ": " << e.what() << "\n";
    }
  }
  std::cout << "extracted " << (registry.all().size() - failures) << "/"
            << registry.all().size() << " utterances to " << out_dir << "\n";
  return 0;
}

int cmd_pretrain_encoder(const std::string& manifest, const std::string& out_path,
                         speaker::EncoderTrainConfig config) {
  auto registry = io::load_manifest(manifest);
  auto result = speaker::pretrain_speaker_encoder(registry, config);
  speaker::save_encoder(result.encoder, out_path);
  std::cout << "encoder saved to " << out_path << " (holdout accuracy "
            << result.holdout_accuracy << " on " << result.holdout_clips << " clips)\n";
  return 0;
}

int cmd_fit_gaussians(const std::string& manifest, const std::string& cache_dir,
                      const std::string& encoder_path, const std::string& out_path) {
  auto registry = io::load_manifest(manifest);
  auto encoder = speaker::load_encoder(encoder_path);
  auto store = speaker::build_gaussian_store(registry, cache_dir, encoder);
  store.save(out_path);
  std::cout << "fit " << store.gaussians.size() << " speaker gaussians to " << out_path
            << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest,
              const std::string& cache_dir, const std::string& encoder_path,
              const std::string& gaussians_path, const std::string& out_dir,
              const std::string& resume_path) {
  auto registry = io::load_manifest(manifest);
  train::Trainer trainer;
  if (!resume_path.empty()) {
    trainer = train::Trainer::load_checkpoint(resume_path);
  } else {
    auto config = train::TrainConfig::load(config_path);
    auto encoder = speaker::load_encoder(encoder_path);
    trainer = train::Trainer(config, encoder);
  }
  auto store = speaker::GaussianStore::load(gaussians_path);
  auto data =
      train::TrainingData::load(registry, cache_dir, trainer.encoder(), store);
  trainer.run(data, out_dir);
  std::cout << "training finished at step " << trainer.current_step() << "; final checkpoint "
            << (fs::path(out_dir) / "final.lvcc").string() << "\n";
  return 0;
}

struct TargetFeatures {
  Eigen::VectorXf embedding;
  int median_bin = 0;
};

TargetFeatures resolve_target(const train::Trainer& trainer, const std::string& target_path,
                              const std::string& target_speaker,
                              const std::string& gaussians_path) {
  TargetFeatures t;
  if (!target_path.empty()) {
    auto clip = io::read_wav(target_path);
    auto mel = dsp::compute_log_mel(clip);
    t.embedding = trainer.encoder().embed(mel);
    t.median_bin = dsp::median_f0_onehot(dsp::estimate_f0(clip)).bin;
  } else {
    if (gaussians_path.empty())
      throw UsageError("--target-speaker requires --gaussians");
    auto store = speaker::GaussianStore::load(gaussians_path);
    auto it = store.gaussians.find(target_speaker);
    if (it == store.gaussians.end())
      throw DataError("speaker '" + target_speaker + "' not in gaussian store");
    const float norm = it->second.mean.norm();
    if (norm == 0.0f) throw DataError("gaussian mean for '" + target_speaker + "' is zero");
    t.embedding = it->second.mean / norm;
    t.median_bin = store.median_bins.at(target_speaker);
  }
  return t;
}

int cmd_convert(const std::string& checkpoint, const std::string& source,
                const std::string& target_path, const std::string& target_speaker,
                const std::string& gaussians_path, const std::string& out_path,
                std::uint64_t seed) {
  auto trainer = train::Trainer::load_checkpoint(checkpoint);
  auto src = analyze(source);
  auto target = resolve_target(trainer, target_path, target_speaker, gaussians_path);
  Eigen::VectorXf wave =
      trainer.convert(src.envelope, src.pnorm, target.embedding, target.median_bin, seed);
  write_clip(wave, out_path);
  std::cout << "wrote " << wave.size() << " samples to " << out_path << "\n";
  return 0;
}

int cmd_probe_stacks(const std::string& checkpoint, const std::string& source,
                     const std::string& out_dir, std::uint64_t seed) {
  auto trainer = train::Trainer::load_checkpoint(checkpoint);
  auto src = analyze(source);
  Eigen::VectorXf self_embedding = trainer.encoder().embed(src.mel);
  const int median_bin = dsp::median_f0_onehot(src.f0).bin;

  gen::IntermediateTaps taps;
  Eigen::VectorXf wave = trainer.convert_with_taps(src.envelope, src.pnorm, self_embedding,
                                                   median_bin, seed, taps);
  fs::create_directories(out_dir);
  write_clip(wave, (fs::path(out_dir) / "reconstruction.wav").string());

  ArrayFile file;
  nlohmann::json meta;
  meta["kind"] = "stack_probes";
  meta["frames"] = src.envelope.frames();
  std::vector<long> lengths;
  for (const auto& tap : taps.stacks) lengths.push_back(tap.cols());
  meta["tap_samples"] = lengths;
  meta["stft"] = {kProbeResolution.n_fft, kProbeResolution.hop, kProbeResolution.win_length};
  file.set_meta(meta);
  for (std::size_t s = 0; s < taps.stacks.size(); ++s) {
    const auto& tap = taps.stacks[s];
    file.add("stack" + std::to_string(s) + "/tap", tap);
    for (Eigen::Index c = 0; c < tap.rows(); ++c) {
      Eigen::VectorXf channel = tap.row(c).transpose();
      file.add("stack" + std::to_string(s) + "/ch" + std::to_string(c) + "/stft",
               stft_mag_value(channel, kProbeResolution, true));
    }
  }
  const std::string path = (fs::path(out_dir) / "stack_probes.lvca").string();
  file.save(path);
  std::cout << "wrote " << file.names().size() << " arrays to " << path << "\n";
  return 0;
}

int cmd_zero_ablate(const std::string& checkpoint, const std::string& source,
                    const std::string& out_dir, std::uint64_t seed) {
  auto trainer = train::Trainer::load_checkpoint(checkpoint);
  auto src = analyze(source);
  Eigen::VectorXf self_embedding = trainer.encoder().embed(src.mel);
  const int median_bin = dsp::median_f0_onehot(src.f0).bin;
  const auto layout = trainer.config().layout();

  dsp::ConditioningBundle bundle =
      trainer.make_bundle(src.envelope, src.pnorm, self_embedding, median_bin);
  gen::NoiseSequence z = gen::sample_noise(static_cast<int>(bundle.frames()), seed,
                                           trainer.config().generator.z_dim);
  Eigen::VectorXf speaker_zeroed =
      trainer.generator().generate(z, dsp::zero_speaker_rows(bundle, layout));
  Eigen::VectorXf content_zeroed =
      trainer.generator().generate(z, dsp::zero_content_rows(bundle, layout));

  fs::create_directories(out_dir);
  write_clip(speaker_zeroed, (fs::path(out_dir) / "speaker_zeroed.wav").string());
  write_clip(content_zeroed, (fs::path(out_dir) / "content_zeroed.wav").string());

  auto mel_of = [](const Eigen::VectorXf& samples) {
    io::AudioClip clip;
    clip.samples = samples;
    return dsp::compute_log_mel(clip).values;
  };
  ArrayFile file;
  nlohmann::json meta;
  meta["kind"] = "zero_ablation";
  file.set_meta(meta);
  file.add("original", src.mel.values);
  file.add("speaker_zeroed", mel_of(speaker_zeroed));
  file.add("content_zeroed", mel_of(content_zeroed));
  file.save((fs::path(out_dir) / "spectrograms.lvca").string());
  std::cout << "wrote zero-ablation outputs to " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& pairs_path,
             const std::string& out_path, const std::string& export_dir,
             std::uint64_t seed) {
  auto trainer = train::Trainer::load_checkpoint(checkpoint);
  std::ifstream pairs(pairs_path);
  if (!pairs) throw DataError("cannot open pairs file '" + pairs_path + "'");
  std::ofstream report(out_path);
  if (!report) throw DataError("cannot open report '" + out_path + "' for writing");
  if (!export_dir.empty()) fs::create_directories(export_dir);

  std::string line;
  int lineno = 0, done = 0, failed = 0;
  double cosine_sum = 0.0, dist_sum = 0.0;
  while (std::getline(pairs, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string pair_id = "pair" + std::to_string(lineno);
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      pair_id = j.value("pair_id", pair_id);
      const std::string source = j.at("source").get<std::string>();
      const std::string target = j.at("target").get<std::string>();

      auto src = analyze(source);
      auto tgt_clip = io::read_wav(target);
      auto tgt_mel = dsp::compute_log_mel(tgt_clip);
      Eigen::VectorXf tgt_embedding = trainer.encoder().embed(tgt_mel);
      const int tgt_bin = dsp::median_f0_onehot(dsp::estimate_f0(tgt_clip)).bin;

      Eigen::VectorXf converted =
          trainer.convert(src.envelope, src.pnorm, tgt_embedding, tgt_bin, seed);

      io::AudioClip conv_clip;
      conv_clip.samples = converted;
      Eigen::VectorXf conv_embedding = trainer.encoder().embed(dsp::compute_log_mel(conv_clip));
      const double cosine = static_cast<double>(conv_embedding.dot(tgt_embedding));

      // Multi-resolution STFT distance against the source, on the overlap.
      Eigen::VectorXf src_wave = io::read_wav(source).samples;
      const Eigen::Index overlap = std::min(src_wave.size(), converted.size());
      const double distance = gan::loss_aux_value(
          src_wave.head(overlap), converted.head(overlap), trainer.config().mrsd);

      if (!export_dir.empty())
        write_clip(converted, (fs::path(export_dir) / (pair_id + ".wav")).string());

      nlohmann::json out;
      out["pair"] = pair_id;
      out["cosine"] = cosine;
      out["stft_distance"] = distance;
      report << out.dump() << "\n";
      cosine_sum += cosine;
      dist_sum += distance;
      ++done;
    } catch (const std::exception& e) {
      ++failed;
      std::cerr << "eval: " << pair_id << ": " << e.what() << "\n";
    }
  }
  if (done > 0) {
    nlohmann::json summary;
    summary["pair"] = "__mean__";
    summary["cosine"] = cosine_sum / done;
    summary["stft_distance"] = dist_sum / done;
    report << summary.dump() << "\n";
  }
  std::cout << "evaluated " << done << " pairs (" << failed << " failed), report "
            << out_path << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"LVC-VC: end-to-end zero-shot voice conversion"};
  app.require_subcommand(1);

  std::string manifest, out, cache_dir, encoder_path, gaussians, config_path;
  std::string checkpoint, source, target, target_speaker, resume, pairs, export_dir;
  std::uint64_t seed = kDefaultNoiseSeed;

  auto* extract = app.add_subcommand("extract", "Compute feature caches for a manifest");
  extract->add_option("--manifest", manifest, "JSONL manifest")->required();
  extract->add_option("--out", out, "Cache directory")->required();

  auto* pretrain = app.add_subcommand("pretrain-encoder", "Train the toy speaker encoder");
  speaker::EncoderTrainConfig enc_config;
  pretrain->add_option("--manifest", manifest)->required();
  pretrain->add_option("--out", out, "Encoder file")->required();
  pretrain->add_option("--steps", enc_config.steps);
  pretrain->add_option("--batch", enc_config.batch);
  pretrain->add_option("--crop-frames", enc_config.crop_frames);
  pretrain->add_option("--lr", enc_config.lr);
  pretrain->add_option("--seed", enc_config.seed);
  pretrain->add_option("--channels", enc_config.encoder.channels);
  pretrain->add_option("--embed-dim", enc_config.encoder.embed_dim);

  auto* fit = app.add_subcommand("fit-gaussians", "Fit per-speaker embedding Gaussians");
  fit->add_option("--manifest", manifest)->required();
  fit->add_option("--cache", cache_dir, "Feature cache directory")->required();
  fit->add_option("--encoder", encoder_path, "Encoder file")->required();
  fit->add_option("--out", out, "Gaussian store file")->required();

  auto* train_cmd = app.add_subcommand("train", "Run two-phase GAN training");
  train_cmd->add_option("--config", config_path, "TrainConfig JSON");
  train_cmd->add_option("--manifest", manifest)->required();
  train_cmd->add_option("--cache", cache_dir)->required();
  train_cmd->add_option("--encoder", encoder_path);
  train_cmd->add_option("--gaussians", gaussians)->required();
  train_cmd->add_option("--out", out, "Run directory")->required();
  train_cmd->add_option("--resume", resume, "Checkpoint to resume from");

  auto* convert = app.add_subcommand("convert", "Convert a source utterance to a target voice");
  convert->add_option("--checkpoint", checkpoint)->required();
  convert->add_option("--source", source)->required();
  convert->add_option("--target", target, "Target utterance wav");
  convert->add_option("--target-speaker", target_speaker, "Registered speaker id");
  convert->add_option("--gaussians", gaussians, "Gaussian store (for --target-speaker)");
  convert->add_option("--out", out)->required();
  convert->add_option("--seed", seed, "Noise seed");

  auto* probe = app.add_subcommand("probe-stacks", "Per-stack per-channel STFT probes");
  probe->add_option("--checkpoint", checkpoint)->required();
  probe->add_option("--source", source)->required();
  probe->add_option("--out", out)->required();
  probe->add_option("--seed", seed);

  auto* ablate = app.add_subcommand("zero-ablate", "Generate with speaker/content features zeroed");
  ablate->add_option("--checkpoint", checkpoint)->required();
  ablate->add_option("--source", source)->required();
  ablate->add_option("--out", out)->required();
  ablate->add_option("--seed", seed);

  auto* eval_cmd = app.add_subcommand("eval", "Objective conversion metrics over pairs");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--pairs", pairs, "JSONL pair list")->required();
  eval_cmd->add_option("--out", out, "Report path")->required();
  eval_cmd->add_option("--export", export_dir, "Directory for converted wavs");
  eval_cmd->add_option("--seed", seed);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (extract->parsed()) return cmd_extract(manifest, out);
    if (pretrain->parsed()) return cmd_pretrain_encoder(manifest, out, enc_config);
    if (fit->parsed()) return cmd_fit_gaussians(manifest, cache_dir, encoder_path, out);
    if (train_cmd->parsed()) {
      if (resume.empty() && (config_path.empty() || encoder_path.empty()))
        throw UsageError("train needs --config and --encoder (or --resume)");
      return cmd_train(config_path, manifest, cache_dir, encoder_path, gaussians, out,
                       resume);
    }
    if (convert->parsed()) {
      if (target.empty() == target_speaker.empty())
        throw UsageError("convert needs exactly one of --target or --target-speaker");
      return cmd_convert(checkpoint, source, target, target_speaker, gaussians, out, seed);
    }
    if (probe->parsed()) return cmd_probe_stacks(checkpoint, source, out, seed);
    if (ablate->parsed()) return cmd_zero_ablate(checkpoint, source, out, seed);
    if (eval_cmd->parsed()) return cmd_eval(checkpoint, pairs, out, export_dir, seed);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace lvcvc::cli
