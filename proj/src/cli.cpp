#include "blindsnf/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "blindsnf/gradsuite.hpp"
#include "blindsnf/io.hpp"
#include "blindsnf/sampler.hpp"
#include "blindsnf/trainer.hpp"

namespace blindsnf {

namespace fs = std::filesystem;

namespace {

std::string flag_name(const std::string& key) {
  std::string flag = key;
  for (char& c : flag)
    if (c == '_') c = '-';
  return "--" + flag;
}

struct SpecFlags {
  std::string kind;
  double sigma = 0.0, lambda1 = 0.0, lambda2 = 0.0, theta = 0.0, noise = 0.0;
};

std::optional<DegradationSpec> resolve_spec(const SpecFlags& flags, const CLI::App& sub, int scale) {
  if (flags.kind.empty()) {
    for (const char* name : {"--sigma", "--lambda1", "--lambda2", "--theta", "--noise"}) {
      if (sub.get_option(name)->count() > 0) throw UsageError(std::string(name) + " requires --kind");
    }
    return std::nullopt;
  }
  DegradationSpec spec;
  if (flags.kind == "iso" || flags.kind == "isotropic") {
    spec.kind = KernelKind::isotropic;
    spec.sigma = flags.sigma;
  } else if (flags.kind == "aniso" || flags.kind == "anisotropic") {
    spec.kind = KernelKind::anisotropic;
    spec.lambda1 = flags.lambda1;
    spec.lambda2 = flags.lambda2;
    spec.theta = flags.theta;
  } else {
    throw UsageError("--kind must be iso or aniso");
  }
  spec.noise_level = flags.noise;
  spec.scale = scale;
  return spec;
}

std::vector<fs::path> gather_inputs(const fs::path& path) {
  if (fs::is_directory(path)) return list_pngs(path);
  if (path.extension() == ".png" || path.extension() == ".PNG") {
    if (!fs::exists(path)) throw ParameterError("no such image " + path.string());
    return {path};
  }
  return read_manifest(path);
}

fs::path sidecar_path(const fs::path& image) {
  fs::path p = image;
  p.replace_extension(".spec.txt");
  return p;
}

std::string format_double(double value) {
  std::ostringstream os;
  os << std::setprecision(10) << value;
  return os.str();
}

int run_degrade(const Command& cmd, std::ostream& log) {
  const TrainConfig& config = cmd.config;
  const SpecMode mode = parse_spec_mode(config.degradation_mode);
  const Downsampler down = parse_downsampler(config.downsampler);
  const auto inputs = gather_inputs(cmd.input);
  if (inputs.empty()) throw ParameterError("no input images in " + cmd.input);
  const fs::path out_dir(cmd.output);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Image hr = load_png(inputs[i]);
    const std::uint64_t seed = config.seed + i;
    Rng rng(seed);
    const DegradationSpec spec = cmd.spec ? *cmd.spec : sample_spec(rng, mode, config.scale_r);
    spec.validate();
    const Image lr = degrade(hr, spec, rng, down);
    const std::string stem = inputs[i].stem().string();
    save_png(out_dir / (stem + ".png"), lr);
    write_text_atomic(out_dir / (stem + ".spec.txt"), spec.to_text() + "seed = " + std::to_string(seed) +
                                                          "\nsource = " + inputs[i].filename().string() + "\n");
    log << inputs[i].filename().string() << " -> " << stem << ".png\n";
  }
  return kExitOk;
}

// Keeps the header and the rows up to `last_step`.
std::string truncate_log(const std::string& csv, std::int64_t last_step) {
  std::istringstream lines(csv);
  std::string line, out;
  bool header = true;
  while (std::getline(lines, line)) {
    if (header || std::stoll(line.substr(0, line.find(','))) <= last_step) out += line + "\n";
    header = false;
  }
  return out;
}

int run_train(const Command& cmd, std::ostream& log) {
  std::vector<TrainingExample> data;
  for (const auto& path : gather_inputs(cmd.input)) {
    TrainingExample example{load_png(path), std::nullopt};
    if (fs::exists(sidecar_path(path))) example.spec = DegradationSpec::from_text(read_text(sidecar_path(path)));
    data.push_back(std::move(example));
  }
  if (data.empty()) throw ParameterError("no training images in " + cmd.input);

  const fs::path out_dir(cmd.output);
  fs::create_directories(out_dir);
  const fs::path csv_path = out_dir / "loss.csv";
  std::string csv = "step,L_SNF,L_encoder,L_degrad,total\n";
  std::optional<Trainer> trainer;
  if (cmd.checkpoint.empty()) {
    trainer.emplace(cmd.config, std::move(data));
  } else {
    trainer.emplace(Trainer::load_checkpoint(cmd.checkpoint, std::move(data)));
    if (fs::exists(csv_path)) csv = truncate_log(read_text(csv_path), trainer->steps_done());
  }
  trainer->dump_path = out_dir / "nan_dump.ckpt";
  write_text_atomic(out_dir / "config.txt", trainer->config().to_text());

  const std::int64_t target = cmd.config.steps;
  const std::int64_t every = trainer->config().checkpoint_every;
  const std::int64_t report = std::max<std::int64_t>(1, target / 20);
  while (trainer->steps_done() < target) {
    const LossBreakdown loss = trainer->step();
    csv += std::to_string(loss.step) + "," + format_double(loss.snf) + "," + format_double(loss.encoder) + "," +
           format_double(loss.degrad) + "," + format_double(loss.total) + "\n";
    if (loss.step % report == 0) {
      log << "step " << loss.step << " total " << loss.total << " snf " << loss.snf << " encoder " << loss.encoder
          << " degrad " << loss.degrad << "\n";
    }
    if (every > 0 && loss.step % every == 0) {
      trainer->save_checkpoint(out_dir / ("checkpoint_" + std::to_string(loss.step) + ".ckpt"));
      write_text_atomic(csv_path, csv);
    }
  }
  trainer->save_checkpoint(out_dir / "final.ckpt");
  write_text_atomic(csv_path, csv);
  log << "wrote " << (out_dir / "final.ckpt").string() << "\n";
  return kExitOk;
}

int run_sample(const Command& cmd, std::ostream& log) {
  LoadedModel loaded = load_model(cmd.checkpoint);
  TrainConfig config = loaded.config;
  for (const auto& [key, value] : cmd.overrides) config.set(key, value);
  config.validate();
  const DiffusionSchedule schedule = make_schedule(config.T, config.beta_start, config.beta_end);
  const SamplingPath path = make_path(schedule, config.gamma, config.eta);

  const auto inputs = gather_inputs(cmd.input);
  if (inputs.empty()) throw ParameterError("no input images in " + cmd.input);
  const fs::path out_dir(cmd.output);
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const std::string stem = inputs[i].stem().string();
    SampleRequest request{load_png(inputs[i]), path, config.seed + i, std::nullopt};
    StepObserver observer;
    if (cmd.dump_steps) {
      const fs::path step_dir = out_dir / (stem + "_steps");
      fs::create_directories(step_dir);
      observer = [step_dir](int tau, const Image& latent) {
        std::ostringstream name;
        name << "tau_" << std::setw(4) << std::setfill('0') << tau << ".png";
        save_png(step_dir / name.str(), clamp_unit(latent));
      };
    }
    const Image sr = sample(request, *loaded.model, schedule, observer);
    save_png(out_dir / (stem + ".png"), clamp_unit(sr));
    log << inputs[i].filename().string() << " -> " << stem << ".png (" << path.num_steps() << " steps)\n";
  }
  return kExitOk;
}

int run_eval(const Command& cmd, std::ostream& log) {
  const auto inputs = gather_inputs(cmd.input);
  if (inputs.empty()) throw ParameterError("no images in " + cmd.input);
  std::string csv = "image,psnr_db\n";
  double total = 0.0;
  for (const auto& path : inputs) {
    const fs::path reference = fs::path(cmd.hr) / path.filename();
    if (!fs::exists(reference)) throw ParameterError("no reference image " + reference.string());
    const Image sr = load_png(path);
    const Image hr = load_png(reference);
    require_same_shape(sr, hr, "eval " + path.filename().string());
    const auto to_levels = [](const Image& image) {
      const auto bytes = image_to_rgb8(image);
      Tensor<double> levels({static_cast<Index>(bytes.size())});
      for (std::size_t k = 0; k < bytes.size(); ++k) levels[static_cast<Index>(k)] = bytes[k];
      return levels;
    };
    const double value = psnr(to_levels(sr), to_levels(hr), 255.0);
    total += value;
    csv += path.filename().string() + "," + format_double(value) + "\n";
    log << path.filename().string() << " " << value << " dB\n";
  }
  csv += "mean," + format_double(total / static_cast<double>(inputs.size())) + "\n";
  fs::create_directories(cmd.output);
  write_text_atomic(fs::path(cmd.output) / "psnr.csv", csv);
  return kExitOk;
}

int run_dump_schedule(const Command& cmd, std::ostream& log) {
  const DiffusionSchedule schedule = make_schedule(cmd.config.T, cmd.config.beta_start, cmd.config.beta_end);
  fs::create_directories(cmd.output);
  const fs::path path = fs::path(cmd.output) / "schedule.csv";
  write_text_atomic(path, schedule_csv(schedule));
  log << "wrote " << path.string() << " (" << schedule.steps << " rows)\n";
  return kExitOk;
}

int run_gradcheck(const Command& cmd, std::ostream& log) {
  const auto entries = run_grad_suite(cmd.config.seed);
  // fp32 results are reported; the fp64 checks decide the exit code.
  bool all = true;
  std::string csv = "check,precision,max_relative_error,tolerance,passed\n";
  for (const auto& e : entries) {
    if (e.precision == "fp64") all = all && e.passed();
    log << (e.passed() ? "PASS " : "FAIL ") << e.name << " " << e.precision << " " << e.error << " (< "
        << e.tolerance << ")\n";
    csv += e.name + "," + e.precision + "," + format_double(e.error) + "," + format_double(e.tolerance) + "," +
           (e.passed() ? "1" : "0") + "\n";
  }
  if (!cmd.output.empty()) {
    fs::create_directories(cmd.output);
    write_text_atomic(fs::path(cmd.output) / "gradcheck.csv", csv);
  }
  return all ? kExitOk : kExitFailure;
}

}  // namespace

Command parse_args(const std::vector<std::string>& args) {
  Command cmd;
  CLI::App app{"Blind super-resolution by conditional diffusion", "blindsnf"};
  app.require_subcommand(1);

  std::map<std::string, std::string> flag_values;
  const auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", cmd.config_path, "Config file (key = value)");
    for (const auto& key : TrainConfig::keys()) sub->add_option(flag_name(key), flag_values[key], key);
  };

  SpecFlags spec_flags;
  CLI::App* degrade = app.add_subcommand("degrade", "Synthesize LR images with spec sidecars");
  degrade->add_option("--input", cmd.input, "HR PNG, directory or manifest")->required();
  degrade->add_option("--output", cmd.output, "Output directory")->required();
  degrade->add_option("--kind", spec_flags.kind, "Fixed kernel kind: iso or aniso");
  degrade->add_option("--sigma", spec_flags.sigma, "Isotropic kernel width");
  degrade->add_option("--lambda1", spec_flags.lambda1, "Anisotropic width along the first axis");
  degrade->add_option("--lambda2", spec_flags.lambda2, "Anisotropic width along the second axis");
  degrade->add_option("--theta", spec_flags.theta, "Anisotropic rotation in radians");
  degrade->add_option("--noise", spec_flags.noise, "Noise level on the 0..255 scale");
  add_config_flags(degrade);

  CLI::App* train = app.add_subcommand("train", "Train the three networks jointly");
  train->add_option("--data", cmd.input, "HR PNG directory or manifest")->required();
  train->add_option("--output", cmd.output, "Output directory")->required();
  train->add_option("--resume", cmd.checkpoint, "Checkpoint to resume from");
  add_config_flags(train);

  CLI::App* sample_cmd = app.add_subcommand("sample", "Super-resolve LR images");
  sample_cmd->add_option("--checkpoint", cmd.checkpoint, "Trained checkpoint")->required();
  sample_cmd->add_option("--input", cmd.input, "LR PNG, directory or manifest")->required();
  sample_cmd->add_option("--output", cmd.output, "Output directory")->required();
  sample_cmd->add_flag("--dump-steps", cmd.dump_steps, "Write one PNG per sampling step");
  add_config_flags(sample_cmd);

  CLI::App* eval = app.add_subcommand("eval", "PSNR table of SR images against references");
  eval->add_option("--sr", cmd.input, "SR PNG, directory or manifest")->required();
  eval->add_option("--hr", cmd.hr, "Directory of references with matching file names")->required();
  eval->add_option("--output", cmd.output, "Output directory")->required();

  CLI::App* dump = app.add_subcommand("dump-schedule", "Write the noise schedule as CSV");
  dump->add_option("--output", cmd.output, "Output directory")->required();
  add_config_flags(dump);

  CLI::App* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad->add_option("--output", cmd.output, "Output directory for gradcheck.csv");
  add_config_flags(grad);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    cmd.help = true;
    cmd.help_text = app.help();
    return cmd;
  } catch (const CLI::CallForAllHelp&) {
    cmd.help = true;
    cmd.help_text = app.help("", CLI::AppFormatMode::All);
    return cmd;
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\n\n" + app.help());
  }

  CLI::App* chosen = app.get_subcommands().front();
  cmd.verb = chosen->get_name();
  if (!cmd.config_path.empty()) cmd.config = TrainConfig::load(cmd.config_path);
  for (const auto& key : TrainConfig::keys()) {
    const CLI::Option* opt = chosen->get_option_no_throw(flag_name(key));
    if (opt == nullptr || opt->count() == 0) continue;
    try {
      cmd.config.set(key, flag_values[key]);
    } catch (const ParameterError& e) {
      throw UsageError(flag_name(key) + ": " + e.what());
    }
    cmd.overrides[key] = flag_values[key];
  }
  if (cmd.verb == "degrade") cmd.spec = resolve_spec(spec_flags, *degrade, cmd.config.scale_r);
  return cmd;
}

int run(const Command& cmd, std::ostream& log) {
  if (cmd.help) {
    log << cmd.help_text;
    return kExitOk;
  }
  if (cmd.verb != "sample") cmd.config.validate();
  if (cmd.verb == "degrade") return run_degrade(cmd, log);
  if (cmd.verb == "train") return run_train(cmd, log);
  if (cmd.verb == "sample") return run_sample(cmd, log);
  if (cmd.verb == "eval") return run_eval(cmd, log);
  if (cmd.verb == "dump-schedule") return run_dump_schedule(cmd, log);
  if (cmd.verb == "gradcheck") return run_gradcheck(cmd, log);
  throw UsageError("unknown verb '" + cmd.verb + "'");
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run(parse_args(args), out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace blindsnf
