#include "blindsnf/trainer.hpp"

#include <cmath>
#include <sstream>

namespace blindsnf {

template <typename Scalar>
Var<Scalar> snf_loss(const Tensor<Scalar>& x_hr, const std::vector<int>& steps, const Tensor<Scalar>& eps,
                     const Var<Scalar>& u, const Var<Scalar>& v, const DiffusionSchedule& schedule,
                     const DenoiseGraphFn<Scalar>& denoiser) {
  require_rank(x_hr, 4, "snf_loss");
  require_same_shape(x_hr, eps, "snf_loss");
  const Index n = x_hr.dim(0);
  if (static_cast<Index>(steps.size()) != n) throw DimensionError("snf_loss: one step per sample required");
  const Index per = x_hr.size() / n;
  Tensor<Scalar> x_t(x_hr.shape());
  for (Index b = 0; b < n; ++b) {
    const int t = steps[static_cast<std::size_t>(b)];
    if (t < 1 || t > schedule.steps) throw ParameterError("snf_loss: step out of range");
    const auto keep = static_cast<Scalar>(std::sqrt(schedule.alpha_bar[t]));
    const auto noise = static_cast<Scalar>(std::sqrt(1.0 - schedule.alpha_bar[t]));
    x_t.values().segment(b * per, per) =
        keep * x_hr.values().segment(b * per, per) + noise * eps.values().segment(b * per, per);
  }
  const Var<Scalar> predicted = denoiser(Var<Scalar>(x_t), steps, u, v);
  return mean_abs(sub(Var<Scalar>(x_hr), predicted));
}

template Var<float> snf_loss(const Tensor<float>&, const std::vector<int>&, const Tensor<float>&, const Var<float>&,
                             const Var<float>&, const DiffusionSchedule&, const DenoiseGraphFn<float>&);
template Var<double> snf_loss(const Tensor<double>&, const std::vector<int>&, const Tensor<double>&,
                              const Var<double>&, const Var<double>&, const DiffusionSchedule&,
                              const DenoiseGraphFn<double>&);

Adam::Adam(nn::ParameterList<float> params, double learning_rate, double beta1, double beta2, double eps)
    : learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto& p : params) {
    if (!p.trainable) continue;
    first_moment_.emplace_back(p.var.shape());
    second_moment_.emplace_back(p.var.shape());
    params_.push_back(std::move(p));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

void Adam::step() {
  ++iterations_;
  const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(iterations_));
  const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(iterations_));
  const auto step_size = static_cast<float>(learning_rate_ / correction1);
  const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const auto root2 = static_cast<float>(std::sqrt(correction2));
  const auto eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& var = params_[i].var;
    if (!var.has_grad()) continue;
    const auto grad = var.grad().values();
    auto& m = first_moment_[i].values();
    auto& v = second_moment_[i].values();
    m = b1 * m + (1.0f - b1) * grad;
    v = b2 * v + (1.0f - b2) * grad.square();
    var.mutable_value().values() -= step_size * m / (v.sqrt() / root2 + eps);
  }
  zero_grad();
}

void Adam::save(CheckpointArchive& archive) const {
  archive.texts["adam.iterations"] = std::to_string(iterations_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    archive.tensors["adam.m." + params_[i].name] = first_moment_[i];
    archive.tensors["adam.v." + params_[i].name] = second_moment_[i];
  }
}

void Adam::load(const CheckpointArchive& archive) {
  iterations_ = std::stoll(archive.text("adam.iterations"));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& m = archive.tensor("adam.m." + params_[i].name);
    const auto& v = archive.tensor("adam.v." + params_[i].name);
    require_same_shape(m, first_moment_[i], "Adam::load");
    require_same_shape(v, second_moment_[i], "Adam::load");
    first_moment_[i] = m;
    second_moment_[i] = v;
  }
}

namespace {

void store_parameters(const nn::ParameterList<float>& params, CheckpointArchive& archive) {
  for (const auto& p : params) archive.tensors["param." + p.name] = p.var.value();
}

void load_parameters(const CheckpointArchive& archive, const nn::ParameterList<float>& params) {
  for (const auto& p : params) {
    const auto& stored = archive.tensor("param." + p.name);
    require_same_shape(stored, p.var.value(), "checkpoint parameter " + p.name);
    Var<float> handle = p.var;
    handle.mutable_value() = stored;
  }
}

std::string describe(const LossBreakdown& loss) {
  std::ostringstream os;
  os << "step " << loss.step << ": L_SNF=" << loss.snf << " L_encoder=" << loss.encoder
     << " L_degrad=" << loss.degrad;
  return os.str();
}

}  // namespace

Trainer::Trainer(TrainConfig config, std::vector<TrainingExample> data)
    : config_(std::move(config)),
      data_(std::move(data)),
      rng_(config_.seed),
      schedule_(make_schedule(config_.T, config_.beta_start, config_.beta_end)),
      queue_(config_.queue_capacity, config_.proj_dim, static_cast<float>(config_.temperature)) {
  config_.validate();
  if (data_.empty()) throw ParameterError("Trainer needs at least one training image");
  model_ = std::make_unique<BlindSrModel<float>>(config_.model_config(), rng_);
  optimizer_ = std::make_unique<Adam>(model_->parameters(), config_.learning_rate, config_.adam_beta1,
                                      config_.adam_beta2, config_.adam_eps);
}

std::vector<TrainingTriple> Trainer::next_batch() {
  const SpecMode mode = parse_spec_mode(config_.degradation_mode);
  const Downsampler down = parse_downsampler(config_.downsampler);
  std::vector<TrainingTriple> batch;
  batch.reserve(static_cast<std::size_t>(config_.batch_size));
  for (Index b = 0; b < config_.batch_size; ++b) {
    const auto pick = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(data_.size()) - 1));
    const TrainingExample& example = data_[pick];
    const DegradationSpec spec = example.spec ? *example.spec : sample_spec(rng_, mode, config_.scale_r);
    batch.push_back(make_triple(example.hr, spec, config_.lr_patch, rng_, down));
  }
  return batch;
}

LossBreakdown Trainer::train_step(const std::vector<TrainingTriple>& batch) {
  if (batch.empty()) throw DimensionError("train_step: empty batch");
  const auto n = static_cast<Index>(batch.size());
  std::vector<Image> lr, pos, hr;
  for (const auto& triple : batch) {
    lr.push_back(triple.x_lr);
    pos.push_back(triple.x_lr_pos);
    hr.push_back(triple.x_hr);
  }
  const Tensor<float> x_lr = stack(lr);
  const Tensor<float> x_hr = stack(hr);

  LossBreakdown out;
  out.step = step_ + 1;
  BlindSrModel<float>& model = *model_;
  optimizer_->zero_grad();

  const bool need_u = config_.use_snf_loss || config_.use_encoder_loss;
  const bool need_v = config_.use_snf_loss || config_.use_degrad_loss;

  Var<float> u;
  if (need_u) u = model.lr_encoder.encode(Var<float>(x_lr));

  Var<float> v, v_pos;
  if (config_.use_degrad_loss) {
    std::vector<Image> both = lr;
    both.insert(both.end(), pos.begin(), pos.end());
    const Var<float> reps = model.degradation.encode(Var<float>(stack(both)), true);
    v = slice_batch(reps, 0, n);
    v_pos = slice_batch(reps, n, n);
  } else if (need_v) {
    v = model.degradation.encode(Var<float>(x_lr), true);
  }

  std::vector<Var<float>> terms;
  if (config_.use_snf_loss) {
    std::vector<int> steps(static_cast<std::size_t>(n));
    for (auto& t : steps) t = static_cast<int>(rng_.uniform_int(1, config_.T));
    const Tensor<float> eps = rng_.normal_tensor<float>(x_hr.shape());
    const DenoiseGraphFn<float> h = [&model](const Var<float>& x_t, const std::vector<int>& s, const Var<float>& c,
                                             const Var<float>& rep) { return model.denoiser(x_t, s, c, rep); };
    const Var<float> loss = snf_loss(x_hr, steps, eps, u, v, schedule_, h);
    out.snf = loss.value()[0];
    terms.push_back(loss);
  }
  if (config_.use_encoder_loss) {
    const Var<float> loss = encoder_loss(model.lr_encoder.upsample(u), Var<float>(x_hr));
    out.encoder = loss.value()[0];
    terms.push_back(loss);
  }
  Tensor<float> projected;
  if (config_.use_degrad_loss) {
    const Var<float> w = model.project(v);
    const Var<float> w_pos = model.project(v_pos);
    projected = w.value();
    if (!queue_.empty()) {
      const Var<float> loss = contrastive_loss(w, w_pos, queue_, config_.include_positive);
      out.degrad = loss.value()[0];
      terms.push_back(loss);
    }
  }

  if (!std::isfinite(out.snf) || !std::isfinite(out.encoder) || !std::isfinite(out.degrad)) {
    if (dump_path) save_checkpoint(*dump_path);
    throw NumericalError("non-finite loss at " + describe(out) +
                         (dump_path ? "; state written to " + dump_path->string() : std::string()));
  }

  if (!terms.empty()) {
    Var<float> total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    if (total.requires_grad()) backward(total);
  }
  out.total = out.snf + out.encoder + out.degrad;
  optimizer_->step();
  if (config_.use_degrad_loss) queue_.push(projected);
  ++step_;
  return out;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  CheckpointArchive archive;
  archive.texts["config"] = config_.to_text();
  archive.texts["step"] = std::to_string(step_);
  archive.texts["rng"] = rng_.state();
  store_parameters(model_->parameters(), archive);
  optimizer_->save(archive);
  archive.texts["queue.size"] = std::to_string(queue_.size());
  if (!queue_.empty()) archive.tensors["queue"] = queue_.matrix();
  write_checkpoint(path, archive);
}

void Trainer::restore(const CheckpointArchive& archive) {
  step_ = std::stoll(archive.text("step"));
  rng_.set_state(archive.text("rng"));
  load_parameters(archive, model_->parameters());
  optimizer_->load(archive);
  queue_.clear();
  if (std::stoll(archive.text("queue.size")) > 0) queue_.push(archive.tensor("queue"));
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path, std::vector<TrainingExample> data) {
  const CheckpointArchive archive = read_checkpoint(path);
  Trainer trainer(TrainConfig::parse(archive.text("config")), std::move(data));
  trainer.restore(archive);
  return trainer;
}

LoadedModel load_model(const std::filesystem::path& path) {
  const CheckpointArchive archive = read_checkpoint(path);
  LoadedModel loaded;
  loaded.config = TrainConfig::parse(archive.text("config"));
  loaded.config.validate();
  Rng rng(loaded.config.seed);
  loaded.model = std::make_unique<BlindSrModel<float>>(loaded.config.model_config(), rng);
  load_parameters(archive, loaded.model->parameters());
  return loaded;
}

}  // namespace blindsnf
