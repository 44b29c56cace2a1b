#include "heatcast/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace heatcast {

using nlohmann::json;

LossReport& LossReport::operator+=(const LossReport& o) {
  total += o.total;
  score_bce += o.score_bce;
  offset_l1 += o.offset_l1;
  traj_l1 += o.traj_l1;
  wta_goal += o.wta_goal;
  wta_traj += o.wta_traj;
  wta_cls += o.wta_cls;
  aux += o.aux;
  return *this;
}

LossReport& LossReport::operator*=(double s) {
  total *= s;
  score_bce *= s;
  offset_l1 *= s;
  traj_l1 *= s;
  wta_goal *= s;
  wta_traj *= s;
  wta_cls *= s;
  aux *= s;
  return *this;
}

json AugmentConfig::to_json() const {
  return {{"enabled", enabled},         {"probability", probability}, {"flip", flip},
          {"max_rotation", max_rotation}, {"scale_min", scale_min},     {"scale_max", scale_max},
          {"dropout_rate", dropout_rate}};
}

AugmentConfig AugmentConfig::from_json(const json& doc) {
  AugmentConfig a;
  a.enabled = doc.value("enabled", a.enabled);
  a.probability = doc.value("probability", a.probability);
  a.flip = doc.value("flip", a.flip);
  a.max_rotation = doc.value("max_rotation", a.max_rotation);
  a.scale_min = doc.value("scale_min", a.scale_min);
  a.scale_max = doc.value("scale_max", a.scale_max);
  a.dropout_rate = doc.value("dropout_rate", a.dropout_rate);
  return a;
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"grad_clip", grad_clip},
          {"seed", seed},
          {"weights",
           {{"score", weights.score},
            {"offset", weights.offset},
            {"traj", weights.traj},
            {"wta", weights.wta},
            {"aux", weights.aux}}},
          {"augment", augment.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& doc) {
  TrainConfig c;
  c.epochs = doc.value("epochs", c.epochs);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.grad_clip = doc.value("grad_clip", c.grad_clip);
  c.seed = doc.value("seed", c.seed);
  if (doc.contains("weights")) {
    const auto& w = doc.at("weights");
    c.weights.score = w.value("score", c.weights.score);
    c.weights.offset = w.value("offset", c.weights.offset);
    c.weights.traj = w.value("traj", c.weights.traj);
    c.weights.wta = w.value("wta", c.weights.wta);
    c.weights.aux = w.value("aux", c.weights.aux);
  }
  if (doc.contains("augment")) c.augment = AugmentConfig::from_json(doc.at("augment"));
  return c;
}

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(c.learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(c.grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be >= 0");
  const auto& a = c.augment;
  if (!(a.probability >= 0.0 && a.probability <= 1.0))
    throw std::invalid_argument("augment probability must lie in [0, 1]");
  if (!(a.max_rotation >= 0.0 && a.max_rotation <= std::numbers::pi))
    throw std::invalid_argument("augment max_rotation must lie in [0, pi]");
  if (!(a.scale_min >= 0.8 && a.scale_min <= a.scale_max && a.scale_max <= 1.25))
    throw std::invalid_argument("augment scale range must lie in [0.8, 1.25]");
  if (!(a.dropout_rate >= 0.0 && a.dropout_rate <= 0.3))
    throw std::invalid_argument("augment dropout_rate must lie in [0, 0.3]");
}

std::pair<Tensor, Tensor> scoring_loss(const HeatmapTensors& h,
                                       const std::vector<PositiveLabel>& labels) {
  const Eigen::Index n = h.logits.size();
  if (static_cast<Eigen::Index>(labels.size()) != n)
    throw std::invalid_argument("scoring_loss: label count does not match candidates");
  Matrix y(1, n);
  std::vector<Eigen::Index> pos;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool p = labels[static_cast<std::size_t>(i)].is_positive;
    y(0, i) = p ? 1.0 : 0.0;
    if (p) pos.push_back(i);
  }
  const Tensor bce = binary_ce(h.logits, y);
  if (pos.empty()) return {bce, Tensor::scalar(0.0)};
  Matrix target(static_cast<Eigen::Index>(pos.size()), 2);
  for (std::size_t i = 0; i < pos.size(); ++i)
    target.row(static_cast<Eigen::Index>(i)) =
        labels[static_cast<std::size_t>(pos[i])].target_offset.transpose();
  return {bce, smooth_l1(gather_rows(h.offsets, pos), target)};
}

Eigen::Index wta_winner(const Matrix& goals, const Vec2& gt_goal) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < goals.rows(); ++i) {
    const double d = (goals.row(i).transpose() - gt_goal).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

WtaTerms wta_loss(const GoalSetTensors& g, const Vec2& gt_goal, const Points& gt_future) {
  WtaTerms w;
  w.winner = wta_winner(g.goals.value(), gt_goal);
  w.goal = smooth_l1(slice_rows(g.goals, w.winner, 1), Matrix(gt_goal.transpose()));
  w.traj = smooth_l1(reshape(slice_rows(g.trajs, w.winner, 1), {kFutureLength, 2}),
                     Matrix(gt_future));
  w.cls = categorical_ce(g.logits, w.winner);
  return w;
}

SampleLoss sample_loss(const Model& model, const ForwardPass& p, const LossWeights& lw) {
  if (!p.scene.target.future) throw std::invalid_argument("sample_loss: scenario has no future");
  const Points& future = *p.scene.target.future;
  const Vec2 gt_goal = future.row(kFutureLength - 1).transpose();
  SampleLoss out;
  LossReport& r = out.report;
  std::vector<Tensor> terms;

  if (model.config.head != HeadKind::direct) {
    const auto [bce, off] = scoring_loss(p.heatmap, assign_labels(p.heatmap.candidates, gt_goal));
    const Tensor decoded =
        decode_trajectory(model.params, p.features.target, Tensor::constant(Matrix(gt_goal.transpose())));
    const Tensor traj = smooth_l1(reshape(decoded, {kFutureLength, 2}), Matrix(future));
    r.score_bce = bce.item();
    r.offset_l1 = off.item();
    r.traj_l1 = traj.item();
    terms.push_back(mul(bce, lw.score));
    terms.push_back(mul(off, lw.offset));
    terms.push_back(mul(traj, lw.traj));
  }
  if (model.config.head != HeadKind::nms) {
    const WtaTerms w = wta_loss(p.goals, gt_goal, future);
    r.wta_goal = w.goal.item();
    r.wta_traj = w.traj.item();
    r.wta_cls = w.cls.item();
    terms.push_back(mul(add(add(w.goal, w.traj), w.cls), lw.wta));
  }
  if (model.config.head == HeadKind::distribution) {
    const WtaTerms a = wta_loss(p.before_refine, gt_goal, future);
    const Tensor aux = add(add(a.goal, a.traj), a.cls);
    r.aux = aux.item();
    terms.push_back(mul(aux, lw.aux));
  }
  out.total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) out.total = add(out.total, terms[i]);
  r.total = out.total.item();
  return out;
}

Adam::Adam(const ParamSet& params, double lr, double b1, double b2, double eps)
    : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {
  for (const auto& [name, t] : params) {
    m_.push_back(Matrix::Zero(t.rows(), t.cols()));
    v_.push_back(Matrix::Zero(t.rows(), t.cols()));
  }
}

double gradient_norm(const ParamSet& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) sq += t.grad().squaredNorm();
  return std::sqrt(sq);
}

double Adam::step(ParamSet& params, double clip) {
  const double norm = gradient_norm(params);
  const double scale = clip > 0.0 && norm > clip ? clip / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    Tensor p = t;
    const Matrix g = p.grad() * scale;
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseAbs2();
    p.mutable_value().array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    ++i;
  }
  return norm;
}

namespace {

Scenario augment_sample(const Scenario& s, const AugmentConfig& a, Rng& rng) {
  std::vector<Augmentation> options;
  if (a.flip) options.push_back({AugmentKind::flip, 0.0});
  if (a.max_rotation > 0.0)
    options.push_back({AugmentKind::rotate, rng.uniform(-a.max_rotation, a.max_rotation)});
  if (a.scale_max > a.scale_min || a.scale_min != 1.0)
    options.push_back({AugmentKind::scale, rng.uniform(a.scale_min, a.scale_max)});
  if (a.dropout_rate > 0.0) options.push_back({AugmentKind::history_dropout, a.dropout_rate});
  if (options.empty()) return s;
  const Augmentation pick = options[rng.index(options.size())];
  return augment(s, pick, rng.bits());
}

bool finite(const LossReport& r) {
  return std::isfinite(r.total) && std::isfinite(r.score_bce) && std::isfinite(r.offset_l1) &&
         std::isfinite(r.traj_l1) && std::isfinite(r.wta_goal) && std::isfinite(r.wta_traj) &&
         std::isfinite(r.wta_cls) && std::isfinite(r.aux);
}

void restore(ParamSet& params, const ParamSet& snapshot) {
  auto it = snapshot.begin();
  for (const auto& [name, t] : params) {
    Tensor p = t;
    p.mutable_value() = it->second.value();
    p.zero_grad();
    ++it;
  }
}

}  // namespace

TrainResult train(Model& model, const std::vector<Scenario>& dataset, const TrainConfig& config,
                  int first_epoch, const EpochCallback& on_epoch) {
  validate(config);
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<Scenario> local;
  local.reserve(dataset.size());
  for (const auto& s : dataset) {
    if (!s.target.future) throw std::invalid_argument("train: scenario " + s.id + " has no future");
    local.push_back(normalize(s).first);
  }

  TrainResult result;
  result.first_epoch = first_epoch;
  Adam adam(model.params, config.learning_rate);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::size_t> order(local.size());

  for (int e = 0; e < config.epochs; ++e) {
    const int epoch = first_epoch + e;
    const ParamSet snapshot = model.params.clone();
    Rng rng(config.seed, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());

    LossReport epoch_report;
    bool ok = true;
    for (std::size_t start = 0; start < order.size() && ok; start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      model.params.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const Scenario& base = local[order[i]];
        const bool aug = config.augment.enabled && rng.bernoulli(config.augment.probability);
        const Scenario sample = aug ? augment_sample(base, config.augment, rng) : base;
        SampleLoss loss;
        try {
          loss = sample_loss(model, forward(model, sample), config.weights);
        } catch (const std::domain_error&) {
          ok = false;
          break;
        }
        if (!finite(loss.report)) {
          ok = false;
          break;
        }
        backward(mul(loss.total, inv));
        epoch_report += loss.report;
      }
      if (ok) adam.step(model.params, config.grad_clip);
      if (ok && !std::isfinite(gradient_norm(model.params))) ok = false;
    }
    if (!ok) {
      restore(model.params, snapshot);
      result.diverged = true;
      return result;
    }
    epoch_report *= 1.0 / static_cast<double>(order.size());
    result.curve.push_back(epoch_report);
    if (on_epoch) on_epoch(epoch, epoch_report);
  }
  return result;
}

std::string curve_csv(const TrainResult& r) {
  std::ostringstream out;
  out << "epoch,total,score_bce,offset_l1,traj_l1,wta_goal,wta_traj,wta_cls,aux\n";
  char line[512];
  for (std::size_t i = 0; i < r.curve.size(); ++i) {
    const auto& c = r.curve[i];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.first_epoch + static_cast<int>(i), c.total, c.score_bce, c.offset_l1,
                  c.traj_l1, c.wta_goal, c.wta_traj, c.wta_cls, c.aux);
    out << line;
  }
  return out.str();
}

std::string config_hash(const ModelConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : config.to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const Model& model, int epoch, const std::filesystem::path& path) {
  const json doc = {{"format_version", kCheckpointVersion},
                    {"config_hash", config_hash(model.config)},
                    {"head", to_string(model.config.head)},
                    {"config", model.config.to_json()},
                    {"epoch", epoch},
                    {"params", model.params.to_json()}};
  write_file_atomic(path, doc.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::string* warning) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("cannot read checkpoint: ") + e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError("checkpoint parse error: " + std::string(e.what()));
  }
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      throw CheckpointError("checkpoint format_version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) +
                            ")");
    Checkpoint c;
    c.config = ModelConfig::from_json(doc.at("config"));
    c.params = ParamSet::from_json(doc.at("params"));
    c.epoch = doc.value("epoch", 0);
    c.config_hash = doc.at("config_hash").get<std::string>();
    if (warning) {
      warning->clear();
      if (c.config_hash != config_hash(c.config))
        *warning = "checkpoint config hash " + c.config_hash + " does not match its config (" +
                   config_hash(c.config) + ")";
    }
    return c;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError("malformed checkpoint: " + std::string(e.what()));
  }
}

}  // namespace heatcast
