#include "ltkd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ltkd/error.hpp"
#include "ltkd/rng.hpp"

namespace ltkd {
namespace {

void require_finite_value(double v, const char* what) {
  if (!std::isfinite(v)) throw ConfigError(std::string(what) + " must be finite");
}

std::vector<std::size_t> with_io(std::size_t in, std::span<const std::size_t> hidden,
                                 std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

double mean_of(std::span<const double> values, std::span<const std::size_t> idx) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i : idx)
    if (!std::isnan(values[i])) {
      s += values[i];
      ++n;
    }
  return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  require_finite_value(sgd.lr, "learning rate");
  require_finite_value(sgd.momentum, "momentum");
  require_finite_value(sgd.weight_decay, "weight decay");
  if (sgd.lr < 0.0 || sgd.momentum < 0.0 || sgd.weight_decay < 0.0)
    throw ConfigError("optimizer settings must be non-negative");
  for (double f : decay_at)
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("decay fractions must lie in (0, 1)");
  require_finite_value(decay_factor, "decay factor");
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
  double lr = sgd.lr;
  for (double f : decay_at)
    if (static_cast<double>(epoch) >= f * static_cast<double>(epochs)) lr *= decay_factor;
  return lr;
}

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::kd: return "kd";
    case Method::ltkd: return "ltkd";
    case Method::decomposed: return "decomposed";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::kd, Method::ltkd, Method::decomposed})
    if (s == method_name(m)) return m;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected kd, ltkd or decomposed)");
}

DistillConfig DistillConfig::defaults_for(Method m) {
  DistillConfig c;
  c.method = m;
  c.tau = m == Method::kd ? 4.0 : 1.0;
  if (m == Method::decomposed) c.weights = {1.0, 1.0};
  return c;
}

void DistillConfig::validate() const {
  weights.validate();
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
  require_finite_value(ce_weight, "ce weight");
  if (ce_weight < 0.0) throw ConfigError("ce weight must be non-negative");
  policy.validate();
  for (std::size_t h : student_hidden)
    if (h == 0) throw ConfigError("student hidden widths must be positive");
  train.validate();
}

EvalReport evaluate_predictions(std::span<const std::size_t> labels,
                                std::span<const std::size_t> predictions,
                                const GroupPartition& partition) {
  if (labels.size() != predictions.size()) throw ShapeError("one prediction per label required");
  const std::size_t C = partition.num_classes();
  EvalReport r;
  r.samples = labels.size();
  r.per_class_count.assign(C, 0);
  std::vector<std::size_t> correct(C, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= C) throw InputError("label outside the partition's classes");
    ++r.per_class_count[labels[i]];
    if (predictions[i] == labels[i]) ++correct[labels[i]];
  }
  r.per_class.resize(C);
  for (std::size_t c = 0; c < C; ++c)
    r.per_class[c] = r.per_class_count[c]
                         ? 100.0 * static_cast<double>(correct[c]) /
                               static_cast<double>(r.per_class_count[c])
                         : std::numeric_limits<double>::quiet_NaN();
  for (Group g : kGroups)
    r.group_accuracy[static_cast<std::size_t>(g)] = mean_of(r.per_class, partition.members(g));
  std::vector<std::size_t> all(C);
  std::iota(all.begin(), all.end(), std::size_t{0});
  r.overall = mean_of(r.per_class, all);
  return r;
}

std::vector<std::size_t> predict(const Mlp& model, const Matrix& x) {
  const Matrix logits = model.forward(x);
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

EvalReport evaluate(const Mlp& model, const Dataset& test, const GroupPartition& partition) {
  if (model.num_classes() != partition.num_classes())
    throw ShapeError("model and partition disagree on the class count");
  return evaluate_predictions(test.labels, predict(model, test.features), partition);
}

std::vector<std::vector<std::size_t>> batch_schedule(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t seed, std::size_t epochs) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  Rng rng = make_rng(seed, "batch-order");
  std::vector<std::size_t> order(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += batch_size)
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return batches;
}

void train_loop(Mlp& model, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed,
                const BatchObjective& objective, const EpochHook& on_epoch) {
  cfg.validate();
  if (data.size() == 0) throw InputError("training set is empty");
  if (data.dim() != model.input_dim()) throw ShapeError("data and model input widths differ");
  Sgd sgd(cfg.sgd);
  const auto batches = batch_schedule(data.size(), cfg.batch_size, seed, cfg.epochs);
  const std::size_t per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::size_t epoch = b / per_epoch;
    sgd.set_lr(cfg.lr_at_epoch(epoch));
    const Matrix x = gather_rows(data.features, batches[b]);
    const MlpTrace trace = model.record(x);
    double loss = 0.0;
    const Matrix dlogits = objective(trace.logits(), batches[b], loss);
    if (!std::isfinite(loss) || !all_finite(dlogits))
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b % per_epoch));
    const std::vector<Matrix> grads = trace.backward(dlogits);
    auto params = model.parameters();
    sgd.step(params, grads);
    for (const Matrix* p : params)
      if (!all_finite(*p)) throw DivergenceError("non-finite parameter after SGD step");
    if (on_epoch && (b + 1) % per_epoch == 0) on_epoch(epoch, model);
  }
}

TeacherResult train_teacher(const Dataset& train, const Dataset& test,
                            const GroupPartition& partition, const TeacherConfig& cfg) {
  TeacherResult out;
  out.model = Mlp::he_init(with_io(train.dim(), cfg.hidden, train.num_classes),
                           derive_seed(cfg.seed, "teacher-init"));
  double epoch_loss = 0.0;
  std::size_t batches = 0;
  auto objective = [&](const Matrix& logits, std::span<const std::size_t> rows, double& loss) {
    std::vector<std::size_t> labels;
    for (std::size_t r : rows) labels.push_back(train.labels[r]);
    CeResult ce = ce_loss(logits, labels);
    loss = ce.loss;
    epoch_loss += ce.loss;
    ++batches;
    return std::move(ce.grad);
  };
  auto on_epoch = [&](std::size_t, const Mlp&) {
    out.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    epoch_loss = 0.0;
    batches = 0;
  };
  train_loop(out.model, train, cfg.train, derive_seed(cfg.seed, "teacher-batches"), objective,
             on_epoch);
  out.report = evaluate(out.model, test, partition);
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json per_class = nlohmann::json::array();
  for (double v : r.per_class) per_class.push_back(num(v));
  return {{"head", num(r.head())},   {"medium", num(r.medium())}, {"tail", num(r.tail())},
          {"all", num(r.overall)},   {"per_class", per_class},    {"samples", r.samples}};
}

nlohmann::json to_json(const EpochLog& log) {
  nlohmann::json j{{"epoch", log.epoch},
                   {"loss", {{"total", log.total}, {"ce", log.ce}, {"distill", to_json(log.distill)}}},
                   {"accuracy", to_json(log.eval)}};
  if (log.identity_residual) j["identity_residual"] = *log.identity_residual;
  return j;
}

DistillResult distill(const Mlp& teacher, const Dataset& train, const Dataset& test,
                      const GroupPartition& partition, const DistillConfig& cfg,
                      DistillSinks sinks) {
  cfg.validate();
  if (teacher.num_classes() != train.num_classes || partition.num_classes() != train.num_classes)
    throw ShapeError("teacher, partition and dataset must agree on the class count");
  if (teacher.input_dim() != train.dim()) throw ShapeError("teacher input width differs from data");

  const ClassGroups& groups = partition.groups();
  const DistillOptions opts = cfg.options();
  DistillResult out;
  out.student = Mlp::he_init(with_io(train.dim(), cfg.student_hidden, train.num_classes),
                             derive_seed(cfg.seed, "student-init"));
  if (sinks.batch_stats_csv) write_bias_csv_header(*sinks.batch_stats_csv);

  EpochLog acc;
  std::size_t epoch_batches = 0;
  std::size_t batch_idx = 0;
  auto reset = [&] {
    acc = EpochLog{};
    acc.distill.intra.assign(groups.num_groups(), 0.0);
    if (cfg.method == Method::decomposed) acc.identity_residual = 0.0;
    epoch_batches = 0;
  };
  reset();

  auto objective = [&](const Matrix& zs, std::span<const std::size_t> rows, double& loss) {
    const Matrix zt = teacher.forward(gather_rows(train.features, rows));
    std::vector<std::size_t> labels;
    for (std::size_t r : rows) labels.push_back(train.labels[r]);

    const BatchGroupStats stats = batch_group_stats(inter_group_rows(zt, groups, opts.tau));
    if (sinks.batch_stats_csv) write_bias_csv_row(*sinks.batch_stats_csv, batch_idx, stats);
    ++batch_idx;

    LossSummary summary;
    Matrix grad;
    switch (cfg.method) {
      case Method::kd: {
        // Logged through the grouped decomposition so the parts are visible.
        summary = decomposed_kd_loss(zt, zs, groups, {1.0, 1.0}, opts).summary;
        summary.total = kd_loss(zt, zs, opts);
        grad = kd_grad(zt, zs, opts);
        break;
      }
      case Method::ltkd: {
        summary = ltkd_loss(zt, zs, groups, stats, cfg.weights, opts).summary;
        grad = ltkd_grad(zt, zs, groups, stats, cfg.weights, opts);
        break;
      }
      case Method::decomposed: {
        summary = decomposed_kd_loss(zt, zs, groups, cfg.weights, opts).summary;
        grad = decomposed_kd_grad(zt, zs, groups, cfg.weights, opts);
        for (std::size_t r = 0; r < zt.rows(); ++r) {
          const LossBreakdown b = decomposed_kd(zt.row(r), zs.row(r), groups, opts.tau);
          double rebuilt = b.inter_term;
          for (std::size_t G = 0; G < b.intra_terms.size(); ++G)
            rebuilt += b.intra_weights[G] * b.intra_terms[G];
          const double residual = std::abs(kd_row(zt.row(r), zs.row(r), opts.tau) - rebuilt);
          acc.identity_residual = std::max(*acc.identity_residual, residual);
        }
        break;
      }
    }

    const CeResult ce = ce_loss(zs, labels);
    if (cfg.ce_weight != 0.0) grad = add(grad, scale(ce.grad, cfg.ce_weight));
    loss = cfg.ce_weight * ce.loss + summary.total;

    acc.ce += ce.loss;
    acc.total += loss;
    acc.distill.total += summary.total;
    acc.distill.inter += summary.inter;
    for (std::size_t G = 0; G < summary.intra.size(); ++G) acc.distill.intra[G] += summary.intra[G];
    ++epoch_batches;
    return grad;
  };

  auto on_epoch = [&](std::size_t epoch, const Mlp& student) {
    const double n = static_cast<double>(epoch_batches);
    EpochLog log = acc;
    log.epoch = epoch;
    log.ce /= n;
    log.total /= n;
    log.distill.total /= n;
    log.distill.inter /= n;
    for (double& v : log.distill.intra) v /= n;
    log.eval = evaluate(student, test, partition);
    out.log.push_back(std::move(log));
    reset();
  };

  train_loop(out.student, train, cfg.train, derive_seed(cfg.seed, "student-batches"), objective,
             on_epoch);
  out.report = evaluate(out.student, test, partition);
  return out;
}

TeacherResult train_ce_student(const Dataset& train, const Dataset& test,
                               const GroupPartition& partition, const DistillConfig& cfg) {
  cfg.validate();
  TeacherResult out;
  out.model = Mlp::he_init(with_io(train.dim(), cfg.student_hidden, train.num_classes),
                           derive_seed(cfg.seed, "student-init"));
  auto objective = [&](const Matrix& logits, std::span<const std::size_t> rows, double& loss) {
    std::vector<std::size_t> labels;
    for (std::size_t r : rows) labels.push_back(train.labels[r]);
    CeResult ce = ce_loss(logits, labels);
    loss = ce.loss;
    return scale(ce.grad, cfg.ce_weight);
  };
  train_loop(out.model, train, cfg.train, derive_seed(cfg.seed, "student-batches"), objective);
  out.report = evaluate(out.model, test, partition);
  return out;
}

std::vector<BatchGroupStats> batch_bias_trace(const Mlp& teacher, const Dataset& data,
                                              const GroupPartition& partition,
                                              std::size_t batch_size, std::uint64_t seed,
                                              double tau) {
  if (teacher.num_classes() != partition.num_classes())
    throw ShapeError("teacher and partition disagree on the class count");
  std::vector<BatchGroupStats> out;
  for (const auto& rows : batch_schedule(data.size(), batch_size, seed, 1)) {
    const Matrix zt = teacher.forward(gather_rows(data.features, rows));
    out.push_back(batch_group_stats(inter_group_rows(zt, partition.groups(), tau)));
  }
  return out;
}

}  // namespace ltkd
