#include "coxsgd/cox_mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace coxsgd {

namespace {

constexpr int kCheckpointVersion = 1;

std::string mask_string(const double* data, Index n) {
  std::string s(static_cast<std::size_t>(n), '0');
  for (Index i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = data[i] != 0.0 ? '1' : '0';
  return s;
}

}  // namespace

MlpCoxModel::MlpCoxModel(std::vector<Index> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("MlpCoxModel: need at least input and output widths");
  if (widths_.back() != 1) throw std::invalid_argument("MlpCoxModel: output width must be 1");
  for (Index w : widths_) {
    if (w < 1) throw std::invalid_argument("MlpCoxModel: widths must be positive");
  }
  for (std::size_t k = 0; k + 1 < widths_.size(); ++k) {
    weights_.push_back(Eigen::MatrixXd::Zero(widths_[k + 1], widths_[k]));
    biases_.push_back(Eigen::VectorXd::Zero(widths_[k + 1]));
    weight_masks_.push_back(Eigen::MatrixXd::Ones(widths_[k + 1], widths_[k]));
    bias_masks_.push_back(Eigen::VectorXd::Ones(widths_[k + 1]));
  }
}

MlpCoxModel MlpCoxModel::initialized(std::vector<Index> widths, Rng& rng, std::optional<Index> nonzeros) {
  MlpCoxModel m(std::move(widths));
  for (std::size_t k = 0; k < m.weights_.size(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(m.widths_[k]));
    for (Index r = 0; r < m.weights_[k].rows(); ++r)
      for (Index c = 0; c < m.weights_[k].cols(); ++c) m.weights_[k](r, c) = rng.uniform(-bound, bound);
    for (Index r = 0; r < m.biases_[k].size(); ++r) m.biases_[k](r) = rng.uniform(-bound, bound);
  }
  if (nonzeros) {
    const Index total = m.parameter_count();
    if (*nonzeros < 1 || *nonzeros > total) throw std::invalid_argument("MlpCoxModel: sparsity out of range");
    MiniBatch keep = *nonzeros == total ? MiniBatch{all_indices(total)} : sample_subset(total, *nonzeros, rng);
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(total);
    for (Index i : keep.indices) mask(i) = 1.0;
    m.set_mask(mask);
  }
  return m;
}

Eigen::VectorXd MlpCoxModel::forward(const RowMatrix& x) const {
  if (x.cols() != input_dim()) throw std::invalid_argument("MlpCoxModel: input dimension mismatch");
  Eigen::MatrixXd a = x;
  const std::size_t layers = weights_.size();
  for (std::size_t k = 0; k < layers; ++k) {
    Eigen::MatrixXd z = a * weights_[k].transpose();
    z.rowwise() += biases_[k].transpose();
    a = k + 1 < layers ? Eigen::MatrixXd(z.cwiseMax(0.0)) : z;
  }
  Eigen::VectorXd f = a.col(0);
  if (output_bound_) f = f.cwiseMax(-*output_bound_).cwiseMin(*output_bound_);
  return f;
}

double MlpCoxModel::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  RowMatrix row = x;
  return forward(row)(0);
}

Eigen::VectorXd MlpCoxModel::predict(const Dataset& data) const { return forward(data.covariates()); }

void MlpCoxModel::set_layer(Index k, const Eigen::MatrixXd& weight, const Eigen::VectorXd& bias) {
  auto& w = weights_.at(static_cast<std::size_t>(k));
  auto& v = biases_.at(static_cast<std::size_t>(k));
  if (weight.rows() != w.rows() || weight.cols() != w.cols() || bias.size() != v.size()) {
    throw std::invalid_argument("MlpCoxModel::set_layer: shape mismatch");
  }
  w = weight;
  v = bias;
  enforce_constraints();
}

Index MlpCoxModel::parameter_count() const noexcept {
  Index n = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) n += weights_[k].size() + biases_[k].size();
  return n;
}

Index MlpCoxModel::active_parameter_count() const {
  Index n = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    n += static_cast<Index>((weight_masks_[k].array() != 0.0).count() + (bias_masks_[k].array() != 0.0).count());
  }
  return n;
}

Eigen::VectorXd MlpCoxModel::parameters() const {
  Eigen::VectorXd flat(parameter_count());
  Index at = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const auto& w = weights_[k];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) flat(at++) = w(r, c);
    flat.segment(at, biases_[k].size()) = biases_[k];
    at += biases_[k].size();
  }
  return flat;
}

void MlpCoxModel::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("MlpCoxModel: parameter vector length mismatch");
  Index at = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    auto& w = weights_[k];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = flat(at++);
    biases_[k] = flat.segment(at, biases_[k].size());
    at += biases_[k].size();
  }
  enforce_constraints();
}

Eigen::VectorXd MlpCoxModel::mask() const {
  Eigen::VectorXd flat(parameter_count());
  Index at = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const auto& w = weight_masks_[k];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) flat(at++) = w(r, c);
    flat.segment(at, bias_masks_[k].size()) = bias_masks_[k];
    at += bias_masks_[k].size();
  }
  return flat;
}

void MlpCoxModel::set_mask(const Eigen::VectorXd& flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("MlpCoxModel: mask length mismatch");
  Index at = 0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    auto& w = weight_masks_[k];
    for (Index r = 0; r < w.rows(); ++r)
      for (Index c = 0; c < w.cols(); ++c) w(r, c) = flat(at++) != 0.0 ? 1.0 : 0.0;
    for (Index r = 0; r < bias_masks_[k].size(); ++r) bias_masks_[k](r) = flat(at++) != 0.0 ? 1.0 : 0.0;
  }
  enforce_constraints();
}

void MlpCoxModel::set_theory_mode(bool on) {
  theory_mode_ = on;
  enforce_constraints();
}

void MlpCoxModel::enforce_constraints() {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    weights_[k] = weights_[k].cwiseProduct(weight_masks_[k]);
    biases_[k] = biases_[k].cwiseProduct(bias_masks_[k]);
    if (theory_mode_) {
      weights_[k] = weights_[k].cwiseMax(-1.0).cwiseMin(1.0);
      biases_[k] = biases_[k].cwiseMax(-1.0).cwiseMin(1.0);
    }
  }
}

MlpLossGrad batch_loss_grad(const Dataset& data, const MiniBatch& batch, const MlpCoxModel& model) {
  if (data.dim() != model.input_dim()) throw std::invalid_argument("batch_loss_grad: model/data dimension mismatch");
  const Index s = batch.size();
  const Index layers = model.depth() + 1;

  // Forward pass, keeping each layer's input activation.
  std::vector<Eigen::MatrixXd> act;
  act.reserve(static_cast<std::size_t>(layers) + 1);
  Eigen::MatrixXd a(s, data.dim());
  for (Index r = 0; r < s; ++r) a.row(r) = data.x(batch.indices[static_cast<std::size_t>(r)]);
  act.push_back(a);
  Eigen::VectorXd f;
  for (Index k = 0; k < layers; ++k) {
    Eigen::MatrixXd z = act.back() * model.weight(k).transpose();
    z.rowwise() += model.bias(k).transpose();
    if (k + 1 < layers) {
      act.push_back(z.cwiseMax(0.0));
    } else {
      f = z.col(0);
    }
  }
  Eigen::VectorXd upstream_clip = Eigen::VectorXd::Ones(s);
  if (const auto& bound = model.output_bound()) {
    for (Index r = 0; r < s; ++r) {
      if (std::abs(f(r)) > *bound) {
        f(r) = std::copysign(*bound, f(r));
        upstream_clip(r) = 0.0;
      }
    }
  }

  const PartialLikelihood pl = partial_likelihood(
      data, batch.indices, std::span<const double>(f.data(), static_cast<std::size_t>(s)), static_cast<double>(s), true);

  MlpLossGrad out;
  out.loss = pl.loss;
  out.events = pl.events;
  out.gradient = Eigen::VectorXd::Zero(model.parameter_count());

  // Offsets of each layer's block in the flat layout.
  std::vector<Index> offset(static_cast<std::size_t>(layers) + 1, 0);
  for (Index k = 0; k < layers; ++k) {
    offset[static_cast<std::size_t>(k) + 1] =
        offset[static_cast<std::size_t>(k)] + model.weight(k).size() + model.bias(k).size();
  }

  Eigen::MatrixXd delta = pl.df.cwiseProduct(upstream_clip);  // s x 1
  for (Index k = layers - 1; k >= 0; --k) {
    const Eigen::MatrixXd& input = act[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd dW = delta.transpose() * input;  // p_{k+1} x p_k
    const Eigen::VectorXd dv = delta.colwise().sum().transpose();
    Index at = offset[static_cast<std::size_t>(k)];
    for (Index r = 0; r < dW.rows(); ++r)
      for (Index c = 0; c < dW.cols(); ++c) out.gradient(at++) = dW(r, c);
    out.gradient.segment(at, dv.size()) = dv;
    if (k > 0) {
      Eigen::MatrixXd back = delta * model.weight(k);
      delta = back.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
    }
  }
  out.gradient = out.gradient.cwiseProduct(model.mask());
  return out;
}

TraceEstimate hutchinson_trace(const StochasticGradient& gradient, const Eigen::VectorXd& params,
                               const Eigen::VectorXd& mask, Index probes, Rng& rng, double step_scale) {
  if (probes < 1) throw std::invalid_argument("hutchinson_trace: probes must be >= 1");
  if (mask.size() != params.size()) throw std::invalid_argument("hutchinson_trace: mask length mismatch");
  const double h = step_scale * (1.0 + params.norm());
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(probes));
  for (Index q = 0; q < probes; ++q) {
    Eigen::VectorXd z(params.size());
    for (Index i = 0; i < z.size(); ++i) z(i) = mask(i) != 0.0 ? rng.rademacher() : 0.0;
    Rng batch_rng = rng.split(stream_tag(rng.stream(), rng.counter(), static_cast<std::uint64_t>(q)));
    Rng plus_rng = batch_rng, minus_rng = batch_rng;
    const Eigen::VectorXd gp = gradient(params + h * z, plus_rng);
    const Eigen::VectorXd gm = gradient(params - h * z, minus_rng);
    samples.push_back(z.dot(gp - gm) / (2.0 * h));
  }
  TraceEstimate est;
  est.probes = probes;
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(probes);
  est.value = mean;
  if (probes > 1) {
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    est.standard_error = std::sqrt(ss / static_cast<double>(probes - 1) / static_cast<double>(probes));
  }
  return est;
}

TraceEstimate hessian_trace_estimate(const Dataset& data, const MlpCoxModel& model, Index s, Index probes, Rng& rng) {
  MlpCoxModel work = model;
  const StochasticGradient grad = [&data, &work, s](const Eigen::VectorXd& params, Rng& r) {
    work.set_parameters(params);
    return batch_loss_grad(data, sample_subset(data.size(), s, r), work).gradient;
  };
  return hutchinson_trace(grad, model.parameters(), model.mask(), probes, rng);
}

nlohmann::json checkpoint_json(const MlpCoxModel& model) {
  nlohmann::json j;
  j["format"] = "coxsgd-mlp";
  j["version"] = kCheckpointVersion;
  j["widths"] = model.widths();
  j["theory_mode"] = model.theory_mode();
  j["output_bound"] = model.output_bound() ? nlohmann::json(*model.output_bound()) : nlohmann::json(nullptr);
  j["layers"] = nlohmann::json::array();
  for (Index k = 0; k <= model.depth(); ++k) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = model.weight(k);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wm = model.weight_mask(k);
    nlohmann::json layer;
    layer["rows"] = w.rows();
    layer["cols"] = w.cols();
    layer["weight"] = std::vector<double>(w.data(), w.data() + w.size());
    layer["bias"] = std::vector<double>(model.bias(k).data(), model.bias(k).data() + model.bias(k).size());
    layer["weight_mask"] = mask_string(wm.data(), wm.size());
    layer["bias_mask"] = mask_string(model.bias_mask(k).data(), model.bias_mask(k).size());
    j["layers"].push_back(std::move(layer));
  }
  return j;
}

MlpCoxModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "coxsgd-mlp") throw std::invalid_argument("checkpoint: wrong format tag");
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
  }
  MlpCoxModel m(j.at("widths").get<std::vector<Index>>());
  const auto& layers = j.at("layers");
  if (static_cast<Index>(layers.size()) != m.depth() + 1) throw std::invalid_argument("checkpoint: layer count");

  Eigen::VectorXd params(m.parameter_count()), mask(m.parameter_count());
  Index at = 0;
  for (Index k = 0; k <= m.depth(); ++k) {
    const auto& layer = layers.at(static_cast<std::size_t>(k));
    const auto w = layer.at("weight").get<std::vector<double>>();
    const auto v = layer.at("bias").get<std::vector<double>>();
    const auto wm = layer.at("weight_mask").get<std::string>();
    const auto vm = layer.at("bias_mask").get<std::string>();
    if (static_cast<Index>(w.size()) != m.weight(k).size() || static_cast<Index>(v.size()) != m.bias(k).size() ||
        wm.size() != w.size() || vm.size() != v.size()) {
      throw std::invalid_argument("checkpoint: layer " + std::to_string(k) + " shape mismatch");
    }
    for (std::size_t i = 0; i < w.size(); ++i, ++at) {
      params(at) = w[i];
      mask(at) = wm[i] == '1' ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < v.size(); ++i, ++at) {
      params(at) = v[i];
      mask(at) = vm[i] == '1' ? 1.0 : 0.0;
    }
  }
  m.set_mask(mask);
  m.set_parameters(params);
  if (j.contains("output_bound") && !j.at("output_bound").is_null()) m.set_output_bound(j.at("output_bound").get<double>());
  m.set_theory_mode(j.value("theory_mode", false));
  return m;
}

void save_checkpoint(const std::filesystem::path& path, const MlpCoxModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(model).dump(2) << '\n';
}

MlpCoxModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return model_from_checkpoint(nlohmann::json::parse(in));
}

}  // namespace coxsgd
