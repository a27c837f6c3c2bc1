#include "physiort/sqa.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "physiort/error.hpp"

namespace physiort::sqa {
namespace {

using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using CMapRow = Eigen::Map<const RowMat>;
using MapRow = Eigen::Map<RowMat>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

constexpr int kClasses = 2;
constexpr int kBad = static_cast<int>(Quality::bad);

struct ConvGeometry {
  int in_len = 0, out_len = 0, pad_left = 0;
};

ConvGeometry same_geometry(int in_len, int kernel, int stride) {
  ConvGeometry g;
  g.in_len = in_len;
  g.out_len = (in_len + stride - 1) / stride;
  const int total = std::max((g.out_len - 1) * stride + kernel - in_len, 0);
  g.pad_left = total / 2;
  return g;
}

std::vector<ConvGeometry> encoder_geometry(const Architecture& a) {
  std::vector<ConvGeometry> g;
  int len = a.input_length;
  for (int l = 0; l < a.encoder_layers(); ++l) {
    g.push_back(same_geometry(len, a.kernel, a.stride));
    len = g.back().out_len;
  }
  return g;
}

// x: (C, B*L) column-major.  col: (C*K, B*Lout).
void im2col(const double* x, int c_in, std::size_t batch, const ConvGeometry& g, int kernel, int stride, Mat& col) {
  col.setZero(static_cast<Eigen::Index>(c_in) * kernel, static_cast<Eigen::Index>(batch) * g.out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int o = 0; o < g.out_len; ++o) {
      double* dst = col.data() + col.rows() * static_cast<Eigen::Index>(b * g.out_len + o);
      for (int k = 0; k < kernel; ++k) {
        const int idx = o * stride + k - g.pad_left;
        if (idx < 0 || idx >= g.in_len) continue;
        const double* src = x + static_cast<std::size_t>(c_in) * (b * g.in_len + idx);
        for (int c = 0; c < c_in; ++c) dst[c * kernel + k] = src[c];
      }
    }
  }
}

void col2im(const Mat& col, int c_in, std::size_t batch, const ConvGeometry& g, int kernel, int stride, double* dx) {
  std::fill(dx, dx + static_cast<std::size_t>(c_in) * batch * g.in_len, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int o = 0; o < g.out_len; ++o) {
      const double* src = col.data() + col.rows() * static_cast<Eigen::Index>(b * g.out_len + o);
      for (int k = 0; k < kernel; ++k) {
        const int idx = o * stride + k - g.pad_left;
        if (idx < 0 || idx >= g.in_len) continue;
        double* dst = dx + static_cast<std::size_t>(c_in) * (b * g.in_len + idx);
        for (int c = 0; c < c_in; ++c) dst[c] += src[c * kernel + k];
      }
    }
  }
}

void relu(const std::vector<double>& in, std::vector<double>& out) {
  out.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

double log_sum_exp2(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

// ---------------------------------------------------------------------------
// Architecture

Architecture Architecture::reduced() {
  Architecture a;
  a.encoder_channels = {1, 2, 2};
  a.decoder_channels = 2;
  a.input_length = 32;
  return a;
}

int Architecture::encoded_length() const {
  int len = input_length;
  for (int l = 0; l < encoder_layers(); ++l) len = (len + stride - 1) / stride;
  return len;
}

int Architecture::output_bins() const {
  return (encoded_length() - 1) * stride - 2 * decoder_padding + decoder_kernel;
}

std::size_t Architecture::parameter_count() const {
  std::size_t n = 0;
  for (int l = 0; l < encoder_layers(); ++l) {
    n += static_cast<std::size_t>(encoder_channels[l + 1]) * encoder_channels[l] * kernel + encoder_channels[l + 1];
  }
  n += static_cast<std::size_t>(encoder_channels.back()) * decoder_channels * decoder_kernel + decoder_channels;
  n += static_cast<std::size_t>(kClasses) * decoder_channels + kClasses;
  return n;
}

void Architecture::validate() const {
  if (encoder_channels.size() < 2 || encoder_channels.front() != 1) {
    throw Error(Errc::ShapeViolation, "encoder must start from one input channel", "encoder_channels");
  }
  for (int c : encoder_channels) {
    if (c < 1) throw Error(Errc::ShapeViolation, "channel counts must be positive", "encoder_channels");
  }
  if (kernel < 1 || stride < 1 || decoder_channels < 1 || decoder_kernel < 1 || decoder_padding < 0 || input_length < 1) {
    throw Error(Errc::ShapeViolation, "non-positive layer dimension");
  }
  if (output_bins() < 1) throw Error(Errc::ShapeViolation, "decoder produces no bins");
}

nlohmann::json to_json(const Architecture& a) {
  return {{"encoder_channels", a.encoder_channels}, {"kernel", a.kernel},
          {"stride", a.stride},                     {"decoder_channels", a.decoder_channels},
          {"decoder_kernel", a.decoder_kernel},     {"decoder_padding", a.decoder_padding},
          {"input_length", a.input_length}};
}

Architecture architecture_from_json(const nlohmann::json& j) {
  Architecture a;
  try {
    a.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    a.kernel = j.at("kernel").get<int>();
    a.stride = j.at("stride").get<int>();
    a.decoder_channels = j.at("decoder_channels").get<int>();
    a.decoder_kernel = j.at("decoder_kernel").get<int>();
    a.decoder_padding = j.at("decoder_padding").get<int>();
    a.input_length = j.at("input_length").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("bad architecture header: ") + e.what());
  }
  a.validate();
  return a;
}

Model::Offsets Model::offsets() const {
  Offsets o;
  std::size_t pos = 0;
  for (int l = 0; l < arch.encoder_layers(); ++l) {
    const std::size_t cin = arch.encoder_channels[l], cout = arch.encoder_channels[l + 1];
    o.enc_w.push_back(pos);
    pos += cout * cin * arch.kernel;
    o.enc_b.push_back(pos);
    pos += cout;
  }
  const std::size_t cenc = arch.encoder_channels.back(), cdec = arch.decoder_channels;
  o.dec_w = pos;
  pos += cenc * cdec * arch.decoder_kernel;
  o.dec_b = pos;
  pos += cdec;
  o.out_w = pos;
  pos += kClasses * cdec;
  o.out_b = pos;
  return o;
}

Model init_model(std::uint64_t seed, const Architecture& arch) {
  arch.validate();
  Model m{arch, std::vector<double>(arch.parameter_count(), 0.0)};
  const auto o = m.offsets();
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t offset, std::size_t count, double fan_in) {
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / fan_in));
    for (std::size_t i = 0; i < count; ++i) m.params[offset + i] = nd(rng);
  };
  for (int l = 0; l < arch.encoder_layers(); ++l) {
    const double fan_in = static_cast<double>(arch.encoder_channels[l]) * arch.kernel;
    fill(o.enc_w[l], o.enc_b[l] - o.enc_w[l], fan_in);
  }
  // Each output sample of a stride-2 transposed conv sees kernel/stride taps per input channel.
  const double dec_fan_in = static_cast<double>(arch.encoder_channels.back()) * arch.decoder_kernel / arch.stride;
  fill(o.dec_w, o.dec_b - o.dec_w, dec_fan_in);
  fill(o.out_w, o.out_b - o.out_w, static_cast<double>(arch.decoder_channels));
  return m;
}

std::vector<double> z_normalize(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty()) return out;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  if (!(var > 1e-24)) return out;
  const double inv = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) * inv;
  return out;
}

// ---------------------------------------------------------------------------
// Forward / backward

ForwardCache forward_batch(const Model& model, std::span<const double> inputs, std::size_t batch) {
  const auto& a = model.arch;
  if (inputs.size() != batch * static_cast<std::size_t>(a.input_length)) {
    throw Error(Errc::ShapeViolation, "input size does not match batch x input_length");
  }
  const auto o = model.offsets();
  const auto geo = encoder_geometry(a);
  const int n_enc = a.encoder_layers();

  ForwardCache cache;
  cache.batch = batch;
  cache.pre.resize(n_enc + 1);
  cache.post.resize(n_enc + 2);
  cache.post[0].assign(inputs.begin(), inputs.end());

  Mat col;
  for (int l = 0; l < n_enc; ++l) {
    const int cin = a.encoder_channels[l], cout = a.encoder_channels[l + 1];
    im2col(cache.post[l].data(), cin, batch, geo[l], a.kernel, a.stride, col);
    const CMapRow w(model.params.data() + o.enc_w[l], cout, static_cast<Eigen::Index>(cin) * a.kernel);
    const CMapVec bias(model.params.data() + o.enc_b[l], cout);
    auto& z = cache.pre[l];
    z.resize(static_cast<std::size_t>(cout) * col.cols());
    MapMat zm(z.data(), cout, col.cols());
    zm.noalias() = w * col;
    zm.colwise() += bias;
    relu(z, cache.post[l + 1]);
  }

  // Transposed convolution.
  const int cenc = a.encoder_channels.back(), cdec = a.decoder_channels, kd = a.decoder_kernel;
  const int len_in = a.encoded_length(), len_out = a.output_bins();
  {
    const CMapRow w(model.params.data() + o.dec_w, cenc, static_cast<Eigen::Index>(cdec) * kd);
    const CMapMat x(cache.post[n_enc].data(), cenc, static_cast<Eigen::Index>(batch) * len_in);
    const Mat cols = w.transpose() * x;
    auto& z = cache.pre[n_enc];
    z.assign(static_cast<std::size_t>(cdec) * batch * len_out, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (int i = 0; i < len_in; ++i) {
        const double* src = cols.data() + cols.rows() * static_cast<Eigen::Index>(b * len_in + i);
        for (int k = 0; k < kd; ++k) {
          const int t = i * a.stride + k - a.decoder_padding;
          if (t < 0 || t >= len_out) continue;
          double* dst = z.data() + static_cast<std::size_t>(cdec) * (b * len_out + t);
          for (int c = 0; c < cdec; ++c) dst[c] += src[c * kd + k];
        }
      }
    }
    MapMat zm(z.data(), cdec, static_cast<Eigen::Index>(batch) * len_out);
    zm.colwise() += CMapVec(model.params.data() + o.dec_b, cdec);
    relu(z, cache.post[n_enc + 1]);
  }

  // Pointwise logits.
  const CMapRow w(model.params.data() + o.out_w, kClasses, cdec);
  const CMapMat h(cache.post[n_enc + 1].data(), cdec, static_cast<Eigen::Index>(batch) * len_out);
  cache.logits.resize(static_cast<std::size_t>(kClasses) * batch * len_out);
  MapMat lm(cache.logits.data(), kClasses, h.cols());
  lm.noalias() = w * h;
  lm.colwise() += CMapVec(model.params.data() + o.out_b, kClasses);
  return cache;
}

std::vector<double> probabilities_bad(const ForwardCache& cache, const Model&) {
  std::vector<double> p(cache.logits.size() / kClasses);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double l0 = cache.logits[2 * i], l1 = cache.logits[2 * i + 1];
    p[i] = std::exp(cache.logits[2 * i + kBad] - log_sum_exp2(l0, l1));
  }
  return p;
}

QualityVector forward(const Model& model, std::span<const double> segment) {
  if (segment.size() != static_cast<std::size_t>(model.arch.input_length)) {
    throw Error(Errc::ShapeViolation, "segment length " + std::to_string(segment.size()) + " != " +
                                          std::to_string(model.arch.input_length));
  }
  const auto z = z_normalize(segment);
  const auto cache = forward_batch(model, z, 1);
  const auto p = probabilities_bad(cache, model);
  QualityVector out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i].prob_bad = p[i];
    out[i].label = p[i] > 0.5 ? Quality::bad : Quality::good;
  }
  return out;
}

double loss(std::span<const double> logits, std::span<const Quality> truth) {
  if (logits.size() != 2 * truth.size() || truth.empty()) {
    throw Error(Errc::ShapeViolation, "logits and labels differ in length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int cls = static_cast<int>(truth[i]);
    total += log_sum_exp2(logits[2 * i], logits[2 * i + 1]) - logits[2 * i + cls];
  }
  return total / static_cast<double>(truth.size());
}

std::vector<double> backward(const Model& model, const ForwardCache& cache, std::span<const Quality> truth) {
  const auto& a = model.arch;
  const std::size_t batch = cache.batch;
  const int len_out = a.output_bins(), len_in = a.encoded_length();
  const std::size_t n_out = batch * static_cast<std::size_t>(len_out);
  if (truth.size() != n_out || cache.logits.size() != 2 * n_out) {
    throw Error(Errc::ShapeViolation, "labels do not match the cached forward pass");
  }
  const auto o = model.offsets();
  const auto geo = encoder_geometry(a);
  const int n_enc = a.encoder_layers();
  const int cenc = a.encoder_channels.back(), cdec = a.decoder_channels, kd = a.decoder_kernel;
  std::vector<double> grad(model.params.size(), 0.0);

  // Softmax cross entropy.
  Mat dlog(kClasses, static_cast<Eigen::Index>(n_out));
  const double scale = 1.0 / static_cast<double>(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double l0 = cache.logits[2 * i], l1 = cache.logits[2 * i + 1];
    const double lse = log_sum_exp2(l0, l1);
    const int cls = static_cast<int>(truth[i]);
    dlog(0, static_cast<Eigen::Index>(i)) = (std::exp(l0 - lse) - (cls == 0 ? 1.0 : 0.0)) * scale;
    dlog(1, static_cast<Eigen::Index>(i)) = (std::exp(l1 - lse) - (cls == 1 ? 1.0 : 0.0)) * scale;
  }

  // Pointwise layer.
  const CMapMat h(cache.post[n_enc + 1].data(), cdec, static_cast<Eigen::Index>(n_out));
  MapRow(grad.data() + o.out_w, kClasses, cdec).noalias() = dlog * h.transpose();
  MapVec(grad.data() + o.out_b, kClasses) = dlog.rowwise().sum();
  const CMapRow w_out(model.params.data() + o.out_w, kClasses, cdec);
  Mat dz = w_out.transpose() * dlog;
  {
    const auto& pre = cache.pre[n_enc];
    for (Eigen::Index i = 0; i < dz.size(); ++i) {
      if (!(pre[static_cast<std::size_t>(i)] > 0.0)) dz.data()[i] = 0.0;
    }
  }

  // Transposed convolution.
  MapVec(grad.data() + o.dec_b, cdec) = dz.rowwise().sum();
  Mat dcols = Mat::Zero(static_cast<Eigen::Index>(cdec) * kd, static_cast<Eigen::Index>(batch) * len_in);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int i = 0; i < len_in; ++i) {
      double* dst = dcols.data() + dcols.rows() * static_cast<Eigen::Index>(b * len_in + i);
      for (int k = 0; k < kd; ++k) {
        const int t = i * a.stride + k - a.decoder_padding;
        if (t < 0 || t >= len_out) continue;
        const double* src = dz.data() + static_cast<std::size_t>(cdec) * (b * len_out + t);
        for (int c = 0; c < cdec; ++c) dst[c * kd + k] = src[c];
      }
    }
  }
  const CMapMat x_dec(cache.post[n_enc].data(), cenc, static_cast<Eigen::Index>(batch) * len_in);
  MapRow(grad.data() + o.dec_w, cenc, static_cast<Eigen::Index>(cdec) * kd).noalias() = x_dec * dcols.transpose();
  const CMapRow w_dec(model.params.data() + o.dec_w, cenc, static_cast<Eigen::Index>(cdec) * kd);
  Mat dx = w_dec * dcols;

  // Encoder, last layer first. dx holds the gradient w.r.t. post[l + 1].
  Mat col, dcol;
  std::vector<double> dprev;
  for (int l = n_enc - 1; l >= 0; --l) {
    const int cin = a.encoder_channels[l], cout = a.encoder_channels[l + 1];
    const auto& pre = cache.pre[l];
    for (Eigen::Index i = 0; i < dx.size(); ++i) {
      if (!(pre[static_cast<std::size_t>(i)] > 0.0)) dx.data()[i] = 0.0;
    }
    const MapMat dzl(dx.data(), cout, static_cast<Eigen::Index>(batch) * geo[l].out_len);
    im2col(cache.post[l].data(), cin, batch, geo[l], a.kernel, a.stride, col);
    MapRow(grad.data() + o.enc_w[l], cout, static_cast<Eigen::Index>(cin) * a.kernel).noalias() = dzl * col.transpose();
    MapVec(grad.data() + o.enc_b[l], cout) = dzl.rowwise().sum();
    if (l == 0) break;
    const CMapRow w(model.params.data() + o.enc_w[l], cout, static_cast<Eigen::Index>(cin) * a.kernel);
    dcol.noalias() = w.transpose() * dzl;
    dprev.resize(static_cast<std::size_t>(cin) * batch * geo[l].in_len);
    col2im(dcol, cin, batch, geo[l], a.kernel, a.stride, dprev.data());
    dx = CMapMat(dprev.data(), cin, static_cast<Eigen::Index>(batch) * geo[l].in_len);
  }
  return grad;
}

AdamState make_adam(const Model& model) {
  AdamState s;
  s.m.assign(model.params.size(), 0.0);
  s.v.assign(model.params.size(), 0.0);
  return s;
}

void adam_step(AdamState& s, Model& model, std::span<const double> grad) {
  if (grad.size() != model.params.size() || s.m.size() != grad.size() || s.v.size() != grad.size()) {
    throw Error(Errc::ShapeViolation, "gradient and moment shapes must match the parameters");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mhat = s.m[i] / c1, vhat = s.v[i] / c2;
    model.params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

// ---------------------------------------------------------------------------
// Training

SplitIndices split_by_group(const std::vector<synth::LabeledSegment>& corpus, double validation_fraction,
                            std::uint64_t seed) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "training corpus is empty");
  std::set<int> unique;
  for (const auto& s : corpus) unique.insert(s.group);
  std::vector<int> groups(unique.begin(), unique.end());
  if (groups.size() < 2) throw Error(Errc::EmptyCorpus, "a group-disjoint split needs at least two groups");
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::shuffle(groups.begin(), groups.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(groups.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, groups.size() - 1);

  SplitIndices out;
  out.validation_groups.assign(groups.begin(), groups.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.train_groups.assign(groups.begin() + static_cast<std::ptrdiff_t>(n_val), groups.end());
  std::sort(out.validation_groups.begin(), out.validation_groups.end());
  std::sort(out.train_groups.begin(), out.train_groups.end());
  const std::set<int> val(out.validation_groups.begin(), out.validation_groups.end());
  for (std::size_t i = 0; i < corpus.size(); ++i) (val.count(corpus[i].group) ? out.validation : out.train).push_back(i);
  return out;
}

namespace {

void check_segment(const synth::LabeledSegment& s, const Architecture& a) {
  if (s.samples.size() != static_cast<std::size_t>(a.input_length) ||
      s.quality_bins.size() != static_cast<std::size_t>(a.output_bins())) {
    throw Error(Errc::ShapeViolation, "corpus segment does not match the model shape");
  }
}

double accuracy_on(const Model& model, const std::vector<std::vector<double>>& inputs,
                   const std::vector<synth::LabeledSegment>& corpus, std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  const std::size_t len = static_cast<std::size_t>(model.arch.input_length);
  const std::size_t bins = static_cast<std::size_t>(model.arch.output_bins());
  std::size_t correct = 0;
  std::vector<double> batch;
  for (std::size_t pos = 0; pos < idx.size(); pos += 256) {
    const std::size_t n = std::min<std::size_t>(256, idx.size() - pos);
    batch.resize(n * len);
    for (std::size_t j = 0; j < n; ++j) std::copy(inputs[idx[pos + j]].begin(), inputs[idx[pos + j]].end(), batch.begin() + j * len);
    const auto p = probabilities_bad(forward_batch(model, batch, n), model);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t b = 0; b < bins; ++b) {
        const Quality pred = p[j * bins + b] > 0.5 ? Quality::bad : Quality::good;
        correct += pred == corpus[idx[pos + j]].quality_bins[b];
      }
    }
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size() * bins);
}

}  // namespace

TrainResult train(const std::vector<synth::LabeledSegment>& corpus, const TrainOptions& opt) {
  const auto split = split_by_group(corpus, opt.validation_fraction, opt.seed);
  if (opt.batch_size == 0) throw Error(Errc::ShapeViolation, "batch size must be positive");
  for (const auto& s : corpus) check_segment(s, opt.arch);

  std::vector<std::vector<double>> inputs;
  inputs.reserve(corpus.size());
  for (const auto& s : corpus) inputs.push_back(z_normalize(s.samples.data));

  TrainResult result;
  result.model = init_model(opt.seed, opt.arch);
  result.train_groups = split.train_groups;
  result.validation_groups = split.validation_groups;
  if (opt.prior_bias) {
    std::size_t bad = 0, total = 0;
    for (std::size_t i : split.train) {
      bad += corpus[i].bad_bins();
      total += corpus[i].quality_bins.size();
    }
    const double p = std::clamp(static_cast<double>(bad) / static_cast<double>(std::max<std::size_t>(total, 1)), 1e-3, 1.0 - 1e-3);
    const auto o = result.model.offsets();
    result.model.params[o.out_b + kBad] = std::log(p / (1.0 - p));
  }
  result.initial_accuracy = accuracy_on(result.model, inputs, corpus, split.validation);

  auto adam = make_adam(result.model);
  std::mt19937_64 rng(opt.seed + 1);
  std::vector<std::size_t> order = split.train;
  const std::size_t len = static_cast<std::size_t>(opt.arch.input_length);
  const std::size_t bins = static_cast<std::size_t>(opt.arch.output_bins());
  std::vector<double> batch;
  std::vector<Quality> labels;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t pos = 0; pos < order.size(); pos += opt.batch_size) {
      const std::size_t n = std::min(opt.batch_size, order.size() - pos);
      batch.resize(n * len);
      labels.resize(n * bins);
      for (std::size_t j = 0; j < n; ++j) {
        const auto& seg = corpus[order[pos + j]];
        std::copy(inputs[order[pos + j]].begin(), inputs[order[pos + j]].end(), batch.begin() + j * len);
        std::copy(seg.quality_bins.begin(), seg.quality_bins.end(), labels.begin() + j * bins);
      }
      const auto cache = forward_batch(result.model, batch, n);
      loss_sum += loss(cache.logits, labels) * static_cast<double>(n);
      adam_step(adam, result.model, backward(result.model, cache, labels));
    }
    result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()),
                              accuracy_on(result.model, inputs, corpus, split.validation)});
  }
  return result;
}

std::vector<QualityVector> predict(const Model& model, const std::vector<std::vector<double>>& segments) {
  std::vector<QualityVector> out;
  out.reserve(segments.size());
  const std::size_t len = static_cast<std::size_t>(model.arch.input_length);
  std::vector<double> batch;
  for (std::size_t pos = 0; pos < segments.size(); pos += 256) {
    const std::size_t n = std::min<std::size_t>(256, segments.size() - pos);
    batch.resize(n * len);
    for (std::size_t j = 0; j < n; ++j) {
      if (segments[pos + j].size() != len) throw Error(Errc::ShapeViolation, "segment length mismatch");
      const auto z = z_normalize(segments[pos + j]);
      std::copy(z.begin(), z.end(), batch.begin() + j * len);
    }
    const auto p = probabilities_bad(forward_batch(model, batch, n), model);
    const std::size_t bins = p.size() / n;
    for (std::size_t j = 0; j < n; ++j) {
      QualityVector q(bins);
      for (std::size_t b = 0; b < bins; ++b) {
        q[b].prob_bad = p[j * bins + b];
        q[b].label = q[b].prob_bad > 0.5 ? Quality::bad : Quality::good;
      }
      out.push_back(std::move(q));
    }
  }
  return out;
}

double bin_accuracy(const Model& model, const std::vector<synth::LabeledSegment>& segments,
                    std::span<const std::size_t> indices) {
  std::vector<std::vector<double>> inputs(segments.size());
  for (std::size_t i : indices) {
    check_segment(segments[i], model.arch);
    inputs[i] = z_normalize(segments[i].samples.data);
  }
  return accuracy_on(model, inputs, segments, indices);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kFormat = "physiort-sqa";
constexpr int kVersion = 1;

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

void save_model(const Model& model, std::ostream& out) {
  const nlohmann::json header{{"format", kFormat},
                              {"version", kVersion},
                              {"architecture", to_json(model.arch)},
                              {"parameters", model.params.size()},
                              {"dtype", "float32-le"}};
  out << header.dump() << '\n';
  for (double p : model.params) {
    const auto f = static_cast<float>(p);
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(f));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw Error(Errc::IoFailure, "failed to write model");
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot open " + path.string() + " for writing");
  save_model(model, out);
}

Model load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::CorruptFile, "model file has no header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::CorruptFile, "model header is not JSON");
  }
  if (!header.is_object() || header.value("format", "") != kFormat || header.value("version", 0) != kVersion ||
      header.value("dtype", "") != "float32-le" || !header.contains("architecture")) {
    throw Error(Errc::CorruptFile, "unrecognized model header");
  }
  Model m;
  m.arch = architecture_from_json(header["architecture"]);
  const std::size_t n = m.arch.parameter_count();
  if (header.value("parameters", std::size_t{0}) != n) throw Error(Errc::CorruptFile, "parameter count mismatch");
  m.params.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw Error(Errc::CorruptFile, "model file truncated");
    m.params[i] = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::CorruptFile, "trailing bytes after parameters");
  return m;
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  return load_model(in);
}

// ---------------------------------------------------------------------------
// Streaming

StreamAssessor::StreamAssessor(const Model& model, double fs) : model_(model), fs_(fs) {
  if (!(fs > 0.0)) throw Error(Errc::RangeViolation, "sampling rate must be positive");
  if (model.arch.input_length != static_cast<int>(kSegmentSamples)) {
    throw Error(Errc::ShapeViolation, "streaming needs a 512-sample model");
  }
}

std::vector<StreamBin> StreamAssessor::push(std::span<const double> samples) {
  buffer_.insert(buffer_.end(), samples.begin(), samples.end());
  received_ += samples.size();
  std::vector<StreamBin> out;
  const double ratio = fs_ / kModelFs;
  for (;;) {
    const std::size_t first = segments_done_ * kSegmentSamples;
    const std::size_t last = first + kSegmentSamples - 1;
    const double u_last = static_cast<double>(last) * ratio;
    const auto need = static_cast<std::size_t>(std::ceil(u_last - 1e-9));
    if (need >= received_) break;

    std::vector<double> seg(kSegmentSamples);
    for (std::size_t j = 0; j < kSegmentSamples; ++j) {
      const double u = static_cast<double>(first + j) * ratio;
      auto i0 = static_cast<std::size_t>(std::floor(u + 1e-9));
      const double frac = std::max(0.0, u - static_cast<double>(i0));
      const double y0 = buffer_[i0 - buffer_start_];
      const double y1 = i0 + 1 < received_ ? buffer_[i0 + 1 - buffer_start_] : y0;
      seg[j] = frac < 1e-9 ? y0 : y0 + frac * (y1 - y0);
    }
    const auto q = forward(model_, seg);
    for (std::size_t b = 0; b < q.size(); ++b) {
      out.push_back({static_cast<double>(segments_done_) * synth::kCorpusSeconds + static_cast<double>(b) * 0.5, q[b]});
    }
    ++segments_done_;
    const auto keep_from = static_cast<std::size_t>(std::floor(static_cast<double>(first + kSegmentSamples) * ratio + 1e-9));
    if (keep_from > buffer_start_) {
      const std::size_t drop = std::min(keep_from - buffer_start_, buffer_.size());
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(drop));
      buffer_start_ += drop;
    }
  }
  return out;
}

std::size_t bin_of_sample(std::size_t i, double fs) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(i) / fs / synth::kQualityBinSeconds + 1e-9));
}

StreamAnnotation infer_stream(const Model& model, const dsp::SampleSeries& series) {
  StreamAssessor assessor(model, series.fs);
  StreamAnnotation out;
  out.bins = assessor.push(series.data);
  out.per_sample.assign(series.size(), kUnassessed);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t bin = bin_of_sample(i, series.fs);
    if (bin >= out.bins.size()) break;
    out.per_sample[i] = static_cast<std::int8_t>(out.bins[bin].quality.label);
  }
  return out;
}

}  // namespace physiort::sqa
