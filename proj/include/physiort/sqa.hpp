#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <json.hpp>

#include "physiort/dsp.hpp"
#include "physiort/synth.hpp"

namespace physiort::sqa {

using synth::Quality;

constexpr double kModelFs = 64.0;
constexpr std::size_t kSegmentSamples = 512;
constexpr std::size_t kBins = 16;

// Encoder: same-padded strided convolutions, each halving the length.
// Decoder: one transposed convolution doubling the length, then a pointwise
// convolution to two logits per bin.
struct Architecture {
  std::vector<int> encoder_channels{1, 16, 32, 32, 64, 64, 64};
  int kernel = 7;
  int stride = 2;
  int decoder_channels = 32;
  int decoder_kernel = 4;
  int decoder_padding = 1;
  int input_length = static_cast<int>(kSegmentSamples);

  static Architecture reduced();  // 1 -> 2 -> 2, 32 samples in, 16 bins out

  int encoder_layers() const { return static_cast<int>(encoder_channels.size()) - 1; }
  int encoded_length() const;
  int output_bins() const;
  std::size_t parameter_count() const;
  void validate() const;  // ShapeViolation
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

nlohmann::json to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::json& j);

// All parameters live in one flat vector; layers address it through offsets.
//   encoder layer l: weight [out][in][kernel], bias [out]
//   transposed conv: weight [in][out][kernel], bias [out]
//   pointwise:       weight [2][decoder_channels], bias [2]
struct Model {
  Architecture arch;
  std::vector<double> params;

  struct Offsets {
    std::vector<std::size_t> enc_w, enc_b;
    std::size_t dec_w = 0, dec_b = 0, out_w = 0, out_b = 0;
  };
  Offsets offsets() const;
};

// He (fan-in) normal weights, zero biases.
Model init_model(std::uint64_t seed, const Architecture& arch = {});

struct BinQuality {
  Quality label = Quality::good;
  double prob_bad = 0.0;
};
using QualityVector = std::vector<BinQuality>;

// Mean 0, unit (population) variance; a constant segment maps to zeros.
std::vector<double> z_normalize(std::span<const double> x);

// Activations of one batched forward pass, kept for backward().
struct ForwardCache {
  std::size_t batch = 0;
  std::vector<std::vector<double>> pre;   // pre-activation per layer
  std::vector<std::vector<double>> post;  // post-activation per layer; post[0] is the input
  std::vector<double> logits;             // [batch][bins][2]
};

// Inputs are batch-major, input_length samples each, already normalized.
ForwardCache forward_batch(const Model& model, std::span<const double> inputs, std::size_t batch);
std::vector<double> probabilities_bad(const ForwardCache& cache, const Model& model);

// Normalizes and infers one segment. Throws ShapeViolation on a length mismatch.
QualityVector forward(const Model& model, std::span<const double> segment);

// Mean per-bin two-class cross entropy of logits [n][2] against labels.
double loss(std::span<const double> logits, std::span<const Quality> truth);

// Gradient of the mean cross entropy over the whole batch, same layout as params.
std::vector<double> backward(const Model& model, const ForwardCache& cache, std::span<const Quality> truth);

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m, v;
};
AdamState make_adam(const Model& model);
void adam_step(AdamState& state, Model& model, std::span<const double> grad);

struct TrainOptions {
  int epochs = 15;
  std::size_t batch_size = 256;
  double validation_fraction = 0.2;
  std::uint64_t seed = 1;
  bool prior_bias = true;  // start the bad-class logit at the training log-odds
  Architecture arch{};
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double bin_accuracy = 0.0;  // held-out
};

struct TrainResult {
  Model model;
  double initial_accuracy = 0.0;
  std::vector<EpochMetrics> history;
  std::vector<int> train_groups, validation_groups;
};

// Group-disjoint split, shuffled mini-batches, Adam. Throws EmptyCorpus.
TrainResult train(const std::vector<synth::LabeledSegment>& corpus, const TrainOptions& options);

struct SplitIndices {
  std::vector<std::size_t> train, validation;
  std::vector<int> train_groups, validation_groups;
};
SplitIndices split_by_group(const std::vector<synth::LabeledSegment>& corpus, double validation_fraction,
                            std::uint64_t seed);

std::vector<QualityVector> predict(const Model& model, const std::vector<std::vector<double>>& segments);
double bin_accuracy(const Model& model, const std::vector<synth::LabeledSegment>& segments,
                    std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Model files: one JSON header line, then little-endian float32 parameters.

void save_model(const Model& model, std::ostream& out);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(std::istream& in);  // CorruptFile
Model load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Streaming inference on arbitrary sampling rates.

constexpr std::int8_t kUnassessed = -1;

struct StreamBin {
  double start = 0.0;  // seconds since the first sample
  BinQuality quality;
};

// Linear resampling to 64 Hz; every completed 8 s segment yields 16 bins.
class StreamAssessor {
 public:
  StreamAssessor(const Model& model, double fs);
  std::vector<StreamBin> push(std::span<const double> samples);
  std::size_t segments_done() const noexcept { return segments_done_; }

 private:
  const Model& model_;
  double fs_;
  std::vector<double> buffer_;  // raw samples from buffer_start_ on
  std::size_t buffer_start_ = 0;
  std::size_t received_ = 0;
  std::size_t segments_done_ = 0;
};

struct StreamAnnotation {
  std::vector<StreamBin> bins;
  std::vector<std::int8_t> per_sample;  // Quality value, or kUnassessed
};

// Index of the 0.5 s bin that holds raw sample i.
std::size_t bin_of_sample(std::size_t i, double fs);

StreamAnnotation infer_stream(const Model& model, const dsp::SampleSeries& series);

}  // namespace physiort::sqa
