#include "spectranet/decoder.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace spectranet {

namespace {

constexpr int kStride = 4;
constexpr char kMagic[] = "spectranet model";
constexpr int kFormatVersion = 1;

ConvTransposeLayer make_upsample_layer(long c_in, long c_out, int kernel) {
  // Output before crop is 4*Lt + (kernel - 4); the excess is trimmed
  // symmetrically so the layer maps Lt to exactly 4*Lt without temporal bias.
  ConvTransposeLayer layer;
  layer.in_channels = c_in;
  layer.out_channels = c_out;
  layer.kernel = kernel;
  layer.stride = kStride;
  const long excess = kernel - kStride;
  layer.crop_left = excess / 2;
  layer.crop_right = excess - layer.crop_left;
  return layer;
}

ConvTransposeLayer make_output_layer(long c_in, long c_out, int kernel) {
  // Stride 1 adds kernel - 1 positions; crop floor((k-1)/2) from the start
  // and the remainder from the end to preserve the length.
  ConvTransposeLayer layer;
  layer.in_channels = c_in;
  layer.out_channels = c_out;
  layer.kernel = kernel;
  layer.stride = 1;
  layer.crop_left = (kernel - 1) / 2;
  layer.crop_right = (kernel - 1) - layer.crop_left;
  return layer;
}

void init_weight(ConvTransposeLayer& layer, RngStream& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(layer.in_channels * layer.kernel));
  layer.weight.resize(layer.in_channels, layer.out_channels * layer.kernel);
  for (long col = 0; col < layer.weight.cols(); ++col) {
    for (long row = 0; row < layer.weight.rows(); ++row) {
      layer.weight(row, col) = rng.uniform(-bound, bound);
    }
  }
  layer.bias = Eigen::VectorXd::Zero(layer.out_channels);
}

struct ArrayRef {
  double* data;
  long size;
};

// Every stored array of the model, in the declared serialization order.
std::vector<ArrayRef> model_arrays(DecoderParams& params) {
  std::vector<ArrayRef> out;
  auto mat = [&](Eigen::MatrixXd& m) { out.push_back({m.data(), m.size()}); };
  auto vec = [&](Eigen::VectorXd& v) { out.push_back({v.data(), v.size()}); };
  mat(params.conv1.weight);
  vec(params.conv1.bias);
  vec(params.bn1.gamma);
  vec(params.bn1.beta);
  vec(params.bn1.running_mean);
  vec(params.bn1.running_var);
  mat(params.conv2.weight);
  vec(params.conv2.bias);
  vec(params.bn2.gamma);
  vec(params.bn2.beta);
  vec(params.bn2.running_mean);
  vec(params.bn2.running_var);
  mat(params.conv3.weight);
  vec(params.conv3.bias);
  return out;
}

long stored_value_count(const DecoderHyper& hyper) {
  return param_count(hyper) + 2L * hyper.n1 + 2L * hyper.n2;
}

void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little) {
    throw model_io_error(model_io_error::code::io,
                         "model files are little-endian; unsupported host byte order");
  }
}

}  // namespace

long DecoderHyper::embedding_channels() const {
  int n_freq = window / 2;
  if (max_freq >= 0 && max_freq < n_freq) n_freq = max_freq;
  return basis_size(degree, n_freq);
}

void DecoderHyper::validate() const {
  std::ostringstream bad;
  if (window < 16 || ref_len <= 0 || horizon <= 0) bad << "window/ref_len/horizon must be positive; ";
  if (window != ref_len + horizon) bad << "window must equal ref_len + horizon; ";
  if (window % 16 != 0) bad << "window must be divisible by 16; ";
  if (d_t * 16 != window) bad << "d_t must equal window / 16; ";
  if (features < 1) bad << "features must be >= 1; ";
  if (n1 < 1 || n2 < 1) bad << "hidden channel counts must be >= 1; ";
  if (degree < 0) bad << "degree must be >= 0; ";
  if (kernel < kStride) bad << "kernel must be >= 4 (the upsampling stride); ";
  if ((kernel - kStride) % 2 != 0) bad << "kernel - 4 must be even for symmetric cropping; ";
  const std::string msg = bad.str();
  if (!msg.empty()) throw config_error("decoder configuration: " + msg);
}

DecoderParams make_decoder(const DecoderHyper& hyper, RngStream& rng) {
  hyper.validate();
  DecoderParams params;
  params.hyper = hyper;
  const long d = hyper.embedding_channels();
  params.conv1 = make_upsample_layer(d, hyper.n1, hyper.kernel);
  params.conv2 = make_upsample_layer(hyper.n1, hyper.n2, hyper.kernel);
  params.conv3 = make_output_layer(hyper.n2, hyper.features, hyper.kernel);
  init_weight(params.conv1, rng);
  init_weight(params.conv2, rng);
  init_weight(params.conv3, rng);
  params.bn1 = BatchNormLayer::identity(hyper.n1);
  params.bn2 = BatchNormLayer::identity(hyper.n2);
  return params;
}

long param_count(const DecoderHyper& hyper) {
  const long d = hyper.embedding_channels();
  const long k = hyper.kernel;
  long count = 0;
  count += d * hyper.n1 * k + hyper.n1;        // conv1
  count += 2L * hyper.n1;                      // bn1 gamma/beta
  count += static_cast<long>(hyper.n1) * hyper.n2 * k + hyper.n2;  // conv2
  count += 2L * hyper.n2;                      // bn2 gamma/beta
  count += static_cast<long>(hyper.n2) * hyper.features * k + hyper.features;  // conv3
  return count;
}

Tensor3 decoder_forward(const Tensor3& embedding, DecoderParams& params,
                        BnMode mode, DecoderTrace* trace) {
  if (embedding.channels != params.hyper.embedding_channels() ||
      embedding.length != params.hyper.d_t) {
    throw contract_error("decoder_forward: embedding shape (" +
                         std::to_string(embedding.channels) + "," +
                         std::to_string(embedding.length) + "), expected (" +
                         std::to_string(params.hyper.embedding_channels()) + "," +
                         std::to_string(params.hyper.d_t) + ")");
  }
  DecoderTrace local;
  DecoderTrace& t = trace ? *trace : local;
  t.input = embedding;
  t.pre_bn1 = conv_transpose_forward(embedding, params.conv1);
  t.post_bn1 = batchnorm_forward(t.pre_bn1, params.bn1, mode, &t.bn1);
  t.act1 = relu_forward(t.post_bn1);
  t.pre_bn2 = conv_transpose_forward(t.act1, params.conv2);
  t.post_bn2 = batchnorm_forward(t.pre_bn2, params.bn2, mode, &t.bn2);
  t.act2 = relu_forward(t.post_bn2);
  return conv_transpose_forward(t.act2, params.conv3);
}

DecoderGrads decoder_backward(const DecoderTrace& trace, const DecoderParams& params,
                              const Tensor3& grad_out, BnMode mode,
                              bool want_param_grads) {
  DecoderGrads grads;
  auto g3 = conv_transpose_backward(trace.act2, params.conv3, grad_out, want_param_grads);
  Tensor3 g = relu_backward(trace.post_bn2, g3.x);
  auto gb2 = batchnorm_backward(trace.pre_bn2, params.bn2, mode, trace.bn2, g,
                                want_param_grads);
  auto g2 = conv_transpose_backward(trace.act1, params.conv2, gb2.x, want_param_grads);
  g = relu_backward(trace.post_bn1, g2.x);
  auto gb1 = batchnorm_backward(trace.pre_bn1, params.bn1, mode, trace.bn1, g,
                                want_param_grads);
  auto g1 = conv_transpose_backward(trace.input, params.conv1, gb1.x, want_param_grads);

  grads.embedding = std::move(g1.x);
  if (want_param_grads) {
    grads.w1 = std::move(g1.weight);
    grads.b1 = std::move(g1.bias);
    grads.gamma1 = std::move(gb1.gamma);
    grads.beta1 = std::move(gb1.beta);
    grads.w2 = std::move(g2.weight);
    grads.b2 = std::move(g2.bias);
    grads.gamma2 = std::move(gb2.gamma);
    grads.beta2 = std::move(gb2.beta);
    grads.w3 = std::move(g3.weight);
    grads.b3 = std::move(g3.bias);
  }
  return grads;
}

WindowOutput split_output(const Tensor3& y, long b, int ref_len) {
  if (b < 0 || b >= y.batch) throw contract_error("split_output: batch index out of range");
  if (ref_len <= 0 || ref_len > y.length) throw contract_error("split_output: bad ref_len");
  WindowOutput out;
  out.reconstruction = y.element(b).topRows(ref_len).transpose();
  out.forecast = y.element(b).bottomRows(y.length - ref_len).transpose();
  return out;
}

void save_model(const DecoderParams& params, const std::filesystem::path& path,
                std::uint64_t seed) {
  require_little_endian();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw model_io_error(model_io_error::code::io,
                         "cannot open for writing: " + path.string());
  }
  const DecoderHyper& h = params.hyper;
  out << kMagic << ' ' << kFormatVersion << '\n'
      << "window=" << h.window << '\n'
      << "ref_len=" << h.ref_len << '\n'
      << "horizon=" << h.horizon << '\n'
      << "features=" << h.features << '\n'
      << "d_t=" << h.d_t << '\n'
      << "kernel=" << h.kernel << '\n'
      << "n1=" << h.n1 << '\n'
      << "n2=" << h.n2 << '\n'
      << "degree=" << h.degree << '\n'
      << "max_freq=" << h.max_freq << '\n'
      << "mode=" << (h.mode == LatentMode::kBasis ? "basis" : "no-basis") << '\n'
      << "seed=" << seed << '\n'
      << "values=" << stored_value_count(h) << '\n'
      << "---\n";
  DecoderParams copy = params;
  for (const ArrayRef& a : model_arrays(copy)) {
    out.write(reinterpret_cast<const char*>(a.data),
              static_cast<std::streamsize>(a.size) * 8);
  }
  if (!out) {
    throw model_io_error(model_io_error::code::io, "write failed: " + path.string());
  }
}

LoadedModel load_model(const std::filesystem::path& path) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw model_io_error(model_io_error::code::io,
                         "cannot open model file: " + path.string());
  }

  std::string line;
  if (!std::getline(in, line)) {
    throw model_io_error(model_io_error::code::not_a_model,
                         "not a model file (empty): " + path.string());
  }
  if (line.rfind(kMagic, 0) != 0) {
    throw model_io_error(model_io_error::code::not_a_model,
                         "not a model file: " + path.string());
  }
  {
    std::istringstream header(line.substr(sizeof(kMagic) - 1));
    int version = -1;
    header >> version;
    if (version != kFormatVersion) {
      throw model_io_error(model_io_error::code::bad_version,
                           "unsupported model format version " + std::to_string(version));
    }
  }

  std::map<std::string, std::string> fields;
  while (std::getline(in, line)) {
    if (line == "---") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw model_io_error(model_io_error::code::inconsistent,
                           "malformed header line: " + line);
    }
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto field = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) {
      throw model_io_error(model_io_error::code::inconsistent,
                           std::string("missing header field: ") + key);
    }
    return it->second;
  };

  DecoderHyper h;
  try {
    h.window = std::stoi(field("window"));
    h.ref_len = std::stoi(field("ref_len"));
    h.horizon = std::stoi(field("horizon"));
    h.features = std::stoi(field("features"));
    h.d_t = std::stoi(field("d_t"));
    h.kernel = std::stoi(field("kernel"));
    h.n1 = std::stoi(field("n1"));
    h.n2 = std::stoi(field("n2"));
    h.degree = std::stoi(field("degree"));
    h.max_freq = std::stoi(field("max_freq"));
  } catch (const std::exception&) {
    throw model_io_error(model_io_error::code::inconsistent,
                         "non-numeric value in model header");
  }
  const std::string& mode = field("mode");
  if (mode == "basis") {
    h.mode = LatentMode::kBasis;
  } else if (mode == "no-basis") {
    h.mode = LatentMode::kNoBasis;
  } else {
    throw model_io_error(model_io_error::code::inconsistent,
                         "unknown mode in model header: " + mode);
  }

  LoadedModel loaded;
  loaded.seed = std::stoull(field("seed"));
  try {
    h.validate();
  } catch (const config_error& e) {
    throw model_io_error(model_io_error::code::inconsistent, e.what());
  }

  const long expected = stored_value_count(h);
  long declared = 0;
  try {
    declared = std::stol(field("values"));
  } catch (const std::exception&) {
    throw model_io_error(model_io_error::code::inconsistent,
                         "non-numeric value count in model header");
  }
  if (declared != expected) {
    throw model_io_error(model_io_error::code::inconsistent,
                         "header declares " + std::to_string(declared) +
                             " values but the architecture implies " +
                             std::to_string(expected));
  }

  RngStream dummy(0, "model-load");
  loaded.params = make_decoder(h, dummy);  // shapes only; overwritten below
  for (const ArrayRef& a : model_arrays(loaded.params)) {
    in.read(reinterpret_cast<char*>(a.data), static_cast<std::streamsize>(a.size) * 8);
    if (in.gcount() != static_cast<std::streamsize>(a.size) * 8) {
      throw model_io_error(model_io_error::code::truncated,
                           "model file truncated: " + path.string());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw model_io_error(model_io_error::code::inconsistent,
                         "trailing bytes after declared arrays: " + path.string());
  }
  return loaded;
}

}  // namespace spectranet
