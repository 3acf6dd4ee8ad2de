#include "evoscen/nn.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <Eigen/Sparse>

#include "evoscen/errors.hpp"

namespace evoscen {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + name + "'");
}

namespace {

void apply(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Relu: z = z.cwiseMax(0.0); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
  }
}

// Derivative expressed through the activation output y.
Eigen::MatrixXd derivative(Activation a, const Eigen::MatrixXd& y) {
  switch (a) {
    case Activation::Identity: return Eigen::MatrixXd::Ones(y.rows(), y.cols());
    case Activation::Relu: return (y.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh: return (1.0 - y.array().square()).matrix();
  }
  return Eigen::MatrixXd::Ones(y.rows(), y.cols());
}

void check_sizes(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw ConfigError("mlp needs at least an input and an output size");
  for (int n : sizes) {
    if (n <= 0) throw ConfigError("mlp layer sizes must be positive");
  }
}

}  // namespace

Mlp::Mlp(std::vector<int> sizes, Activation hidden, Activation output)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  check_sizes(sizes_);
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    layers_.push_back({Eigen::MatrixXd::Zero(sizes_[i + 1], sizes_[i]), Eigen::VectorXd::Zero(sizes_[i + 1])});
  }
}

Mlp Mlp::random(std::vector<int> sizes, Activation hidden, Activation output, Rng& rng) {
  Mlp net(std::move(sizes), hidden, output);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

namespace {

// Observation grids are mostly empty cells.
bool mostly_zero(const Eigen::MatrixXd& x) {
  return static_cast<double>((x.array() != 0.0).count()) < 0.25 * static_cast<double>(x.size());
}

Eigen::MatrixXd first_layer_product(const Eigen::MatrixXd& w, const Eigen::MatrixXd& x) {
  if (!mostly_zero(x)) return w * x;
  const Eigen::SparseMatrix<double> xs = x.sparseView();
  return w * xs;
}

}  // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (x.rows() != input_size()) throw ContractError("mlp forward: input has wrong size");
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = i == 0 ? first_layer_product(layers_[0].weight, h) : Eigen::MatrixXd(layers_[i].weight * h);
    z.colwise() += layers_[i].bias;
    apply(i + 1 == layers_.size() ? output_ : hidden_, z);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  if (x.rows() != input_size()) throw ContractError("mlp forward: input has wrong size");
  tape.inputs.clear();
  tape.outputs.clear();
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    tape.inputs.push_back(h);
    Eigen::MatrixXd z = i == 0 ? first_layer_product(layers_[0].weight, h) : Eigen::MatrixXd(layers_[i].weight * h);
    z.colwise() += layers_[i].bias;
    apply(i + 1 == layers_.size() ? output_ : hidden_, z);
    tape.outputs.push_back(z);
    h = std::move(z);
  }
  return h;
}

Gradients Mlp::backward(const Tape& tape, const Eigen::MatrixXd& grad_output, Eigen::MatrixXd* grad_input) const {
  if (tape.outputs.size() != layers_.size()) throw ContractError("mlp backward: tape does not match network");
  Gradients grads(layers_.size());
  Eigen::MatrixXd g = grad_output;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Activation act = k + 1 == layers_.size() ? output_ : hidden_;
    Eigen::MatrixXd dz = g.cwiseProduct(derivative(act, tape.outputs[k]));
    if (k == 0 && mostly_zero(tape.inputs[0])) {
      const Eigen::SparseMatrix<double> xs = tape.inputs[0].sparseView();
      grads[k].weight = dz * xs.transpose();
    } else {
      grads[k].weight = dz * tape.inputs[k].transpose();
    }
    grads[k].bias = dz.rowwise().sum();
    if (k > 0 || grad_input) g = layers_[k].weight.transpose() * dz;
  }
  if (grad_input) *grad_input = std::move(g);
  return grads;
}

void Mlp::soft_update_toward(const Mlp& live, double tau) {
  if (!same_shape(live)) throw ContractError("soft update between networks of different shapes");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight = tau * live.layers_[i].weight + (1.0 - tau) * layers_[i].weight;
    layers_[i].bias = tau * live.layers_[i].bias + (1.0 - tau) * layers_[i].bias;
  }
}

bool Mlp::same_shape(const Mlp& other) const {
  return sizes_ == other.sizes_ && hidden_ == other.hidden_ && output_ == other.output_;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias) return false;
  }
  return true;
}

Gradients zero_gradients(const Mlp& net) {
  Gradients g;
  for (const auto& l : net.layers()) {
    g.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(zero_gradients(net)), v_(zero_gradients(net)) {}

void Adam::step(Mlp& net, const Gradients& grad) {
  auto& layers = net.layers();
  if (grad.size() != layers.size() || m_.size() != layers.size()) throw ContractError("adam: shape mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grad[i].weight, m_[i].weight, v_[i].weight);
    update(layers[i].bias, grad[i].bias, m_[i].bias, v_[i].bias);
  }
}

std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

constexpr const char* kMagic = "evoscen-mlp";

double parse_double(const std::string& tok) {
  double x = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), x);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ConfigError("weight file: bad number '" + tok + "'");
  }
  return x;
}

std::string next_token(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw ConfigError(std::string("weight file: unexpected end while reading ") + what);
  return tok;
}

int next_int(std::istream& in, const char* what) {
  const std::string tok = next_token(in, what);
  int v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ConfigError(std::string("weight file: bad integer for ") + what);
  }
  return v;
}

void expect(std::istream& in, const std::string& word) {
  const std::string tok = next_token(in, word.c_str());
  if (tok != word) throw ConfigError("weight file: expected '" + word + "', found '" + tok + "'");
}

}  // namespace

void write_mlp(std::ostream& out, const Mlp& net) {
  out << kMagic << " 1\nsizes";
  for (int n : net.sizes()) out << ' ' << n;
  out << "\nactivation " << to_string(net.hidden_activation()) << ' ' << to_string(net.output_activation()) << '\n';
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& w = layers[i].weight;
    out << "layer " << i << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(w(r, c));
      }
      out << '\n';
    }
    out << "bias " << i << ' ' << layers[i].bias.size() << '\n';
    for (Eigen::Index r = 0; r < layers[i].bias.size(); ++r) {
      if (r) out << ' ';
      out << format_double(layers[i].bias(r));
    }
    out << '\n';
  }
  out << "end\n";
}

Mlp read_mlp(std::istream& in) {
  expect(in, kMagic);
  if (next_int(in, "version") != 1) throw ConfigError("weight file: unsupported version");
  expect(in, "sizes");
  std::string line;
  std::getline(in, line);
  std::istringstream size_line(line);
  std::vector<int> sizes;
  for (std::string tok; size_line >> tok;) {
    int v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc()) throw ConfigError("weight file: bad layer size '" + tok + "'");
    sizes.push_back(v);
  }
  expect(in, "activation");
  const Activation hidden = activation_from_string(next_token(in, "activation"));
  const Activation output = activation_from_string(next_token(in, "activation"));
  Mlp net(sizes, hidden, output);
  auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    expect(in, "layer");
    const int idx = next_int(in, "layer index");
    const int rows = next_int(in, "rows");
    const int cols = next_int(in, "cols");
    if (idx != static_cast<int>(i) || rows != layers[i].weight.rows() || cols != layers[i].weight.cols()) {
      throw ConfigError("weight file: layer " + std::to_string(i) + " shape does not match the size header");
    }
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) layers[i].weight(r, c) = parse_double(next_token(in, "weight"));
    }
    expect(in, "bias");
    if (next_int(in, "bias index") != static_cast<int>(i) || next_int(in, "bias size") != rows) {
      throw ConfigError("weight file: bias " + std::to_string(i) + " shape mismatch");
    }
    for (int r = 0; r < rows; ++r) layers[i].bias(r) = parse_double(next_token(in, "bias"));
  }
  expect(in, "end");
  return net;
}

void save_mlp(const std::filesystem::path& path, const Mlp& net) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_mlp(out, net);
  if (!out) throw ConfigError("failed writing " + path.string());
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return read_mlp(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace evoscen
