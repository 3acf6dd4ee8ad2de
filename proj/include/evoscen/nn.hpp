#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evoscen/rng.hpp"

namespace evoscen {

enum class Activation { Identity, Relu, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Parameter-shaped gradient (one entry per layer).
using Gradients = std::vector<DenseLayer>;

/// Fully connected network; samples are matrix columns.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized network with the given layer sizes (input first).
  Mlp(std::vector<int> sizes, Activation hidden, Activation output);
  /// PyTorch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  static Mlp random(std::vector<int> sizes, Activation hidden, Activation output, Rng& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Activation hidden_activation() const { return hidden_; }
  Activation output_activation() const { return output_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Cached intermediate values of one forward pass.
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> outputs; // post-activation output of each layer
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;

  /// Backpropagates dL/d(output). Returns parameter gradients summed over the
  /// batch; writes dL/d(input) when `grad_input` is non-null.
  Gradients backward(const Tape& tape, const Eigen::MatrixXd& grad_output, Eigen::MatrixXd* grad_input = nullptr) const;

  /// theta_target <- tau * theta_live + (1 - tau) * theta_target.
  void soft_update_toward(const Mlp& live, double tau);

  bool same_shape(const Mlp& other) const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<int> sizes_;
  Activation hidden_ = Activation::Relu;
  Activation output_ = Activation::Identity;
  std::vector<DenseLayer> layers_;
};

Gradients zero_gradients(const Mlp& net);

/// Adam optimizer bound to one network's shapes.
class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  /// Descends along `grad`.
  void step(Mlp& net, const Gradients& grad);
  double learning_rate() const { return lr_; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  Gradients m_, v_;
};

/// Text weight format, version 1:
///   evoscen-mlp 1
///   sizes <n0> <n1> ... <nk>
///   activation <hidden> <output>
///   layer <i> <rows> <cols>   followed by <rows> lines of <cols> weights
///   bias <i> <rows>           followed by one line of <rows> values
///   end
/// Values are shortest round-trip decimals, so save/load is bit-exact.
void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in);
void save_mlp(const std::filesystem::path& path, const Mlp& net);
/// Throws ConfigError on a malformed or unreadable file.
Mlp load_mlp(const std::filesystem::path& path);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

}  // namespace evoscen
