#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabseq/tensor.h"

namespace tabseq {

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

// Bytes charged to one named accounting region (e.g. "attention", "ssm").
struct RegionBytes {
  std::size_t activations = 0;
  std::size_t grads = 0;
  std::size_t inputs = 0;
};

// Records differentiable operations in execution order and keeps a logical
// byte count of every activation they produce. The count models allocations,
// not physical reuse: an activation stays charged until the tape is cleared,
// and backward charges one gradient buffer per processed activation.
class Tape {
 public:
  explicit Tape(std::size_t bytes_per_element = 4);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // `saved_elements` charges buffers an op keeps for backward beyond its output.
  void record(const Tensor& output, BackwardFn backward, bool charge = true, std::size_t saved_elements = 0);
  // Charges a model input (batch tensor) without recording an op.
  void charge_input(const Tensor& t);

  void backward(const Tensor& loss);

  void push_region(std::string name);
  void pop_region();

  void clear();

  std::size_t size() const { return nodes_.size(); }
  std::size_t bytes_per_element() const { return bytes_per_element_; }
  std::size_t live_bytes() const { return live_; }
  std::size_t peak_bytes() const { return peak_; }
  // Activation + input bytes held for backward at the end of the forward pass.
  std::size_t retained_bytes() const { return retained_; }
  std::size_t grad_bytes() const { return grad_bytes_; }
  const std::map<std::string, RegionBytes>& regions() const { return regions_; }

 private:
  struct Node {
    Tensor output;
    BackwardFn backward;
    std::uint32_t region;
    bool charged;
  };

  void charge(std::size_t bytes);
  RegionBytes& region_bytes(std::uint32_t region);
  std::uint32_t current_region();

  std::size_t bytes_per_element_;
  std::vector<Node> nodes_;
  std::vector<std::string> region_names_;
  std::vector<std::uint32_t> region_stack_;
  std::map<std::string, RegionBytes> regions_;
  std::size_t live_ = 0;
  std::size_t peak_ = 0;
  std::size_t retained_ = 0;
  std::size_t grad_bytes_ = 0;
};

// Tape that newly created ops record onto, for the current thread.
Tape* active_tape();

// Activates a tape (or nullptr to suspend recording) for the current scope.
class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  explicit TapeScope(Tape& tape) : TapeScope(&tape) {}
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Attributes bytes charged inside the scope to a named region.
class RegionScope {
 public:
  explicit RegionScope(std::string_view name);
  ~RegionScope();
  RegionScope(const RegionScope&) = delete;
  RegionScope& operator=(const RegionScope&) = delete;

 private:
  Tape* tape_;
};

// Backward through the active tape.
void backward(const Tensor& loss);

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs);
bool should_record(std::span<const Tensor> inputs);
// Marks `output` as tracked and records it on the active tape.
void record(Tensor& output, BackwardFn backward, bool charge = true, std::size_t saved_elements = 0);
// Gradient accumulation target for `t`: empty when t does not need grad,
// otherwise the (lazily zero-filled) grad buffer.
std::span<double> grad_target(const Tensor& t);

}  // namespace detail

}  // namespace tabseq
