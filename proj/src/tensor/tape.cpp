#include "tabseq/tape.h"

#include <algorithm>

#include "tabseq/error.h"

namespace tabseq {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape::Tape(std::size_t bytes_per_element) : bytes_per_element_(bytes_per_element) {
  region_names_.push_back("other");
}

std::uint32_t Tape::current_region() { return region_stack_.empty() ? 0 : region_stack_.back(); }

RegionBytes& Tape::region_bytes(std::uint32_t region) { return regions_[region_names_[region]]; }

void Tape::charge(std::size_t bytes) {
  live_ += bytes;
  peak_ = std::max(peak_, live_);
}

void Tape::record(const Tensor& output, BackwardFn backward, bool charge_output, std::size_t saved_elements) {
  const auto region = current_region();
  if (charge_output) {
    const auto bytes = (output.numel() + saved_elements) * bytes_per_element_;
    charge(bytes);
    retained_ += bytes;
    region_bytes(region).activations += bytes;
  }
  nodes_.push_back(Node{output, std::move(backward), region, charge_output});
}

void Tape::charge_input(const Tensor& t) {
  const auto bytes = t.numel() * bytes_per_element_;
  charge(bytes);
  retained_ += bytes;
  region_bytes(current_region()).inputs += bytes;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
  }
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                         [&](const Node& n) { return n.output.same(loss); });
  if (it == nodes_.rend()) throw ContractError("loss was not recorded on this tape");

  loss.impl()->grad.assign(1, 1.0);
  for (; it != nodes_.rend(); ++it) {
    auto* impl = it->output.impl();
    if (impl->grad.empty()) continue;
    if (it->charged) {
      const auto bytes = impl->grad.size() * bytes_per_element_;
      charge(bytes);
      grad_bytes_ += bytes;
      region_bytes(it->region).grads += bytes;
    }
    it->backward(impl->grad);
    // Intermediate grads are consumed; only leaves keep theirs.
    impl->grad.clear();
    impl->grad.shrink_to_fit();
  }
}

void Tape::push_region(std::string name) {
  auto found = std::find(region_names_.begin(), region_names_.end(), name);
  std::uint32_t id;
  if (found == region_names_.end()) {
    id = static_cast<std::uint32_t>(region_names_.size());
    region_names_.push_back(std::move(name));
  } else {
    id = static_cast<std::uint32_t>(found - region_names_.begin());
  }
  region_stack_.push_back(id);
}

void Tape::pop_region() {
  if (!region_stack_.empty()) region_stack_.pop_back();
}

void Tape::clear() {
  nodes_.clear();
  regions_.clear();
  region_stack_.clear();
  live_ = peak_ = retained_ = grad_bytes_ = 0;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape* tape) : previous_(g_active_tape) { g_active_tape = tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

RegionScope::RegionScope(std::string_view name) : tape_(g_active_tape) {
  if (tape_) tape_->push_region(std::string(name));
}

RegionScope::~RegionScope() {
  if (tape_) tape_->pop_region();
}

void backward(const Tensor& loss) {
  if (!g_active_tape) throw ContractError("backward called without an active tape");
  g_active_tape->backward(loss);
}

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->needs_grad(); });
}

bool should_record(std::span<const Tensor> inputs) {
  if (!g_active_tape) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.needs_grad(); });
}

void record(Tensor& output, BackwardFn backward, bool charge, std::size_t saved_elements) {
  output.impl()->tracked = true;
  g_active_tape->record(output, std::move(backward), charge, saved_elements);
}

std::span<double> grad_target(const Tensor& t) {
  if (!t.needs_grad()) return {};
  auto* impl = t.impl();
  if (impl->grad.empty()) impl->grad.assign(impl->storage->size(), 0.0);
  return impl->grad;
}

}  // namespace detail

}  // namespace tabseq
