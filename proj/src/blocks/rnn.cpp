#include <cmath>

#include "tabseq/blocks.h"
#include "tabseq/error.h"
#include "tabseq/ops.h"
#include "tabseq/tape.h"

namespace tabseq::nn {

CellKind parse_cell(std::string_view name) {
  if (name == "rnn" || name == "vanilla") return CellKind::kVanilla;
  if (name == "gru") return CellKind::kGRU;
  if (name == "lstm") return CellKind::kLSTM;
  throw ConfigError("unknown recurrent cell '" + std::string(name) + "'");
}

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::kVanilla:
      return "rnn";
    case CellKind::kGRU:
      return "gru";
    case CellKind::kLSTM:
      return "lstm";
  }
  return "?";
}

namespace {

std::size_t gate_count(CellKind kind) {
  switch (kind) {
    case CellKind::kVanilla:
      return 1;
    case CellKind::kGRU:
      return 3;
    case CellKind::kLSTM:
      return 4;
  }
  return 1;
}

}  // namespace

RNNLayer::RNNLayer(std::size_t input, std::size_t hidden, CellKind kind, Activation act, std::mt19937_64& rng)
    : hidden_(hidden), kind_(kind), act_(act) {
  if (hidden == 0 || input == 0) throw ConfigError("recurrent layer sizes must be positive");
  const std::size_t g = gate_count(kind) * hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto fill = [&](Shape shape) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
  };
  w_x = fill({input, g});
  w_h = fill({hidden, g});
  b = fill({g});
}

Tensor RNNLayer::forward(const Tensor& x) const {
  if (x.rank() != 3 || x.dim(2) != w_x.dim(0)) {
    throw DimensionError("rnn expects (N, J, " + std::to_string(w_x.dim(0)) + "), got " + to_string(x.shape()));
  }
  RegionScope region("rnn");
  const std::size_t steps = x.dim(1);
  const std::size_t h = hidden_;
  Tensor projected = linear(x, w_x, b);
  Tensor state;
  Tensor cell;
  std::vector<Tensor> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor pre = select(projected, 1, t);
    Tensor rec = state.defined() ? matmul(state, w_h) : Tensor();
    switch (kind_) {
      case CellKind::kVanilla: {
        state = activate(rec.defined() ? add(pre, rec) : pre, act_);
        break;
      }
      case CellKind::kGRU: {
        auto gate = [&](std::size_t k) { return narrow(pre, 1, k * h, h); };
        auto hgate = [&](std::size_t k) { return narrow(rec, 1, k * h, h); };
        if (!rec.defined()) {
          Tensor z = sigmoid(gate(1));
          Tensor n = tanh(gate(2));
          state = sub(n, mul(z, n));
        } else {
          Tensor r = sigmoid(add(gate(0), hgate(0)));
          Tensor z = sigmoid(add(gate(1), hgate(1)));
          Tensor n = tanh(add(gate(2), mul(r, hgate(2))));
          state = add(n, mul(z, sub(state, n)));
        }
        break;
      }
      case CellKind::kLSTM: {
        Tensor all = rec.defined() ? add(pre, rec) : pre;
        Tensor i = sigmoid(narrow(all, 1, 0, h));
        Tensor f = sigmoid(narrow(all, 1, h, h));
        Tensor g = tanh(narrow(all, 1, 2 * h, h));
        Tensor o = sigmoid(narrow(all, 1, 3 * h, h));
        cell = cell.defined() ? add(mul(f, cell), mul(i, g)) : mul(i, g);
        state = mul(o, tanh(cell));
        break;
      }
    }
    states.push_back(state);
  }
  return stack(states, 1);
}

void RNNLayer::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + "w_x", w_x});
  out.push_back({prefix + "w_h", w_h});
  out.push_back({prefix + "b", b});
}

}  // namespace tabseq::nn
