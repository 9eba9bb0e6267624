#pragma once

#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "neuroverb/ad/tensor.hpp"
#include "neuroverb/errors.hpp"

namespace neuroverb::ad {

// Define-by-run recording of differentiable ops. Constructing a Tape makes it
// the active tape of the current thread until it is destroyed; ops executed in
// between record a backward closure whenever one of their inputs requires a
// gradient. Tapes nest: destruction restores the previously active tape.
//
// A tape can run backward() exactly once. Re-running the forward pass on a new
// tape is required for a second backward.
template <typename T>
class Tape {
 public:
  struct Entry {
    const char* op;
    std::function<void()> backward;
  };

  Tape() : previous_(active_) { active_ = this; }
  ~Tape() { active_ = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(const char* op, std::function<void()> backward) {
    if (consumed_) throw StateError(std::string("op '") + op + "' recorded on a consumed tape");
    entries_.push_back({op, std::move(backward)});
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }

  // Accumulates d(seed * loss)/d(leaf) into every reachable leaf that
  // requires a gradient. Entries run in reverse recording order.
  void backward(Tensor<T> loss, T seed = T(1)) {
    if (consumed_) throw StateError("backward called twice on the same tape");
    if (loss.size() != 1) {
      throw InvalidArgument("backward needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.ensure_grad()[0] += seed;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  }

 private:
  inline static thread_local Tape* active_ = nullptr;

  std::vector<Entry> entries_;
  Tape* previous_;
  bool consumed_ = false;
};

namespace detail {

// The tape to record on, or nullptr when no input needs a gradient or no tape
// is active.
template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
Tape<T>* recording_tape(const std::vector<Tensor<T>>& inputs) {
  Tape<T>* tape = Tape<T>::active();
  if (tape == nullptr) return nullptr;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return tape;
  }
  return nullptr;
}

}  // namespace detail

}  // namespace neuroverb::ad
