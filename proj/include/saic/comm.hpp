#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "saic/gridworld.hpp"

namespace saic {

inline int bits_for(int symbols) {
  int bits = 0;
  while ((1 << bits) < symbols) ++bits;
  return bits;
}

/// Deterministic observation -> message map with a declared rate in bits.
class CommPolicy {
 public:
  static constexpr int kMaxRate = 16;

  CommPolicy() = default;
  CommPolicy(std::vector<int> table, int rate_bits) : table_(std::move(table)), rate_(rate_bits) {
    if (rate_ < 0 || rate_ > kMaxRate) throw std::invalid_argument("rate must lie in [0, 16] bits");
    for (int m : table_)
      if (m < 0 || m >= messages())
        throw std::invalid_argument("message " + std::to_string(m) + " does not fit in " +
                                    std::to_string(rate_) + " bits");
  }

  static CommPolicy identity(const GridSpec& spec) {
    std::vector<int> t(spec.cells());
    for (int o = 0; o < spec.cells(); ++o) t[o] = o;
    return CommPolicy(std::move(t), bits_for(spec.cells()));
  }

  static CommPolicy constant(const GridSpec& spec) {
    return CommPolicy(std::vector<int>(spec.cells(), 0), 0);
  }

  int operator()(Observation o) const { return table_.at(o); }
  int rate() const { return rate_; }
  /// Size of the message alphabet, 2^R.
  int messages() const { return 1 << rate_; }
  std::size_t observations() const { return table_.size(); }
  const std::vector<int>& table() const { return table_; }

  friend bool operator==(const CommPolicy&, const CommPolicy&) = default;

 private:
  std::vector<int> table_;
  int rate_ = 0;
};

/// Error-free, instantaneous bit pipe of R bits per use and direction.
class Channel {
 public:
  explicit Channel(int rate_bits) : rate_(rate_bits) {
    if (rate_ < 0 || rate_ > CommPolicy::kMaxRate) throw std::invalid_argument("bad channel rate");
  }
  int rate() const { return rate_; }

  int transmit(int message) const {
    if (message < 0 || message >= (1 << rate_))
      throw std::out_of_range("message " + std::to_string(message) + " exceeds a " +
                              std::to_string(rate_) + "-bit channel");
    ++uses_;
    return message;
  }
  std::uint64_t uses() const { return uses_; }

 private:
  int rate_;
  mutable std::uint64_t uses_ = 0;
};

}  // namespace saic
