#ifndef SPFORCE_RNG_HPP
#define SPFORCE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace spforce {

/// Seeded Gaussian generator with a platform-stable sequence: mt19937_64 has
/// a standardized output stream and the Box-Muller transform avoids the
/// implementation-defined std::normal_distribution.
class GaussianRng {
 public:
  explicit GaussianRng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // (0, 1]
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double th = 6.283185307179586476925287 * v;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spforce

#endif
