#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace sgtopo {

/// Invalid numeric parameter or inconsistent sizes supplied by the caller.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Index outside of a grid or mesh.
class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Linear or subproblem solver failed to reach the requested accuracy.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Problems reading or writing one of the binary/text artifact formats.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Purpose-scoped stream identifiers. Each catalog entry, optimizer run and
/// verification pass draws from its own substream so that results never
/// depend on scheduling.
namespace streams {
inline constexpr std::uint64_t kCatalog = 1ull << 40;
inline constexpr std::uint64_t kLayouts = 2ull << 40;
inline constexpr std::uint64_t kVerification = 3ull << 40;
inline constexpr std::uint64_t kInitialVerification = 4ull << 40;
inline constexpr std::uint64_t kRveExport = 5ull << 40;
inline constexpr std::uint64_t kFdCheck = 6ull << 40;
}  // namespace streams

/// Reproducible random source identified by (seed, stream_id).
///
/// The same (seed, stream_id) and the same sequence of calls always yield
/// the same values. The full generator state can be serialized so that an
/// interrupted run resumes mid-stream.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Standard normal draw.
  double normal();
  /// Uniform draw on [lo, hi). Returns lo when lo == hi.
  double uniform(double lo, double hi);
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  /// Independent stream sharing this seed.
  RandomStream substream(std::uint64_t stream_id) const { return {seed_, stream_id}; }

  std::string serialize() const;
  static RandomStream deserialize(std::string_view text);

  bool operator==(const RandomStream& other) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Number of workers to use when the caller passes 0.
unsigned default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers using static
/// contiguous chunks. Callers write results into per-index slots and reduce
/// sequentially afterwards, which keeps every result independent of the
/// worker count. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

/// 64-bit FNV-1a, used for run-directory naming.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace sgtopo
