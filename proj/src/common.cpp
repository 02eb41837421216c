#include "sgtopo/common.hpp"

#include <exception>
#include <mutex>
#include <sstream>

namespace sgtopo {

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x5367u};
  return std::mt19937_64(seq);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

double RandomStream::normal() { return normal_(engine_); }

double RandomStream::uniform(double lo, double hi) {
  const double u = std::generate_canonical<double, 53>(engine_);
  return lo + (hi - lo) * u;
}

std::size_t RandomStream::index(std::size_t n) {
  if (n == 0) throw ParameterError("RandomStream::index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

std::string RandomStream::serialize() const {
  std::ostringstream out;
  out << seed_ << ' ' << stream_id_ << ' ' << engine_ << ' ' << normal_;
  return out.str();
}

RandomStream RandomStream::deserialize(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::uint64_t seed = 0;
  std::uint64_t id = 0;
  in >> seed >> id;
  RandomStream stream(seed, id);
  in >> stream.engine_ >> stream.normal_;
  if (!in) throw FormatError("RandomStream: corrupt serialized state");
  return stream;
}

bool RandomStream::operator==(const RandomStream& other) const {
  return seed_ == other.seed_ && stream_id_ == other.stream_id_ && engine_ == other.engine_ &&
         normal_ == other.normal_;
}

unsigned default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  if (threads == 0) threads = default_thread_count();
  const std::size_t workers = std::min<std::size_t>(threads, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  const std::size_t chunk = (count + workers - 1) / workers;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, begin, end] {
        try {
          for (std::size_t i = begin; i < end; ++i) body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

}  // namespace sgtopo
