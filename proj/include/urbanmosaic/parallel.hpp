#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace urbanmosaic {

/// Worker count used when callers pass 0.
inline unsigned default_threads() noexcept {
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, n) into `chunks` contiguous ranges and calls
/// fn(chunk_index, begin, end) for each, one thread per chunk. Chunk
/// boundaries depend only on n and chunks, so callers that merge per-chunk
/// output in chunk order get results independent of scheduling.
template <typename Fn>
void parallel_chunks(std::size_t n, unsigned chunks, Fn&& fn) {
    if (chunks == 0) chunks = default_threads();
    chunks = static_cast<unsigned>(std::min<std::size_t>(chunks, std::max<std::size_t>(n, 1)));
    if (chunks <= 1) {
        fn(std::size_t{0}, std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(chunks);
    workers.reserve(chunks);
    for (unsigned c = 0; c < chunks; ++c) {
        const std::size_t begin = n * c / chunks;
        const std::size_t end = n * (c + 1) / chunks;
        workers.emplace_back([&, c, begin, end] {
            try {
                fn(static_cast<std::size_t>(c), begin, end);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace urbanmosaic
