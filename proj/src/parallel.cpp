#include "istd/parallel.hpp"

namespace istd {

namespace {
int g_threads = 1;
}

int thread_count() { return g_threads; }

void set_thread_count(int n) { g_threads = n < 1 ? 1 : n; }

}  // namespace istd
