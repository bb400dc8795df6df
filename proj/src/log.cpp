#include "cgbn/log.hpp"

#include <mutex>

#include <fmt/format.h>

namespace cgbn {

namespace {
std::mutex sink_mutex;
LogSink sink;
}  // namespace

void set_warning_sink(LogSink s) {
  std::lock_guard lock(sink_mutex);
  sink = std::move(s);
}

void log_warning(std::string_view message) {
  std::lock_guard lock(sink_mutex);
  if (sink)
    sink(message);
  else
    fmt::print(stderr, "warning: {}\n", message);
}

}  // namespace cgbn
