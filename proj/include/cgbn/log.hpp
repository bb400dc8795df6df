#pragma once

#include <functional>
#include <string_view>

namespace cgbn {

using LogSink = std::function<void(std::string_view)>;

/// Diagnostics go to stderr unless a sink is installed; pass nullptr to restore.
void set_warning_sink(LogSink sink);
void log_warning(std::string_view message);

}  // namespace cgbn
