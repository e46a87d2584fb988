#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace evorag {

// Text resources compiled in from resources/ (prompt baselines and templates).
// Throws Error for an unknown name.
std::string_view resource(std::string_view name);
std::vector<std::string> resource_names();

}  // namespace evorag
