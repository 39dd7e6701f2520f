#pragma once

#include <string>

#include "types.hpp"

namespace happymap {

// Column-prefix schema: x_* features, y label, g_* groups, z domain tag
// (so|ta). Empty x_ cells mark missing values. Row order is preserved.
Dataset parse_dataset_csv(const std::string& text);
Dataset load_dataset_csv(const std::string& path);

std::string format_dataset_csv(const Dataset& ds);
void save_dataset_csv(const Dataset& ds, const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

} // namespace happymap
