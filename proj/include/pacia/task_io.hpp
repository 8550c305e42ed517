#pragma once

#include <string>
#include <vector>

#include "pacia/graph.hpp"

namespace pacia {

// Task file format: UTF-8 JSON lines, one task per line:
//   {"task_id": "...", "graphs": [{"nodes": [[f64,...],...],
//                                  "edges": [[u,v,[f64,...]],...],
//                                  "label": 0|1}, ...]}
// Node feature dimensions are validated across the whole file.
std::vector<Task> load_tasks(const std::string& path);

void save_tasks(const std::vector<Task>& tasks, const std::string& path);

}  // namespace pacia
