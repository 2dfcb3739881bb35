#pragma once

#include <vector>

namespace textmatch {

// Exact minimum-cost assignment on a square cost matrix (row-major, n x n)
// via shortest augmenting paths (Jonker-Volgenant style duals). Returns the
// column assigned to each row. Deterministic: rows are augmented in order and
// ties resolve to the lowest-index column.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n);

}  // namespace textmatch
