#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "patchwork/errors.hpp"

namespace patchwork {

struct FoldSplit {
    std::int64_t outer = 0;
    std::int64_t inner = 0;
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

struct SplitPlan {
    std::int64_t k_outer = 0;
    std::int64_t k_inner = 0;
    std::uint64_t seed = 0;
    std::vector<FoldSplit> folds; // outer-major, inner-minor

    const FoldSplit& fold(std::int64_t outer, std::int64_t inner) const;
};

enum class SplitMode { nested, single_fold };

// Shuffles ids once by seed, slices k_outer near-equal test sets, then splits
// each fold's remainder into k_inner validation sets. Sizes differ by at most
// one; leftover ids go to the front folds. single_fold keeps only (0, 0).
SplitPlan make_nested_splits(std::vector<std::string> subject_ids, std::int64_t k_outer,
                             std::int64_t k_inner, std::uint64_t seed, SplitMode mode);

// columns: outer,inner,role,subject_id
void write_split_plan(const SplitPlan& plan, const std::string& path);
SplitPlan read_split_plan(const std::string& path);

} // namespace patchwork
