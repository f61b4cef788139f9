#include "patchwork/crossval.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "patchwork/rng.hpp"

namespace patchwork {

const FoldSplit& SplitPlan::fold(std::int64_t outer, std::int64_t inner) const {
    for (const auto& f : folds)
        if (f.outer == outer && f.inner == inner) return f;
    throw ConfigError("split plan has no fold (" + std::to_string(outer) + ", " +
                      std::to_string(inner) + ")");
}

namespace {

// near-equal contiguous slices; the first (n % k) slices get one extra id
std::vector<std::vector<std::string>> partition(const std::vector<std::string>& ids, std::int64_t k) {
    std::vector<std::vector<std::string>> parts(static_cast<std::size_t>(k));
    const auto n = static_cast<std::int64_t>(ids.size());
    const auto base = n / k, extra = n % k;
    std::int64_t at = 0;
    for (std::int64_t i = 0; i < k; ++i) {
        const auto len = base + (i < extra ? 1 : 0);
        parts[static_cast<std::size_t>(i)].assign(ids.begin() + at, ids.begin() + at + len);
        at += len;
    }
    return parts;
}

} // namespace

SplitPlan make_nested_splits(std::vector<std::string> subject_ids, std::int64_t k_outer,
                             std::int64_t k_inner, std::uint64_t seed, SplitMode mode) {
    if (k_outer < 2 || k_inner < 2)
        throw ConfigError("nested splits need k_outer >= 2 and k_inner >= 2, got " +
                          std::to_string(k_outer) + " and " + std::to_string(k_inner));
    {
        std::set<std::string> unique(subject_ids.begin(), subject_ids.end());
        if (unique.size() != subject_ids.size())
            throw ValidationError("subject ids passed to the splitter are not unique");
    }
    const auto n = static_cast<std::int64_t>(subject_ids.size());
    if (n < k_outer * k_inner)
        throw ConfigError("nested " + std::to_string(k_outer) + "x" + std::to_string(k_inner) +
                          " splits need at least " + std::to_string(k_outer * k_inner) +
                          " subjects, got " + std::to_string(n));

    Rng rng(seed);
    rng.shuffle(subject_ids);

    SplitPlan plan;
    plan.k_outer = k_outer;
    plan.k_inner = k_inner;
    plan.seed = seed;

    const auto outer_parts = partition(subject_ids, k_outer);
    for (std::int64_t i = 0; i < k_outer; ++i) {
        std::vector<std::string> rest;
        for (std::int64_t o = 0; o < k_outer; ++o)
            if (o != i)
                rest.insert(rest.end(), outer_parts[static_cast<std::size_t>(o)].begin(),
                            outer_parts[static_cast<std::size_t>(o)].end());
        const auto inner_parts = partition(rest, k_inner);
        for (std::int64_t j = 0; j < k_inner; ++j) {
            FoldSplit fold;
            fold.outer = i;
            fold.inner = j;
            fold.test = outer_parts[static_cast<std::size_t>(i)];
            fold.validation = inner_parts[static_cast<std::size_t>(j)];
            for (std::int64_t v = 0; v < k_inner; ++v)
                if (v != j)
                    fold.train.insert(fold.train.end(), inner_parts[static_cast<std::size_t>(v)].begin(),
                                      inner_parts[static_cast<std::size_t>(v)].end());
            plan.folds.push_back(std::move(fold));
            if (mode == SplitMode::single_fold) return plan;
        }
    }
    return plan;
}

void write_split_plan(const SplitPlan& plan, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "outer,inner,role,subject_id\n";
    for (const auto& fold : plan.folds) {
        auto rows = [&](const char* role, const std::vector<std::string>& ids) {
            for (const auto& id : ids)
                f << fold.outer << "," << fold.inner << "," << role << "," << id << "\n";
        };
        rows("train", fold.train);
        rows("validation", fold.validation);
        rows("test", fold.test);
    }
    if (!f) throw IoError("short write to " + path);
}

SplitPlan read_split_plan(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open split plan " + path);
    std::string line;
    if (!std::getline(f, line) || (line != "outer,inner,role,subject_id" &&
                                   line != "outer,inner,role,subject_id\r"))
        throw ParseError(path + ": expected header outer,inner,role,subject_id");

    SplitPlan plan;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string outer_s, inner_s, role, id;
        if (!std::getline(ss, outer_s, ',') || !std::getline(ss, inner_s, ',') ||
            !std::getline(ss, role, ',') || !std::getline(ss, id))
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 4 fields");
        std::int64_t outer, inner;
        try {
            outer = std::stoll(outer_s);
            inner = std::stoll(inner_s);
        } catch (const std::exception&) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": bad fold index");
        }
        auto it = std::find_if(plan.folds.begin(), plan.folds.end(), [&](const FoldSplit& fs) {
            return fs.outer == outer && fs.inner == inner;
        });
        if (it == plan.folds.end()) {
            FoldSplit fs;
            fs.outer = outer;
            fs.inner = inner;
            plan.folds.push_back(std::move(fs));
            it = std::prev(plan.folds.end());
        }
        if (role == "train") it->train.push_back(id);
        else if (role == "validation") it->validation.push_back(id);
        else if (role == "test") it->test.push_back(id);
        else
            throw ParseError(path + ": line " + std::to_string(line_no) + ": unknown role '" + role +
                             "'");
    }
    if (plan.folds.empty()) throw ParseError(path + ": split plan has no rows");
    for (const auto& fs : plan.folds) {
        plan.k_outer = std::max(plan.k_outer, fs.outer + 1);
        plan.k_inner = std::max(plan.k_inner, fs.inner + 1);
    }
    return plan;
}

} // namespace patchwork
