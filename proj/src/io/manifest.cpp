#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "patchwork/image.hpp"

namespace patchwork {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto a = field.find_first_not_of(" \t\r");
        const auto b = field.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? std::string() : field.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

std::vector<SubjectRecord> read_manifest(const std::string& path, ManifestTask task) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest " + path);
    const auto base_dir = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        if (fp.is_relative()) fp = base_dir / fp;
        return fp.lexically_normal().string();
    };

    std::string line;
    if (!std::getline(f, line)) throw ParseError(path + ": empty manifest");
    const auto header = split_csv(line);
    if (header.size() < 3 || header.front() != "SubjectID" || header.back() != "Label")
        throw ParseError(path + ": line 1: header must be SubjectID,Channel_0..,Label");
    const auto n_channels = header.size() - 2;
    for (std::size_t i = 0; i < n_channels; ++i)
        if (header[i + 1] != "Channel_" + std::to_string(i))
            throw ParseError(path + ": line 1: expected column Channel_" + std::to_string(i) +
                             ", got " + header[i + 1]);

    std::vector<SubjectRecord> records;
    std::set<std::string> seen;
    std::vector<std::string> duplicates;
    std::vector<std::string> missing;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        SubjectRecord rec;
        rec.subject_id = fields.front();
        if (rec.subject_id.empty())
            throw ParseError(path + ": line " + std::to_string(line_no) + ": empty SubjectID");
        if (!seen.insert(rec.subject_id).second) duplicates.push_back(rec.subject_id);
        for (std::size_t i = 0; i < n_channels; ++i) {
            auto p = resolve(fields[i + 1]);
            if (!std::filesystem::exists(p)) missing.push_back(p);
            rec.channel_paths.push_back(std::move(p));
        }
        const auto& label = fields.back();
        if (task == ManifestTask::segmentation) {
            auto p = resolve(label);
            if (!std::filesystem::exists(p)) missing.push_back(p);
            rec.target = std::move(p);
        } else {
            try {
                std::size_t used = 0;
                const double v = std::stod(label, &used);
                if (used != label.size()) throw std::invalid_argument(label);
                rec.target = v;
            } catch (const std::exception&) {
                throw ParseError(path + ": line " + std::to_string(line_no) +
                                 ": Label '" + label + "' is not a number");
            }
        }
        records.push_back(std::move(rec));
    }

    if (!duplicates.empty()) {
        std::string msg = path + ": duplicate SubjectID(s):";
        for (const auto& d : duplicates) msg += " " + d;
        throw ValidationError(msg);
    }
    if (!missing.empty()) {
        std::string msg = path + ": missing file(s):";
        for (const auto& m : missing) msg += " " + m;
        throw ValidationError(msg);
    }
    if (records.empty()) throw ValidationError(path + ": manifest has no subject rows");
    return records;
}

} // namespace patchwork
