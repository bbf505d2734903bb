#include "modforge/corpus.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/io.hpp"

namespace modforge {

using nlohmann::json;
using nlohmann::ordered_json;

const char* to_string(Split split) {
    switch (split) {
        case Split::Train:
            return "train";
        case Split::Test:
            return "test";
        case Split::Validation:
            return "validation";
        case Split::Unassigned:
            break;
    }
    return "unassigned";
}

Split split_from_string(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "test") return Split::Test;
    if (name == "validation") return Split::Validation;
    if (name == "unassigned" || name.empty()) return Split::Unassigned;
    throw Error(ErrorCode::InvalidArgument, "unknown split '" + std::string(name) + "'");
}

Dataset::Dataset(std::string name, std::vector<RawSample> samples, const Taxonomy& taxonomy)
    : name_(std::move(name)), samples_(std::move(samples)), taxonomy_(&taxonomy) {
    counts_.assign(taxonomy.size(), 0);
    std::unordered_set<std::string_view> seen;
    seen.reserve(samples_.size());
    for (const auto& s : samples_) {
        if (!seen.insert(s.id).second) throw Error(ErrorCode::DuplicateId, s.id);
        if (trim(s.text).empty()) throw Error(ErrorCode::EmptyText, s.id);
        try {
            validate_label_set(s.weak_labels, taxonomy);
        } catch (const Error& e) {
            throw Error(ErrorCode::InvalidLabel, s.id + ": " + e.what());
        }
        for (auto c : s.weak_labels.members()) {
            if (c.id >= counts_.size()) throw Error(ErrorCode::InvalidLabel, s.id);
            ++counts_[c.id];
        }
    }
}

namespace {

LabelSet labels_from_names(const std::vector<std::string>& names, const Taxonomy& taxonomy) {
    LabelSet labels;
    for (const auto& n : names) {
        auto c = taxonomy.from_canonical(n);
        if (!c) throw Error(ErrorCode::InvalidLabel, n);
        labels.insert(*c);
    }
    return labels;
}

// RFC 4180: quoted fields may contain commas, newlines and doubled quotes.
std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line;
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (field_started && !field.empty()) {
                    throw ParseError(line, "stray quote inside unquoted field");
                }
                quoted = true;
                field_started = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                field_started = false;
                break;
            case '\r':
                break;
            case '\n':
                row.push_back(std::move(field));
                field.clear();
                field_started = false;
                if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
                row.clear();
                ++line;
                break;
            default:
                field.push_back(ch);
                field_started = true;
        }
    }
    if (quoted) throw ParseError(line, "unterminated quoted field");
    if (field_started || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> split_label_field(const std::string& field) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : field) {
        if (ch == '|' || ch == ';') {
            if (auto t = trim(cur); !t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (auto t = trim(cur); !t.empty()) out.push_back(t);
    return out;
}

}  // namespace

Dataset parse_jsonl_dataset(std::string_view text, std::string name, const Taxonomy& taxonomy) {
    std::vector<RawSample> samples;
    auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const std::size_t lineno = i + 1;
        json j;
        try {
            j = json::parse(lines[i]);
        } catch (const json::parse_error& e) {
            throw ParseError(lineno, e.what());
        }
        RawSample s;
        try {
            s.id = j.at("id").get<std::string>();
            s.text = j.at("text").get<std::string>();
            s.weak_labels =
                labels_from_names(j.at("labels").get<std::vector<std::string>>(), taxonomy);
            s.source = j.value("source", std::string{});
            s.split = split_from_string(j.value("split", std::string{}));
        } catch (const json::exception& e) {
            throw ParseError(lineno, e.what());
        }
        samples.push_back(std::move(s));
    }
    return Dataset(std::move(name), std::move(samples), taxonomy);
}

Dataset parse_csv_dataset(std::string_view text, std::string name, const Taxonomy& taxonomy) {
    auto rows = parse_csv_rows(text);
    if (rows.empty()) return Dataset(std::move(name), {}, taxonomy);
    const auto& header = rows.front();
    auto column = [&](std::string_view col) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), col);
        return it == header.end() ? -1 : it - header.begin();
    };
    const auto id_col = column("id"), text_col = column("text"), labels_col = column("labels"),
               source_col = column("source"), split_col = column("split");
    if (id_col < 0 || text_col < 0 || labels_col < 0) {
        throw ParseError(1, "CSV header must name id, text and labels columns");
    }
    std::vector<RawSample> samples;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto cell = [&](std::ptrdiff_t col) -> std::string {
            return col >= 0 && static_cast<std::size_t>(col) < row.size() ? row[col] : "";
        };
        if (row.size() < header.size()) {
            throw ParseError(r + 1, "expected " + std::to_string(header.size()) + " fields, got " +
                                        std::to_string(row.size()));
        }
        RawSample s;
        s.id = cell(id_col);
        s.text = cell(text_col);
        s.weak_labels = labels_from_names(split_label_field(cell(labels_col)), taxonomy);
        s.source = cell(source_col);
        s.split = split_from_string(cell(split_col));
        samples.push_back(std::move(s));
    }
    return Dataset(std::move(name), std::move(samples), taxonomy);
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const Taxonomy& taxonomy) {
    auto text = read_file(path);
    auto name = path.stem().string();
    return format == DatasetFormat::Jsonl ? parse_jsonl_dataset(text, name, taxonomy)
                                          : parse_csv_dataset(text, name, taxonomy);
}

std::string to_jsonl(const Dataset& d) {
    std::string out;
    for (const auto& s : d.samples()) {
        ordered_json j;
        j["id"] = s.id;
        j["text"] = s.text;
        auto labels = ordered_json::array();
        for (auto c : s.weak_labels.members()) labels.push_back(d.taxonomy().canonical_name(c));
        j["labels"] = std::move(labels);
        j["source"] = s.source;
        j["split"] = to_string(s.split);
        out += j.dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    write_file_atomic(path, to_jsonl(d));
}

Category primary_label(const LabelSet& labels) {
    auto members = labels.members();
    if (members.empty()) throw Error(ErrorCode::InvalidLabel, "empty label set");
    return members.front();
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& d, std::size_t train_per_cat,
                                          std::size_t test_per_cat, std::uint64_t seed) {
    const auto& taxonomy = d.taxonomy();
    std::vector<std::vector<std::size_t>> groups(taxonomy.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        groups[primary_label(d.samples()[i].weak_labels).id].push_back(i);
    }
    const std::size_t need = train_per_cat + test_per_cat;
    std::vector<std::size_t> train_idx, test_idx;
    if (need > 0) {
        for (auto c : taxonomy.all()) {
            auto& g = groups[c.id];
            if (g.size() < need) {
                throw Error(ErrorCode::InsufficientSamples,
                            taxonomy.canonical_name(c) + " have " + std::to_string(g.size()) +
                                ", need " + std::to_string(need));
            }
            // Mix the category id into the seed so categories shuffle independently.
            seeded_shuffle(g, seed * 1000003u + c.id);
            train_idx.insert(train_idx.end(), g.begin(), g.begin() + train_per_cat);
            test_idx.insert(test_idx.end(), g.begin() + train_per_cat, g.begin() + need);
        }
    }
    auto build = [&](std::vector<std::size_t> idx, Split split, const std::string& suffix) {
        std::sort(idx.begin(), idx.end());
        std::vector<RawSample> out;
        out.reserve(idx.size());
        for (auto i : idx) {
            auto s = d.samples()[i];
            s.split = split;
            out.push_back(std::move(s));
        }
        return Dataset(d.name() + suffix, std::move(out), taxonomy);
    };
    return {build(std::move(train_idx), Split::Train, ".train"),
            build(std::move(test_idx), Split::Test, ".test")};
}

CategoryCounts dataset_stats(const Dataset& d) {
    CategoryCounts counts(d.taxonomy().size(), 0);
    for (const auto& s : d.samples()) {
        for (auto c : s.weak_labels.members()) ++counts[c.id];
    }
    return counts;
}

std::string format_stats(const CategoryCounts& counts, const Taxonomy& taxonomy) {
    std::ostringstream out;
    std::size_t total = 0;
    for (auto c : taxonomy.all()) {
        const auto n = c.id < counts.size() ? counts[c.id] : 0;
        out << std::left << std::setw(20) << taxonomy.canonical_name(c) << std::right
            << std::setw(8) << n << '\n';
        total += n;
    }
    out << std::left << std::setw(20) << "total" << std::right << std::setw(8) << total << '\n';
    return out.str();
}

}  // namespace modforge
