#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "modforge/category.hpp"

namespace modforge {

enum class Split { Unassigned, Train, Test, Validation };

const char* to_string(Split split);
Split split_from_string(std::string_view name);

/// One weakly-labeled text item.
struct RawSample {
    std::string id;
    std::string text;
    LabelSet weak_labels;
    std::string source;
    Split split = Split::Unassigned;

    friend bool operator==(const RawSample&, const RawSample&) = default;
};

/// Per-category counts indexed by Category::id; multi-label samples count
/// once per label.
using CategoryCounts = std::vector<std::size_t>;

/// Validated, immutable collection of samples. Construction enforces unique
/// ids, non-blank text and label-set invariants.
class Dataset {
public:
    explicit Dataset(std::string name, std::vector<RawSample> samples = {},
                     const Taxonomy& taxonomy = Taxonomy::standard());

    const std::string& name() const { return name_; }
    const std::vector<RawSample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }
    const CategoryCounts& counts() const { return counts_; }
    const Taxonomy& taxonomy() const { return *taxonomy_; }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.name_ == b.name_ && a.samples_ == b.samples_;
    }

private:
    std::string name_;
    std::vector<RawSample> samples_;
    CategoryCounts counts_;
    const Taxonomy* taxonomy_;
};

enum class DatasetFormat { Jsonl, Csv };

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const Taxonomy& taxonomy = Taxonomy::standard());

Dataset parse_jsonl_dataset(std::string_view text, std::string name,
                            const Taxonomy& taxonomy = Taxonomy::standard());
Dataset parse_csv_dataset(std::string_view text, std::string name,
                          const Taxonomy& taxonomy = Taxonomy::standard());

/// Canonical JSONL, one record per line with fields id, text, labels, source, split.
std::string to_jsonl(const Dataset& d);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

/// Stratified split keyed on each sample's primary (lowest-id) label.
/// Returns (train, test); throws InsufficientSamples.
std::pair<Dataset, Dataset> split_dataset(const Dataset& d, std::size_t train_per_cat,
                                          std::size_t test_per_cat, std::uint64_t seed);

CategoryCounts dataset_stats(const Dataset& d);

/// Aligned "name  count" table with a total line.
std::string format_stats(const CategoryCounts& counts, const Taxonomy& taxonomy);

/// Lowest-id member of a non-empty label set.
Category primary_label(const LabelSet& labels);

/// Deterministic Fisher-Yates driven by mt19937_64 with rejection sampling,
/// so shuffles are identical across standard libraries.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed);

}  // namespace modforge

#include <random>

namespace modforge {

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::uint64_t bound = i;
        const std::uint64_t limit = std::mt19937_64::max() - std::mt19937_64::max() % bound;
        std::uint64_t r;
        do {
            r = rng();
        } while (r >= limit);
        std::swap(items[i - 1], items[static_cast<std::size_t>(r % bound)]);
    }
}

}  // namespace modforge
