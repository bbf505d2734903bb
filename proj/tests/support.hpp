#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "modforge/corpus.hpp"
#include "modforge/gateway.hpp"

namespace testing {

namespace fs = std::filesystem;

// Half-up tenths of 100*num/den, from an integer quotient and remainder.
inline double half_up_percent(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return 0.0;
    const std::uint64_t scaled = 1000 * num;
    std::uint64_t q = scaled / den;
    const std::uint64_t r = scaled % den;
    if (2 * r >= den) ++q;
    return static_cast<double>(q) / 10.0;
}

// Decimal half-up of a real to one place, via the string form.
inline double half_up_decimal(double x) {
    std::ostringstream s;
    s.precision(6);
    s << std::fixed << x;
    std::string str = s.str();
    const auto dot = str.find('.');
    long whole = std::stol(str.substr(0, dot));
    int tenth = str[dot + 1] - '0';
    const int hundredth = str[dot + 2] - '0';
    if (hundredth >= 5) ++tenth;
    if (tenth == 10) {
        tenth = 0;
        ++whole;
    }
    return static_cast<double>(whole) + tenth / 10.0;
}

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline fs::path temp_dir(const std::string& tag) {
    static std::atomic<int> n{0};
    auto p = fs::temp_directory_path() /
             ("modforge-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
              std::to_string(n++));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

inline modforge::RawSample sample(std::string id, std::string text, modforge::LabelSet labels) {
    modforge::RawSample s;
    s.id = std::move(id);
    s.text = std::move(text);
    s.weak_labels = labels;
    s.source = "unit";
    return s;
}

// Well-formed three-part reply written out by hand.
inline std::string cot_reply(const std::string& labels, const std::string& harmful = "") {
    return "Analysis process: read the sentence carefully.\nHarmful information: " +
           (harmful.empty() ? std::string(labels == "Harmless" ? "None" : "hostile wording")
                            : harmful) +
           "\nClassification results: " + labels;
}

inline std::string data_path(const std::string& name) {
    return std::string(MODFORGE_DATA_DIR) + "/" + name;
}

}  // namespace testing
