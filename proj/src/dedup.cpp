#include "modforge/dedup.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <random>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "modforge/error.hpp"
#include "modforge/http.hpp"

namespace modforge {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// ---------------------------------------------------------------- encoders

HashEncoder::HashEncoder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "hash encoder dim must be > 0");
}

std::string HashEncoder::id() const { return "hash:" + std::to_string(dim_); }

namespace {

void add_feature(std::vector<double>& v, std::string_view feature) {
    const auto h = fnv1a64(feature);
    const auto bucket = static_cast<std::size_t>(h % v.size());
    // Top bit picks the sign so colliding features partially cancel.
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isspace(ch) || (ch < 0x80 && std::ispunct(ch))) {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(ch < 0x80 ? std::tolower(ch) : ch));
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

}  // namespace

std::vector<EmbeddingVector> HashEncoder::embed(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(dim_, 0.0);
        auto words = word_tokens(text);
        for (const auto& w : words) add_feature(v, "w:" + w);
        std::string joined;
        for (const auto& w : words) {
            if (!joined.empty()) joined.push_back(' ');
            joined += w;
        }
        for (std::size_t i = 0; i + 3 <= joined.size(); ++i) {
            add_feature(v, "c:" + joined.substr(i, 3));
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        out.push_back({std::move(v), id()});
    }
    return out;
}

RemoteEncoder::RemoteEncoder(std::string url, double timeout_s, std::size_t batch)
    : url_(std::move(url)), timeout_s_(timeout_s), batch_(std::max<std::size_t>(batch, 1)) {
    parse_url(url_);
}

std::string RemoteEncoder::id() const { return "remote:" + url_; }

std::vector<EmbeddingVector> RemoteEncoder::embed(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += batch_) {
        const auto end = std::min(texts.size(), start + batch_);
        nlohmann::json req;
        req["texts"] = std::vector<std::string>(texts.begin() + start, texts.begin() + end);
        HttpResult res;
        try {
            res = post_json(url_, req.dump(), timeout_s_);
        } catch (const Error& e) {
            throw Error(ErrorCode::EncoderUnavailable, e.what());
        }
        if (res.status != 200) {
            throw Error(ErrorCode::EncoderUnavailable,
                        url_ + " returned HTTP " + std::to_string(res.status));
        }
        try {
            auto body = nlohmann::json::parse(res.body);
            auto vectors = body.at("vectors").get<std::vector<std::vector<double>>>();
            if (vectors.size() != end - start) {
                throw Error(ErrorCode::DimensionMismatch,
                            "expected " + std::to_string(end - start) + " vectors, got " +
                                std::to_string(vectors.size()));
            }
            for (auto& v : vectors) out.push_back({std::move(v), id()});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::EncoderUnavailable, std::string("bad reply: ") + e.what());
        }
    }
    return out;
}

std::unique_ptr<Encoder> make_encoder(const std::string& spec) {
    if (spec == "hash") return std::make_unique<HashEncoder>();
    if (spec.starts_with("hash:")) {
        return std::make_unique<HashEncoder>(std::stoul(spec.substr(5)));
    }
    if (spec.starts_with("remote:")) return std::make_unique<RemoteEncoder>(spec.substr(7));
    throw Error(ErrorCode::InvalidArgument, "unknown encoder '" + spec + "'");
}

std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts,
                                         const Encoder& encoder) {
    if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "no texts to embed");
    auto vectors = encoder.embed(texts);
    if (vectors.size() != texts.size()) {
        throw Error(ErrorCode::DimensionMismatch, "encoder returned " +
                                                      std::to_string(vectors.size()) +
                                                      " vectors for " +
                                                      std::to_string(texts.size()) + " texts");
    }
    const auto dim = vectors.front().dim();
    if (dim == 0) throw Error(ErrorCode::DimensionMismatch, "zero-dimensional embedding");
    for (const auto& v : vectors) {
        if (v.dim() != dim) {
            throw Error(ErrorCode::DimensionMismatch,
                        std::to_string(v.dim()) + " != " + std::to_string(dim));
        }
        for (double x : v.values) {
            if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "non-finite embedding");
        }
    }
    return vectors;
}

// ---------------------------------------------------------------- k-means

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::vector<double>> prepare_points(const std::vector<EmbeddingVector>& vectors,
                                                DistanceMetric metric) {
    std::vector<std::vector<double>> points;
    points.reserve(vectors.size());
    for (const auto& v : vectors) {
        auto p = v.values;
        if (metric == DistanceMetric::Cosine) {
            double norm = 0.0;
            for (double x : p) norm += x * x;
            if (norm > 0.0) {
                norm = std::sqrt(norm);
                for (double& x : p) x /= norm;
            }
        }
        points.push_back(std::move(p));
    }
    return points;
}

std::size_t count_distinct(const std::vector<std::vector<double>>& points) {
    auto sorted = points;
    std::sort(sorted.begin(), sorted.end());
    return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

// Nearest centroid, lowest index on ties.
std::pair<std::size_t, double> nearest(const std::vector<double>& p,
                                       const std::vector<std::vector<double>>& centroids) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return {best, best_d};
}

std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& points,
                                               std::size_t k, std::mt19937_64& rng) {
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);
    centroids.push_back(points[rng() % points.size()]);
    std::vector<double> d2(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);
    while (centroids.size() < k) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t pick = 0;
        if (total > 0.0) {
            double target = uniform01(rng) * total;
            pick = points.size() - 1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                target -= d2[i];
                if (target < 0.0 && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
            // Guard against rounding landing on an already-chosen point.
            if (d2[pick] == 0.0) {
                pick = static_cast<std::size_t>(
                    std::max_element(d2.begin(), d2.end()) - d2.begin());
            }
        }
        centroids.push_back(points[pick]);
        for (std::size_t i = 0; i < points.size(); ++i) {
            d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
        }
    }
    return centroids;
}

}  // namespace

ClusterAssignment cluster_category(const std::vector<EmbeddingVector>& vectors, std::size_t k,
                                   std::uint64_t seed, std::vector<std::string> ids,
                                   const KMeansOptions& options) {
    if (vectors.empty()) throw Error(ErrorCode::InvalidArgument, "no vectors to cluster");
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (ids.empty()) {
        for (std::size_t i = 0; i < vectors.size(); ++i) ids.push_back(std::to_string(i));
    }
    if (ids.size() != vectors.size()) {
        throw Error(ErrorCode::InvalidArgument, "ids and vectors differ in length");
    }
    const auto dim = vectors.front().dim();
    for (const auto& v : vectors) {
        if (v.dim() != dim) throw Error(ErrorCode::DimensionMismatch, "ragged vectors");
    }

    const auto points = prepare_points(vectors, options.metric);
    ClusterAssignment out;
    out.ids = std::move(ids);
    out.requested_k = k;
    out.k = std::min(k, count_distinct(points));

    std::mt19937_64 rng(seed);
    auto centroids = kmeanspp_init(points, out.k, rng);
    std::vector<std::size_t> assign(points.size(), 0);
    std::vector<double> dist(points.size(), 0.0);

    auto assign_all = [&] {
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto [c, d] = nearest(points[i], centroids);
            assign[i] = c;
            dist[i] = d;
        }
    };

    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        assign_all();
        out.iterations = iter + 1;
        std::vector<std::vector<double>> sums(out.k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> sizes(out.k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            ++sizes[assign[i]];
            for (std::size_t j = 0; j < dim; ++j) sums[assign[i]][j] += points[i][j];
        }
        double max_shift = 0.0;
        for (std::size_t c = 0; c < out.k; ++c) {
            std::vector<double> next;
            if (sizes[c] == 0) {
                // Reseed an empty cluster with the point farthest from its centroid.
                auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) -
                                                    dist.begin());
                next = points[far];
                dist[far] = 0.0;
            } else {
                next = std::move(sums[c]);
                for (double& x : next) x /= static_cast<double>(sizes[c]);
            }
            max_shift = std::max(max_shift, std::sqrt(squared_distance(next, centroids[c])));
            centroids[c] = std::move(next);
        }
        if (max_shift <= options.tolerance) {
            out.converged = true;
            break;
        }
    }
    // Final assignment against the final centroids.
    assign_all();

    out.cluster_of = assign;
    out.distance.resize(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i) out.distance[i] = std::sqrt(dist[i]);
    const auto encoder_id = vectors.front().encoder_id;
    for (auto& c : centroids) out.centroids.push_back({std::move(c), encoder_id});
    return out;
}

std::vector<RawSample> select_representatives(const ClusterAssignment& assignment,
                                              const std::vector<RawSample>& samples) {
    std::unordered_map<std::string_view, std::size_t> position;
    for (std::size_t i = 0; i < assignment.ids.size(); ++i) position.emplace(assignment.ids[i], i);

    constexpr auto kNone = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> best(assignment.k, kNone);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        auto it = position.find(samples[s].id);
        if (it == position.end()) throw Error(ErrorCode::MissingAssignment, samples[s].id);
        const auto pos = it->second;
        const auto cluster = assignment.cluster_of[pos];
        auto& cur = best[cluster];
        if (cur == kNone) {
            cur = s;
            continue;
        }
        const double d_new = assignment.distance[pos];
        const double d_cur = assignment.distance[position.at(samples[cur].id)];
        const double eps = 1e-12 * std::max({1.0, d_new, d_cur});
        if (d_new < d_cur - eps || (std::abs(d_new - d_cur) <= eps && samples[s].id < samples[cur].id)) {
            cur = s;
        }
    }
    std::vector<RawSample> out;
    for (auto idx : best) {
        if (idx != kNone) out.push_back(samples[idx]);
    }
    return out;
}

Dataset dedup_dataset(const Dataset& d, const Encoder& encoder, const DedupOptions& options,
                      DedupReport* report) {
    if (options.per_category_target == 0) {
        throw Error(ErrorCode::InvalidArgument, "per-category target must be >= 1");
    }
    const auto& taxonomy = d.taxonomy();
    std::map<Category, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < d.size(); ++i) {
        groups[primary_label(d.samples()[i].weak_labels)].push_back(i);
    }
    if (groups.empty()) return Dataset(d.name() + ".dedup", {}, taxonomy);

    std::vector<std::string> texts;
    texts.reserve(d.size());
    for (const auto& s : d.samples()) texts.push_back(s.text);
    const auto vectors = embed_texts(texts, encoder);

    struct Job {
        Category category;
        std::vector<std::size_t> members;
    };
    std::vector<Job> jobs;
    for (auto& [c, members] : groups) jobs.push_back({c, std::move(members)});

    auto run_job = [&](const Job& job) {
        std::vector<EmbeddingVector> vs;
        std::vector<std::string> ids;
        std::vector<RawSample> ss;
        for (auto i : job.members) {
            vs.push_back(vectors[i]);
            ids.push_back(d.samples()[i].id);
            ss.push_back(d.samples()[i]);
        }
        auto k = std::min(options.per_category_target, vs.size());
        auto assignment = cluster_category(vs, k, options.seed ^ (0x9e3779b97f4a7c15ULL * (job.category.id + 1)),
                                           std::move(ids), options.kmeans);
        assignment.category = job.category;
        auto reps = select_representatives(assignment, ss);
        return std::make_pair(std::move(assignment), std::move(reps));
    };

    // Bounded parallelism over categories; results are collected in category order.
    std::vector<std::pair<ClusterAssignment, std::vector<RawSample>>> results(jobs.size());
    const std::size_t width = std::max<std::size_t>(1, options.threads);
    for (std::size_t start = 0; start < jobs.size(); start += width) {
        std::vector<std::future<std::pair<ClusterAssignment, std::vector<RawSample>>>> futures;
        for (std::size_t j = start; j < std::min(jobs.size(), start + width); ++j) {
            futures.push_back(std::async(std::launch::async, run_job, std::cref(jobs[j])));
        }
        for (std::size_t j = 0; j < futures.size(); ++j) results[start + j] = futures[j].get();
    }

    std::unordered_map<std::string_view, bool> keep;
    for (const auto& [assignment, reps] : results) {
        for (const auto& r : reps) keep[r.id] = true;
    }
    std::vector<RawSample> kept;
    for (const auto& s : d.samples()) {
        if (keep.count(s.id)) kept.push_back(s);
    }
    if (report) {
        report->assignments.clear();
        for (auto& r : results) report->assignments.push_back(std::move(r.first));
    }
    return Dataset(d.name() + ".dedup", std::move(kept), taxonomy);
}

}  // namespace modforge
