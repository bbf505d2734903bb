#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "modforge/corpus.hpp"

namespace modforge {

struct EmbeddingVector {
    std::vector<double> values;
    std::string encoder_id;

    std::size_t dim() const { return values.size(); }
    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// Turns sentences into dense vectors. Implementations must be safe to call
/// from several threads.
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual std::string id() const = 0;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const = 0;
};

/// Offline feature-hashing encoder: lower-cased word tokens and character
/// trigrams hashed (FNV-1a 64) into `dim` signed buckets, then L2-normalized.
class HashEncoder final : public Encoder {
public:
    explicit HashEncoder(std::size_t dim = 256);
    std::string id() const override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override;

private:
    std::size_t dim_;
};

/// HTTP embedding provider: POST {"texts":[...]} -> {"vectors":[[...],...]}.
class RemoteEncoder final : public Encoder {
public:
    explicit RemoteEncoder(std::string url, double timeout_s = 30.0, std::size_t batch = 256);
    std::string id() const override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const override;

private:
    std::string url_;
    double timeout_s_;
    std::size_t batch_;
};

/// Parses `hash`, `hash:<dim>` or `remote:<url>`.
std::unique_ptr<Encoder> make_encoder(const std::string& spec);

std::uint64_t fnv1a64(std::string_view data);

/// One vector per text, order preserved. Throws EncoderUnavailable,
/// DimensionMismatch (ragged output or wrong count) or InvalidArgument
/// (empty input, non-finite components).
std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts,
                                         const Encoder& encoder);

enum class DistanceMetric { Euclidean, Cosine };

struct ClusterAssignment {
    Category category{};
    std::vector<std::string> ids;         // aligned with the clustered vectors
    std::vector<std::size_t> cluster_of;  // cluster index per vector
    std::vector<double> distance;         // distance to its centroid
    std::vector<EmbeddingVector> centroids;
    std::size_t requested_k = 0;
    std::size_t k = 0;  // after clamping to the number of distinct vectors
    std::size_t iterations = 0;
    bool converged = false;

    bool clamped() const { return k < requested_k; }
};

struct KMeansOptions {
    std::size_t max_iterations = 100;
    double tolerance = 1e-6;
    DistanceMetric metric = DistanceMetric::Euclidean;
};

/// Seeded k-means++ initialisation followed by Lloyd iterations. k is clamped
/// to the number of distinct vectors, so identical points always share a
/// cluster. `ids` defaults to the decimal position of each vector.
ClusterAssignment cluster_category(const std::vector<EmbeddingVector>& vectors, std::size_t k,
                                   std::uint64_t seed, std::vector<std::string> ids = {},
                                   const KMeansOptions& options = {});

/// The sample nearest its centroid from every non-empty cluster, ties broken
/// by smallest id; returned in cluster order. Throws MissingAssignment.
std::vector<RawSample> select_representatives(const ClusterAssignment& assignment,
                                              const std::vector<RawSample>& samples);

struct DedupOptions {
    std::size_t per_category_target = 1450;
    std::uint64_t seed = 0;
    KMeansOptions kmeans{};
    std::size_t threads = 4;
};

struct DedupReport {
    std::vector<ClusterAssignment> assignments;  // one per non-empty category
};

/// Groups samples by primary label, embeds, clusters each group with
/// k = min(target, available) and keeps one representative per cluster.
/// The result preserves the input order of the surviving samples.
Dataset dedup_dataset(const Dataset& d, const Encoder& encoder, const DedupOptions& options,
                      DedupReport* report = nullptr);

}  // namespace modforge
