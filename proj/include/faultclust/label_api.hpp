#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faultclust/cluster.hpp"
#include "faultclust/evalmetrics.hpp"
#include "faultclust/labels.hpp"
#include "faultclust/pipeline.hpp"
#include "faultclust/waveform_store.hpp"

namespace faultclust {

/// Min/max decimation of a window. The input is split into max_points / 2
/// contiguous buckets and each bucket emits its minimum and maximum sample in
/// time order. Windows that already fit are returned verbatim.
struct DecimatedTrace {
    std::vector<std::size_t> t;
    std::vector<double> values;
    /// Absolute bucket boundaries (buckets + 1 entries) when decimated.
    std::vector<std::size_t> edges;
    bool decimated = false;
};

DecimatedTrace decimate_minmax(std::span<const double> window, std::size_t offset, std::size_t max_points);

/// [start, end) runs of true values of `mask` inside [begin, end).
std::vector<std::pair<std::size_t, std::size_t>> mask_segments(const std::vector<bool>& mask, std::size_t begin,
                                                               std::size_t end);

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
    /// When non-empty, sent instead of `body` (used for byte-exact metrics).
    std::string raw;
};

struct LabelServiceConfig {
    std::filesystem::path dataset;
    /// Output directory of a pipeline run; may be empty or not yet populated.
    std::filesystem::path run_dir;
    std::filesystem::path label_log;
    std::size_t worksheet_per_cluster = 7;
    std::uint64_t seed = 0;
    LabelLevel level = LabelLevel::EventType;
    SilhouetteSpace silhouette_space = SilhouetteSpace::Clustering;
};

struct WindowRequest {
    std::int64_t id = 0;
    std::optional<std::size_t> start;
    std::optional<std::size_t> end;
    std::size_t max_points = 2000;
    /// Any of trend, residual, zero, anomaly.
    std::vector<std::string> overlays;
};

/// Transport-independent request handlers behind the labeling HTTP API.
/// Label writes are serialised; reads share a lock.
class LabelService {
public:
    explicit LabelService(LabelServiceConfig cfg);

    ApiResponse health() const;
    ApiResponse window(const WindowRequest& req) const;
    ApiResponse clusters(std::optional<std::size_t> per_cluster = std::nullopt) const;
    ApiResponse worksheet() const;
    ApiResponse get_labels() const;
    ApiResponse post_label(const std::string& body);
    ApiResponse recompute_metrics() const;

    /// Re-reads the run directory (assignments and model).
    void reload_run();

    const LabelServiceConfig& config() const noexcept { return cfg_; }

private:
    LabelServiceConfig cfg_;
    Dataset dataset_;
    mutable std::shared_mutex mutex_;
    LabelLog log_;
    std::optional<AssignmentTable> assignments_;
    std::size_t k_ = 0;
};

/// HTTP front end (CORS enabled) serving a LabelService.
class LabelServer {
public:
    explicit LabelServer(LabelService& service);
    ~LabelServer();
    LabelServer(const LabelServer&) = delete;
    LabelServer& operator=(const LabelServer&) = delete;

    /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace faultclust
