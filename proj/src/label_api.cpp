#include "faultclust/label_api.hpp"

#include <algorithm>
#include <charconv>
#include <mutex>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

#include "faultclust/preprocess.hpp"

namespace faultclust {

namespace fs = std::filesystem;

namespace {

ApiResponse error_response(int status, std::string message) {
    return {status, {{"error", std::move(message)}}, {}};
}

std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

nlohmann::json trace_json(const DecimatedTrace& d) {
    nlohmann::json j{{"t", d.t}, {"values", d.values}};
    if (d.decimated) {
        j["bucket_edges"] = d.edges;
    }
    return j;
}

nlohmann::json segments_json(const std::vector<std::pair<std::size_t, std::size_t>>& segs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [a, b] : segs) {
        out.push_back({a, b});
    }
    return out;
}

} // namespace

DecimatedTrace decimate_minmax(std::span<const double> window, std::size_t offset, std::size_t max_points) {
    DecimatedTrace out;
    if (window.size() <= max_points) {
        out.values.assign(window.begin(), window.end());
        out.t.resize(window.size());
        for (std::size_t i = 0; i < window.size(); ++i) {
            out.t[i] = offset + i;
        }
        return out;
    }
    if (max_points < 2) {
        throw InvalidArgument("decimate_minmax: max_points must be at least 2");
    }
    out.decimated = true;
    const std::size_t buckets = max_points / 2;
    const std::size_t n = window.size();
    out.edges.push_back(offset);
    for (std::size_t b = 0; b < buckets; ++b) {
        const std::size_t lo = b * n / buckets;
        const std::size_t hi = (b + 1) * n / buckets;
        const auto first = window.begin() + static_cast<std::ptrdiff_t>(lo);
        const auto last = window.begin() + static_cast<std::ptrdiff_t>(hi);
        const auto [mn, mx] = std::minmax_element(first, last);
        std::size_t i = static_cast<std::size_t>(mn - window.begin());
        std::size_t j = static_cast<std::size_t>(mx - window.begin());
        if (i > j) {
            std::swap(i, j);
        }
        out.t.push_back(offset + i);
        out.values.push_back(window[i]);
        if (j != i) {
            out.t.push_back(offset + j);
            out.values.push_back(window[j]);
        }
        out.edges.push_back(offset + hi);
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> mask_segments(const std::vector<bool>& mask, std::size_t begin,
                                                               std::size_t end) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t i = begin;
    while (i < end) {
        if (!mask[i]) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < end && mask[j]) {
            ++j;
        }
        out.emplace_back(i, j);
        i = j;
    }
    return out;
}

LabelService::LabelService(LabelServiceConfig cfg)
    : cfg_(std::move(cfg)), dataset_(load_dataset(cfg_.dataset)), log_(cfg_.label_log) {
    reload_run();
}

void LabelService::reload_run() {
    std::unique_lock lock(mutex_);
    assignments_.reset();
    k_ = 0;
    if (cfg_.run_dir.empty()) {
        return;
    }
    const auto a = cfg_.run_dir / artifacts::kAssignments;
    const auto m = cfg_.run_dir / artifacts::kModel;
    if (fs::exists(a) && fs::exists(m)) {
        assignments_ = read_assignments_csv(a);
        k_ = read_model_json(m).k;
    }
}

ApiResponse LabelService::health() const {
    std::shared_lock lock(mutex_);
    return {200,
            {{"status", "ok"},
             {"records", dataset_.records.size()},
             {"timesteps", dataset_.meta.timesteps},
             {"model_loaded", assignments_.has_value()},
             {"label_revision", log_.revision()}},
            {}};
}

ApiResponse LabelService::window(const WindowRequest& req) const {
    std::size_t index = 0;
    try {
        index = dataset_.index_of(req.id);
    } catch (const NotFound&) {
        return error_response(404, fmt::format("unknown sample {}", req.id));
    }
    const std::size_t n = dataset_.meta.timesteps;
    const std::size_t start = req.start.value_or(0);
    const std::size_t end = req.end.value_or(n);
    if (start >= end || end > n) {
        return error_response(400, fmt::format("invalid range [{}, {}) for {} samples", start, end, n));
    }
    if (req.max_points < 100) {
        return error_response(400, "max_points must be at least 100");
    }
    bool want_trend = false;
    bool want_residual = false;
    bool want_zero = false;
    bool want_anomaly = false;
    for (const auto& o : req.overlays) {
        if (o == "trend") {
            want_trend = true;
        } else if (o == "residual") {
            want_residual = true;
        } else if (o == "zero") {
            want_zero = true;
        } else if (o == "anomaly") {
            want_anomaly = true;
        } else {
            return error_response(400, fmt::format("unknown overlay '{}'", o));
        }
    }

    const auto& rec = dataset_.records[index];
    const std::size_t len = end - start;
    nlohmann::json channels = nlohmann::json::object();
    nlohmann::json trend = nlohmann::json::object();
    nlohmann::json residual = nlohmann::json::object();
    nlohmann::json zero = nlohmann::json::object();
    nlohmann::json anomaly = nlohmann::json::object();
    std::vector<double> v0(len, 0.0);
    std::vector<double> i0(len, 0.0);
    bool decimated = false;

    for (std::size_t c = 0; c < kChannels; ++c) {
        const auto full = to_double(rec.channel(c, n));
        const std::span<const double> win(full.data() + start, len);
        auto& zs = c < 3 ? v0 : i0;
        for (std::size_t i = 0; i < len; ++i) {
            zs[i] += win[i] / 3.0;
        }
        const auto trace = decimate_minmax(win, start, req.max_points);
        decimated = decimated || trace.decimated;
        const std::string name(kChannelNames[c]);
        channels[name] = trace_json(trace);
        if (want_trend || want_residual || want_zero || want_anomaly) {
            auto d = decompose(full, dataset_.meta.period());
            if (want_anomaly) {
                detect_anomalies(d);
                anomaly[name] = segments_json(mask_segments(d.anomaly_mask, start, end));
            }
            if (want_zero) {
                zero[name] = segments_json(mask_segments(d.zero_indicator, start, end));
            }
            if (want_trend) {
                trend[name] = trace_json(
                    decimate_minmax(std::span<const double>(d.trend.data() + start, len), start, req.max_points));
            }
            if (want_residual) {
                residual[name] = trace_json(
                    decimate_minmax(std::span<const double>(d.residual.data() + start, len), start, req.max_points));
            }
        }
    }

    nlohmann::json body;
    body["id"] = req.id;
    body["start"] = start;
    body["end"] = end;
    body["timesteps"] = n;
    body["sampling_rate_hz"] = dataset_.meta.sampling_rate_hz;
    body["max_points"] = req.max_points;
    body["decimated"] = decimated;
    body["channels"] = std::move(channels);
    body["zero_sequence"] = {{"V0", trace_json(decimate_minmax(v0, start, req.max_points))},
                             {"I0", trace_json(decimate_minmax(i0, start, req.max_points))}};
    nlohmann::json overlays = nlohmann::json::object();
    if (want_trend) {
        overlays["trend"] = std::move(trend);
    }
    if (want_residual) {
        overlays["residual"] = std::move(residual);
    }
    if (want_zero) {
        overlays["zero"] = std::move(zero);
    }
    if (want_anomaly) {
        overlays["anomaly"] = std::move(anomaly);
    }
    body["overlays"] = std::move(overlays);

    std::shared_lock lock(mutex_);
    body["cluster"] = nullptr;
    if (assignments_) {
        const auto& ids = assignments_->record_ids;
        if (const auto it = std::find(ids.begin(), ids.end(), req.id); it != ids.end()) {
            body["cluster"] = assignments_->clusters[static_cast<std::size_t>(it - ids.begin())];
        }
    }
    const auto latest = log_.latest(req.id);
    body["label"] = latest ? label_to_json(latest->label) : nlohmann::json(nullptr);
    return {200, std::move(body), {}};
}

ApiResponse LabelService::clusters(std::optional<std::size_t> per_cluster) const {
    std::shared_lock lock(mutex_);
    if (!assignments_) {
        return error_response(409, "no cluster model loaded");
    }
    const auto& a = *assignments_;
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto& s : cluster_size_table(a.clusters)) {
        sizes.push_back({{"cluster", s.cluster}, {"count", s.count}, {"percent", s.percent}});
    }
    nlohmann::json samples = nlohmann::json::object();
    for (const auto& item :
         sample_worksheet(a.record_ids, a.clusters, per_cluster.value_or(cfg_.worksheet_per_cluster), cfg_.seed)) {
        samples[std::to_string(item.cluster)].push_back(item.sample_id);
    }
    return {200, {{"k", k_}, {"records", a.record_ids.size()}, {"sizes", sizes}, {"samples", samples}}, {}};
}

ApiResponse LabelService::worksheet() const {
    std::shared_lock lock(mutex_);
    if (!assignments_) {
        return error_response(409, "no cluster model loaded");
    }
    const auto& a = *assignments_;
    nlohmann::json items = nlohmann::json::array();
    std::size_t labeled = 0;
    for (const auto& item : sample_worksheet(a.record_ids, a.clusters, cfg_.worksheet_per_cluster, cfg_.seed)) {
        const auto latest = log_.latest(item.sample_id);
        labeled += latest ? 1 : 0;
        items.push_back({{"cluster", item.cluster},
                         {"sample_id", item.sample_id},
                         {"labeled", latest.has_value()},
                         {"label", latest ? label_to_json(latest->label) : nlohmann::json(nullptr)}});
    }
    return {200,
            {{"per_cluster", cfg_.worksheet_per_cluster},
             {"seed", cfg_.seed},
             {"total", items.size()},
             {"labeled", labeled},
             {"items", items}},
            {}};
}

ApiResponse LabelService::get_labels() const {
    std::shared_lock lock(mutex_);
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& l : log_.current()) {
        labels.push_back(label_to_json(l));
    }
    return {200, {{"revision", log_.revision()}, {"labels", labels}}, {}};
}

ApiResponse LabelService::post_label(const std::string& body) {
    LabelRecord label;
    try {
        label = label_from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, fmt::format("malformed label: {}", e.what()));
    } catch (const InvalidArgument& e) {
        return error_response(400, e.what());
    }
    try {
        dataset_.index_of(label.sample_id);
    } catch (const NotFound&) {
        return error_response(404, fmt::format("unknown sample {}", label.sample_id));
    }
    std::unique_lock lock(mutex_);
    const auto entry = log_.append(label);
    return {201, {{"revision", entry.revision}, {"timestamp", entry.timestamp}, {"label", label_to_json(entry.label)}},
            {}};
}

ApiResponse LabelService::recompute_metrics() const {
    std::shared_lock lock(mutex_);
    if (!assignments_) {
        return error_response(409, "no cluster model loaded");
    }
    const auto labels = log_.current();
    if (labels.empty()) {
        return error_response(409, "no labels recorded yet");
    }
    try {
        ApiResponse r;
        r.raw = report_to_json(evaluate_run(cfg_.run_dir, labels, cfg_.level, cfg_.silhouette_space));
        return r;
    } catch (const NotFound& e) {
        return error_response(409, e.what());
    }
}

struct LabelServer::Impl {
    explicit Impl(LabelService& s) : service(s) {}
    LabelService& service;
    httplib::Server server;
};

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    if (!r.raw.empty()) {
        res.set_content(r.raw, "application/json");
    } else {
        res.set_content(r.body.dump(), "application/json");
    }
}

std::optional<std::size_t> size_param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) {
        return std::nullopt;
    }
    const auto v = req.get_param_value(key);
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw InvalidArgument(fmt::format("query parameter '{}' must be a non-negative integer", key));
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

} // namespace

LabelServer::LabelServer(LabelService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& svr = impl_->server;
    auto& svc = impl_->service;
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    svr.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const InvalidArgument& e) {
            send(res, error_response(400, e.what()));
        } catch (const std::exception& e) {
            send(res, error_response(500, e.what()));
        }
    });

    svr.Get("/health", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.health()); });
    svr.Get(R"(/samples/(-?\d+)/window)", [&svc](const httplib::Request& req, httplib::Response& res) {
        WindowRequest w;
        const auto id = req.matches[1].str();
        if (std::from_chars(id.data(), id.data() + id.size(), w.id).ec != std::errc()) {
            send(res, error_response(400, "invalid sample id"));
            return;
        }
        w.start = size_param(req, "start");
        w.end = size_param(req, "end");
        w.max_points = size_param(req, "max_points").value_or(w.max_points);
        if (req.has_param("overlays")) {
            w.overlays = split_csv(req.get_param_value("overlays"));
        }
        send(res, svc.window(w));
    });
    svr.Get("/clusters", [&svc](const httplib::Request& req, httplib::Response& res) {
        send(res, svc.clusters(size_param(req, "per_cluster")));
    });
    svr.Get("/worksheet", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.worksheet()); });
    svr.Get("/labels", [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.get_labels()); });
    svr.Post("/labels",
             [&svc](const httplib::Request& req, httplib::Response& res) { send(res, svc.post_label(req.body)); });
    svr.Post("/metrics/recompute",
             [&svc](const httplib::Request&, httplib::Response& res) { send(res, svc.recompute_metrics()); });
}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind(const std::string& host, int port) {
    auto& svr = impl_->server;
    if (port == 0) {
        const int p = svr.bind_to_any_port(host);
        if (p < 0) {
            throw IoError(fmt::format("cannot bind {}", host));
        }
        return p;
    }
    if (!svr.bind_to_port(host, port)) {
        throw IoError(fmt::format("cannot bind {}:{}", host, port));
    }
    return port;
}

void LabelServer::listen() { impl_->server.listen_after_bind(); }

void LabelServer::stop() {
    if (impl_) {
        impl_->server.stop();
    }
}

} // namespace faultclust
