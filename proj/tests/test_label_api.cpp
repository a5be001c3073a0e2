#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "faultclust/label_api.hpp"
#include "faultclust/synthgen.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace faultclust;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Fixture {
    testing_support::TempDir dir;
    GeneratedDataset gen;
    fs::path manifest;
    fs::path run_dir;

    explicit Fixture(bool with_run = true) {
        DatasetMeta meta;
        meta.timesteps = 2048;
        GeneratorOptions opts;
        opts.noise_std = 0.0;
        gen = generate_dataset({{EventType::Normal, 8}, {EventType::OpenCircuit, 8}, {EventType::SwitchOn, 8}}, meta,
                               5, opts);
        manifest = dir / "ds.json";
        save_dataset(gen.dataset, manifest);
        run_dir = dir / "run";
        if (with_run) {
            PipelineConfig cfg;
            cfg.input = manifest;
            cfg.output_dir = run_dir;
            cfg.reduction.mode = ReductionMode::Pca;
            cfg.clustering.k = 3;
            run_pipeline(cfg);
        }
    }

    LabelServiceConfig config() const {
        LabelServiceConfig c;
        c.dataset = manifest;
        c.run_dir = run_dir;
        c.label_log = dir / "labels.jsonl";
        c.worksheet_per_cluster = 3;
        c.seed = 4;
        return c;
    }

    std::int64_t first_of(EventType e) const {
        const auto it = std::find(gen.events.begin(), gen.events.end(), e);
        return static_cast<std::int64_t>(it - gen.events.begin());
    }
};

std::string label_body(std::int64_t id, const std::string& cls, const std::string& type,
                       const std::string& phase = "N/A") {
    return json{{"sample_id", id}, {"fault_class", cls}, {"fault_type", type}, {"phase", phase}}.dump();
}

} // namespace

TEST_CASE("min-max decimation keeps each bucket's extremes", "[decimate]") {
    std::mt19937_64 gen(8);
    std::normal_distribution<double> nd;
    std::vector<double> x(2048);
    for (auto& v : x) {
        v = nd(gen);
    }
    const std::size_t offset = 100;
    const auto d = decimate_minmax(x, offset, 1000);
    REQUIRE(d.decimated);
    CHECK(d.values.size() <= 1000);
    CHECK(d.t.size() == d.values.size());
    REQUIRE(d.edges.size() == 501);
    CHECK(d.edges.front() == offset);
    CHECK(d.edges.back() == offset + x.size());
    CHECK(std::is_sorted(d.t.begin(), d.t.end()));

    for (std::size_t b = 0; b + 1 < d.edges.size(); ++b) {
        const std::size_t lo = d.edges[b] - offset;
        const std::size_t hi = d.edges[b + 1] - offset;
        REQUIRE(hi > lo);
        double mn = x[lo];
        double mx = x[lo];
        for (std::size_t i = lo; i < hi; ++i) {
            mn = std::min(mn, x[i]);
            mx = std::max(mx, x[i]);
        }
        std::vector<double> emitted;
        for (std::size_t k = 0; k < d.t.size(); ++k) {
            if (d.t[k] >= d.edges[b] && d.t[k] < d.edges[b + 1]) {
                REQUIRE(d.values[k] == x[d.t[k] - offset]);
                emitted.push_back(d.values[k]);
            }
        }
        REQUIRE(!emitted.empty());
        REQUIRE(*std::min_element(emitted.begin(), emitted.end()) == mn);
        REQUIRE(*std::max_element(emitted.begin(), emitted.end()) == mx);
    }
    CHECK(*std::min_element(d.values.begin(), d.values.end()) == *std::min_element(x.begin(), x.end()));
    CHECK(*std::max_element(d.values.begin(), d.values.end()) == *std::max_element(x.begin(), x.end()));
}

TEST_CASE("decimation passes short windows through", "[decimate]") {
    const std::vector<double> x{3, 1, 4, 1, 5};
    const auto d = decimate_minmax(x, 10, 100);
    CHECK_FALSE(d.decimated);
    CHECK(d.values == x);
    CHECK(d.t == std::vector<std::size_t>{10, 11, 12, 13, 14});
    CHECK(d.edges.empty());
}

TEST_CASE("mask segments", "[decimate]") {
    const std::vector<bool> m{false, true, true, false, true, true, true, false};
    using Seg = std::vector<std::pair<std::size_t, std::size_t>>;
    CHECK(mask_segments(m, 0, 8) == Seg{{1, 3}, {4, 7}});
    CHECK(mask_segments(m, 2, 5) == Seg{{2, 3}, {4, 5}});
    CHECK(mask_segments(m, 0, 1).empty());
}

TEST_CASE("window endpoint validates ids, ranges and overlays", "[api]") {
    Fixture fx;
    LabelService svc(fx.config());
    CHECK(svc.health().body.at("records") == 24);
    CHECK(svc.health().body.at("model_loaded") == true);

    WindowRequest req;
    req.id = 999;
    CHECK(svc.window(req).status == 404);
    req.id = 0;
    req.start = 500;
    req.end = 400;
    CHECK(svc.window(req).status == 400);
    req.start = 0;
    req.end = 4096;
    CHECK(svc.window(req).status == 400);
    req.end.reset();
    req.max_points = 10;
    CHECK(svc.window(req).status == 400);
    req.max_points = 2000;
    req.overlays = {"sparkles"};
    CHECK(svc.window(req).status == 400);

    req.overlays.clear();
    const auto full = svc.window(req);
    REQUIRE(full.status == 200);
    CHECK(full.body.at("decimated") == true);
    CHECK(full.body.at("channels").size() == 6);
    CHECK(full.body.at("channels").at("V1").at("values").size() <= 2000);
    CHECK(full.body.at("zero_sequence").contains("I0"));
    CHECK(full.body.at("cluster").is_number());
    CHECK(full.body.at("label").is_null());

    req.start = 100;
    req.end = 600;
    const auto part = svc.window(req);
    REQUIRE(part.status == 200);
    CHECK(part.body.at("decimated") == false);
    CHECK(part.body.at("channels").at("I3").at("t").front() == 100);
    CHECK(part.body.at("channels").at("I3").at("t").size() == 500);
    const auto stored = fx.gen.dataset.records[0].channel(5, 2048);
    CHECK(part.body.at("channels").at("I3").at("values").at(0).get<double>() == static_cast<double>(stored[100]));
}

TEST_CASE("zero overlay marks the interrupted current of an open circuit", "[api]") {
    Fixture fx(false);
    LabelService svc(fx.config());
    WindowRequest req;
    req.id = fx.first_of(EventType::OpenCircuit);
    req.overlays = {"zero", "anomaly", "trend", "residual"};
    const auto r = svc.window(req);
    REQUIRE(r.status == 200);
    const auto& zero = r.body.at("overlays").at("zero");
    std::size_t zeroed_currents = 0;
    for (const char* ch : {"I1", "I2", "I3"}) {
        if (!zero.at(ch).empty()) {
            ++zeroed_currents;
            const auto seg = zero.at(ch).at(0);
            CHECK(seg.at(1).get<std::size_t>() - seg.at(0).get<std::size_t>() >= 256);
        }
    }
    CHECK(zeroed_currents == 1);
    for (const char* ch : {"V1", "V2", "V3"}) {
        CHECK(zero.at(ch).empty());
    }
    CHECK(r.body.at("overlays").at("trend").contains("V1"));
    CHECK(r.body.at("cluster").is_null());
}

TEST_CASE("cluster and worksheet endpoints need a model", "[api]") {
    Fixture fx(false);
    LabelService svc(fx.config());
    CHECK(svc.clusters().status == 409);
    CHECK(svc.worksheet().status == 409);
    CHECK(svc.recompute_metrics().status == 409);
}

TEST_CASE("cluster sizes and worksheet agree with the library", "[api]") {
    Fixture fx;
    LabelService svc(fx.config());
    const auto table = read_assignments_csv(fx.run_dir / artifacts::kAssignments);

    const auto c = svc.clusters();
    REQUIRE(c.status == 200);
    CHECK(c.body.at("k") == 3);
    const auto sizes = cluster_size_table(table.clusters);
    REQUIRE(c.body.at("sizes").size() == sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        CHECK(c.body.at("sizes").at(i).at("cluster") == sizes[i].cluster);
        CHECK(c.body.at("sizes").at(i).at("count") == sizes[i].count);
    }
    CHECK(svc.clusters(1).body.at("samples").size() == 3);

    const auto w = svc.worksheet();
    REQUIRE(w.status == 200);
    const auto items = sample_worksheet(table.record_ids, table.clusters, 3, 4);
    REQUIRE(w.body.at("items").size() == items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        CHECK(w.body.at("items").at(i).at("sample_id") == items[i].sample_id);
        CHECK(w.body.at("items").at(i).at("cluster") == items[i].cluster);
    }
    CHECK(w.body.at("labeled") == 0);
}

TEST_CASE("posting labels appends revisions and the latest wins", "[api]") {
    Fixture fx;
    LabelService svc(fx.config());
    const auto id = fx.first_of(EventType::SwitchOn);
    const auto a = svc.post_label(label_body(id, "Normal", "Normal"));
    REQUIRE(a.status == 201);
    CHECK(a.body.at("revision") == 1);
    const auto b = svc.post_label(label_body(id, "Switching", "Switch On"));
    REQUIRE(b.status == 201);
    CHECK(b.body.at("revision") == 2);

    const auto got = svc.get_labels();
    CHECK(got.body.at("revision") == 2);
    REQUIRE(got.body.at("labels").size() == 1);
    CHECK(got.body.at("labels").at(0).at("fault_type") == "Switch On");

    WindowRequest req;
    req.id = id;
    CHECK(svc.window(req).body.at("label").at("fault_type") == "Switch On");

    CHECK(svc.post_label("{not json").status == 400);
    CHECK(svc.post_label(label_body(id, "Normal", "Switch On")).status == 400);
    CHECK(svc.post_label(label_body(id, "Short-circuit", "1-P-SC")).status == 400);
    CHECK(svc.post_label(label_body(4242, "Normal", "Normal")).status == 404);
    CHECK(svc.get_labels().body.at("revision") == 2);

    LabelService reopened(fx.config());
    CHECK(reopened.get_labels().body == svc.get_labels().body);
}

TEST_CASE("recompute returns the same bytes as evaluate_run", "[api]") {
    Fixture fx;
    LabelService svc(fx.config());
    CHECK(svc.recompute_metrics().status == 409);
    for (std::size_t r = 0; r < fx.gen.labels.size(); r += 2) {
        REQUIRE(svc.post_label(label_to_json(fx.gen.labels[r]).dump()).status == 201);
    }
    const auto res = svc.recompute_metrics();
    REQUIRE(res.status == 200);
    const auto labels = LabelLog::replay(fx.config().label_log);
    CHECK(res.raw == report_to_json(evaluate_run(fx.run_dir, labels, LabelLevel::EventType,
                                                 SilhouetteSpace::Clustering)));
    CHECK(json::parse(res.raw).at("labeled_count") == 12);
}

TEST_CASE("concurrent posts each get a distinct revision", "[api]") {
    Fixture fx(false);
    LabelService svc(fx.config());
    std::vector<std::thread> threads;
    std::vector<std::vector<int>> revs(4);
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 6; ++i) {
                const auto r = svc.post_label(label_body(t * 6 + i, "Normal", "Normal"));
                revs[static_cast<std::size_t>(t)].push_back(r.body.at("revision").get<int>());
            }
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    std::vector<int> all;
    for (const auto& v : revs) {
        all.insert(all.end(), v.begin(), v.end());
    }
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 24; ++i) {
        REQUIRE(all[static_cast<std::size_t>(i)] == i + 1);
    }
    CHECK(svc.get_labels().body.at("labels").size() == 24);
}

TEST_CASE("HTTP front end serves the API with CORS headers", "[api][http]") {
    Fixture fx;
    LabelService svc(fx.config());
    LabelServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    std::thread th([&server] { server.listen(); });

    httplib::Client cli("127.0.0.1", port);
    cli.set_connection_timeout(5);
    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

    auto win = cli.Get("/samples/3/window?start=0&end=1024&max_points=200&overlays=zero,trend");
    REQUIRE(win);
    CHECK(win->status == 200);
    const auto wj = json::parse(win->body);
    CHECK(wj.at("channels").at("V2").at("values").size() <= 200);
    CHECK(wj.at("overlays").contains("zero"));
    CHECK(cli.Get("/samples/77/window")->status == 404);
    CHECK(cli.Get("/samples/3/window?start=9000")->status == 400);
    CHECK(cli.Get("/samples/3/window?max_points=abc")->status == 400);

    auto pre = cli.Options("/labels");
    REQUIRE(pre);
    CHECK(pre->status == 204);

    auto post = cli.Post("/labels", label_body(3, "Normal", "Normal"), "application/json");
    REQUIRE(post);
    CHECK(post->status == 201);
    CHECK(cli.Post("/labels", "[]", "application/json")->status == 400);
    auto labels = cli.Get("/labels");
    CHECK(json::parse(labels->body).at("labels").size() == 1);

    CHECK(cli.Get("/clusters?per_cluster=2")->status == 200);
    CHECK(cli.Get("/worksheet")->status == 200);
    auto metrics = cli.Post("/metrics/recompute", "", "application/json");
    REQUIRE(metrics);
    CHECK(metrics->status == 200);
    CHECK(json::parse(metrics->body).at("labeled_count") == 1);

    server.stop();
    th.join();
}
