#include "faultclust/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "faultclust/cluster.hpp"
#include "faultclust/csv.hpp"
#include "faultclust/error.hpp"

namespace faultclust {

namespace {

std::string label_key(const LabelRecord& l, LabelLevel level) {
    return level == LabelLevel::EventType ? l.fault_type : std::string(to_string(l.fault_class));
}

// Vocabulary order of every label name at the requested level.
std::vector<std::string> vocabulary_order(LabelLevel level) {
    std::vector<std::string> names;
    for (const auto c : all_fault_classes()) {
        if (level == LabelLevel::FaultClass) {
            names.emplace_back(to_string(c));
        } else {
            for (const auto t : fault_types_for(c)) {
                names.emplace_back(t);
            }
        }
    }
    return names;
}

MeanStd raw_stats(const std::vector<double>& v) {
    MeanStd out;
    for (const double x : v) {
        out.mean += x;
    }
    out.mean /= static_cast<double>(v.size());
    double m2 = 0.0;
    for (const double x : v) {
        m2 += (x - out.mean) * (x - out.mean);
    }
    out.std = std::sqrt(m2 / static_cast<double>(v.size()));
    return out;
}

MeanStd weighted_stats(const std::vector<double>& v, const std::vector<double>& w) {
    MeanStd out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.mean += w[i] * v[i];
    }
    double m2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        m2 += w[i] * (v[i] - out.mean) * (v[i] - out.mean);
    }
    out.std = std::sqrt(m2);
    return out;
}

nlohmann::ordered_json mean_std_json(const MeanStd& m) {
    nlohmann::ordered_json j;
    j["mean"] = m.mean;
    j["std"] = m.std;
    return j;
}

nlohmann::ordered_json summary_json(const MetricSummary& s) {
    nlohmann::ordered_json j;
    j["purity"] = mean_std_json(s.purity);
    j["entropy"] = mean_std_json(s.entropy);
    j["silhouette"] = s.silhouette ? mean_std_json(*s.silhouette) : nlohmann::ordered_json(nullptr);
    return j;
}

std::string fmt3(double v) { return fmt::format("{:.3f}", v); }

std::string fmt_pm(const MeanStd& m) { return fmt::format("{:.3f} ± {:.3f}", m.mean, m.std); }

} // namespace

std::string_view to_string(LabelLevel level) {
    return level == LabelLevel::EventType ? "event_type" : "fault_class";
}

LabelLevel parse_label_level(std::string_view s) {
    if (s == "event_type") {
        return LabelLevel::EventType;
    }
    if (s == "fault_class") {
        return LabelLevel::FaultClass;
    }
    throw InvalidArgument(fmt::format("unknown label level '{}' (expected event_type or fault_class)", s));
}

ContingencyTable contingency(std::span<const std::int64_t> record_ids, std::span<const std::size_t> clusters,
                             std::span<const LabelRecord> labels, LabelLevel level, std::size_t n_clusters) {
    if (record_ids.size() != clusters.size()) {
        throw InvalidArgument("contingency: record ids and assignments differ in length");
    }
    std::unordered_map<std::int64_t, std::size_t> cluster_of;
    cluster_of.reserve(record_ids.size());
    std::size_t k = n_clusters;
    for (std::size_t i = 0; i < record_ids.size(); ++i) {
        cluster_of[record_ids[i]] = clusters[i];
        k = std::max(k, clusters[i] + 1);
    }

    std::vector<std::string> present;
    for (const auto& l : labels) {
        if (!cluster_of.contains(l.sample_id)) {
            throw NotFound(fmt::format("contingency: label for unknown sample_id {}", l.sample_id));
        }
        auto key = label_key(l, level);
        if (std::find(present.begin(), present.end(), key) == present.end()) {
            present.push_back(std::move(key));
        }
    }

    ContingencyTable t;
    for (auto& name : vocabulary_order(level)) {
        if (std::find(present.begin(), present.end(), name) != present.end()) {
            t.label_names.push_back(std::move(name));
        }
    }
    const std::size_t n_labels = t.label_names.size();
    t.counts.assign(k, std::vector<std::size_t>(n_labels, 0));
    for (const auto& l : labels) {
        const auto key = label_key(l, level);
        const auto j = static_cast<std::size_t>(
            std::find(t.label_names.begin(), t.label_names.end(), key) - t.label_names.begin());
        ++t.counts[cluster_of.at(l.sample_id)][j];
    }
    t.row_totals.assign(k, 0);
    t.col_totals.assign(n_labels, 0);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < n_labels; ++j) {
            t.row_totals[c] += t.counts[c][j];
            t.col_totals[j] += t.counts[c][j];
            t.total += t.counts[c][j];
        }
    }
    return t;
}

std::vector<std::vector<double>> row_percentages(const ContingencyTable& t) {
    std::vector<std::vector<double>> out(t.clusters(), std::vector<double>(t.labels(), 0.0));
    for (std::size_t c = 0; c < t.clusters(); ++c) {
        if (t.row_totals[c] == 0) {
            continue;
        }
        for (std::size_t j = 0; j < t.labels(); ++j) {
            out[c][j] = 100.0 * static_cast<double>(t.counts[c][j]) / static_cast<double>(t.row_totals[c]);
        }
    }
    return out;
}

double purity(const ContingencyTable& t) {
    if (t.total == 0) {
        throw InvalidArgument("purity: empty contingency table");
    }
    std::size_t hits = 0;
    for (const auto& row : t.counts) {
        if (!row.empty()) {
            hits += *std::max_element(row.begin(), row.end());
        }
    }
    return static_cast<double>(hits) / static_cast<double>(t.total);
}

double cluster_purity(const ContingencyTable& t, std::size_t cluster) {
    if (cluster >= t.clusters() || t.row_totals[cluster] == 0) {
        throw InvalidArgument(fmt::format("cluster_purity: cluster {} has no labeled samples", cluster));
    }
    const auto& row = t.counts[cluster];
    return static_cast<double>(*std::max_element(row.begin(), row.end())) /
           static_cast<double>(t.row_totals[cluster]);
}

double cluster_entropy(const ContingencyTable& t, std::size_t cluster) {
    if (cluster >= t.clusters() || t.row_totals[cluster] == 0) {
        throw InvalidArgument(fmt::format("cluster_entropy: cluster {} has no labeled samples", cluster));
    }
    const double n = static_cast<double>(t.row_totals[cluster]);
    double h = 0.0;
    for (const auto c : t.counts[cluster]) {
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            h -= p * std::log2(p);
        }
    }
    // -0.0 for homogeneous clusters reads poorly in reports.
    return h == 0.0 ? 0.0 : h;
}

MetricReport aggregate_report(std::span<const ClusterMetrics> per_cluster, std::span<const std::size_t> sizes) {
    if (per_cluster.size() != sizes.size()) {
        throw InvalidArgument("aggregate_report: metrics and sizes differ in length");
    }
    if (per_cluster.empty()) {
        throw InvalidArgument("aggregate_report: no clusters");
    }
    double total = 0.0;
    for (const auto s : sizes) {
        total += static_cast<double>(s);
    }
    if (total <= 0.0) {
        throw InvalidArgument("aggregate_report: sizes sum to zero");
    }

    std::vector<double> pur, ent, sil, w;
    bool have_sil = true;
    for (std::size_t i = 0; i < per_cluster.size(); ++i) {
        pur.push_back(per_cluster[i].purity);
        ent.push_back(per_cluster[i].entropy);
        if (per_cluster[i].silhouette) {
            sil.push_back(*per_cluster[i].silhouette);
        } else {
            have_sil = false;
        }
        w.push_back(static_cast<double>(sizes[i]) / total);
    }

    MetricReport r;
    r.per_cluster.assign(per_cluster.begin(), per_cluster.end());
    r.raw.purity = raw_stats(pur);
    r.raw.entropy = raw_stats(ent);
    r.weighted.purity = weighted_stats(pur, w);
    r.weighted.entropy = weighted_stats(ent, w);
    if (have_sil) {
        r.raw.silhouette = raw_stats(sil);
        r.weighted.silhouette = weighted_stats(sil, w);
    }
    return r;
}

MetricReport evaluate(std::span<const std::int64_t> record_ids, std::span<const std::size_t> clusters,
                      std::span<const LabelRecord> labels, LabelLevel level, const Matrix* points,
                      std::string silhouette_space, std::size_t n_clusters) {
    if (labels.empty()) {
        throw InvalidArgument("evaluate: no labels");
    }
    const auto table = contingency(record_ids, clusters, labels, level, n_clusters);

    // Silhouette among the labeled samples only.
    std::unordered_map<std::int64_t, std::size_t> row_of;
    for (std::size_t i = 0; i < record_ids.size(); ++i) {
        row_of[record_ids[i]] = i;
    }
    std::vector<double> sil_samples;
    std::vector<std::size_t> sub_clusters;
    bool have_sil = false;
    if (points != nullptr) {
        if (points->rows() != record_ids.size()) {
            throw InvalidArgument("evaluate: point rows do not match record ids");
        }
        Matrix sub(labels.size(), points->cols());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const auto r = row_of.at(labels[i].sample_id);
            const auto src = points->row(r);
            std::copy(src.begin(), src.end(), sub.row(i).begin());
            sub_clusters.push_back(clusters[r]);
        }
        const bool enough = labels.size() >= 3 && std::adjacent_find(sub_clusters.begin(), sub_clusters.end(),
                                                                     std::not_equal_to<>()) != sub_clusters.end();
        if (enough) {
            sil_samples = silhouette_samples(sub, sub_clusters);
            have_sil = true;
        }
    }

    std::vector<ClusterMetrics> per;
    std::vector<std::size_t> sizes;
    for (std::size_t c = 0; c < table.clusters(); ++c) {
        if (table.row_totals[c] == 0) {
            continue;
        }
        ClusterMetrics m;
        m.cluster = c;
        m.count = table.row_totals[c];
        m.purity = cluster_purity(table, c);
        m.entropy = cluster_entropy(table, c);
        if (have_sil) {
            double s = 0.0;
            for (std::size_t i = 0; i < sub_clusters.size(); ++i) {
                if (sub_clusters[i] == c) {
                    s += sil_samples[i];
                }
            }
            m.silhouette = s / static_cast<double>(m.count);
        }
        per.push_back(m);
        sizes.push_back(m.count);
    }

    MetricReport r = aggregate_report(per, sizes);
    r.level = level;
    r.labeled_count = table.total;
    r.silhouette_space = have_sil ? std::move(silhouette_space) : "none";
    r.global_purity = purity(table);
    r.global_entropy = r.weighted.entropy.mean;
    if (have_sil) {
        double s = 0.0;
        for (const double v : sil_samples) {
            s += v;
        }
        r.global_silhouette = s / static_cast<double>(sil_samples.size());
    }
    return r;
}

std::vector<ClusterSize> cluster_size_table(std::span<const std::size_t> assignments) {
    std::vector<ClusterSize> out;
    if (assignments.empty()) {
        return out;
    }
    const std::size_t k = *std::max_element(assignments.begin(), assignments.end()) + 1;
    std::vector<std::size_t> counts(k, 0);
    for (const auto a : assignments) {
        ++counts[a];
    }
    const double n = static_cast<double>(assignments.size());
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] > 0) {
            out.push_back({c, counts[c], 100.0 * static_cast<double>(counts[c]) / n});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const ClusterSize& a, const ClusterSize& b) { return a.count > b.count; });
    return out;
}

SizeDispersion size_dispersion(std::span<const std::size_t> sizes) {
    if (sizes.empty()) {
        throw InvalidArgument("size_dispersion: no sizes");
    }
    double total = 0.0;
    for (const auto s : sizes) {
        total += static_cast<double>(s);
    }
    const double mean = total / static_cast<double>(sizes.size());
    double m2 = 0.0;
    for (const auto s : sizes) {
        const double d = static_cast<double>(s) - mean;
        m2 += d * d;
    }
    SizeDispersion out;
    out.std = std::sqrt(m2 / static_cast<double>(sizes.size()));
    out.std_percent_of_total = total > 0.0 ? 100.0 * out.std / total : 0.0;
    return out;
}

std::string report_to_json(const MetricReport& r) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["level"] = to_string(r.level);
    j["labeled_count"] = r.labeled_count;
    j["silhouette_space"] = r.silhouette_space;
    nlohmann::ordered_json g;
    g["purity"] = r.global_purity;
    g["entropy"] = r.global_entropy;
    g["silhouette"] = r.global_silhouette ? nlohmann::ordered_json(*r.global_silhouette) : nlohmann::ordered_json(nullptr);
    j["global"] = std::move(g);
    j["raw"] = summary_json(r.raw);
    j["weighted"] = summary_json(r.weighted);
    j["weighted_std_convention"] = "sqrt(sum_k w_k (v_k - mean_w)^2), w_k = N_k / sum N_k";
    auto per = nlohmann::ordered_json::array();
    for (const auto& m : r.per_cluster) {
        nlohmann::ordered_json c;
        c["cluster"] = m.cluster;
        c["count"] = m.count;
        c["purity"] = m.purity;
        c["entropy"] = m.entropy;
        c["silhouette"] = m.silhouette ? nlohmann::ordered_json(*m.silhouette) : nlohmann::ordered_json(nullptr);
        per.push_back(std::move(c));
    }
    j["per_cluster"] = std::move(per);
    return j.dump(2) + "\n";
}

std::string report_to_markdown(const MetricReport& r, std::string_view method) {
    std::ostringstream md;
    const auto sil_or_dash = [](const std::optional<double>& v) { return v ? fmt3(*v) : std::string("n/a"); };
    const auto pm_or_dash = [](const std::optional<MeanStd>& v) { return v ? fmt_pm(*v) : std::string("n/a"); };

    md << fmt::format("## Global clustering metrics (N={}, level={}, silhouette space={})\n\n", r.labeled_count,
                      to_string(r.level), r.silhouette_space);
    md << "| Clustering Method | Purity | Entropy | Silhouette |\n|---|---:|---:|---:|\n";
    md << fmt::format("| {} | {} | {} | {} |\n\n", method, fmt3(r.global_purity), fmt3(r.global_entropy),
                      sil_or_dash(r.global_silhouette));

    md << "## Aggregate statistics\n\n";
    md << "| Clustering Method | Purity | Entropy | Silhouette |\n|---|---:|---:|---:|\n";
    md << fmt::format("| {} (Raw) | {} | {} | {} |\n", method, fmt_pm(r.raw.purity), fmt_pm(r.raw.entropy),
                      pm_or_dash(r.raw.silhouette));
    md << fmt::format("| {} (Weighted) | {} | {} | {} |\n\n", method, fmt_pm(r.weighted.purity),
                      fmt_pm(r.weighted.entropy), pm_or_dash(r.weighted.silhouette));

    md << "## Per-cluster metrics\n\n";
    md << "| Cluster | Count | Purity | Entropy | Silhouette |\n|---:|---:|---:|---:|---:|\n";
    for (const auto& m : r.per_cluster) {
        md << fmt::format("| {} | {} | {} | {} | {} |\n", m.cluster, m.count, fmt3(m.purity), fmt3(m.entropy),
                          sil_or_dash(m.silhouette));
    }
    return md.str();
}

void write_contingency_csv(const ContingencyTable& t, const std::filesystem::path& path, bool percent) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    csv::Row header{"cluster"};
    header.insert(header.end(), t.label_names.begin(), t.label_names.end());
    header.emplace_back("total");
    csv::write_row(out, header);
    const auto pct = percent ? row_percentages(t) : std::vector<std::vector<double>>{};
    for (std::size_t c = 0; c < t.clusters(); ++c) {
        csv::Row row{std::to_string(c)};
        for (std::size_t j = 0; j < t.labels(); ++j) {
            row.push_back(percent ? csv::format_double(pct[c][j]) : std::to_string(t.counts[c][j]));
        }
        if (percent) {
            row.push_back(csv::format_double(t.row_totals[c] > 0 ? 100.0 : 0.0));
        } else {
            row.push_back(std::to_string(t.row_totals[c]));
        }
        csv::write_row(out, row);
    }
}

void write_cluster_sizes_csv(std::span<const ClusterSize> sizes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "cluster,count,percent\n";
    for (const auto& s : sizes) {
        out << s.cluster << ',' << s.count << ',' << csv::format_double(s.percent) << '\n';
    }
}

} // namespace faultclust
