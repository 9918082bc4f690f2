#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgmix/errors.hpp"
#include "ecgmix/record.hpp"

namespace ecgmix {

namespace fs = std::filesystem;
using nlohmann::json;

// On-disk dataset layout: one directory holding `records.jsonl` (one JSON
// object per record: id, sample_rate, lead_names, age, gender, labels) and a
// per-record `<id>.bin` of little-endian 32-bit floats, lead-major.
//
// Prepared datasets reuse the same layout with `"prepared": true` metadata
// (window, lead order, wide feature vector per record).

inline void write_f32_file(const fs::path& path, const std::vector<std::vector<float>>& leads) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    for (const auto& lead : leads) {
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(lead.data()),
                  static_cast<std::streamsize>(lead.size() * sizeof(float)));
    }
    if (!out) throw io_error("short write: " + path.string());
}

inline std::vector<std::vector<float>> read_f32_file(const fs::path& path, std::size_t n_leads,
                                                     std::size_t samples_per_lead) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read " + path.string());
    std::vector<std::vector<float>> leads(n_leads);
    for (auto& lead : leads) {
        lead.resize(samples_per_lead);
        in.read(reinterpret_cast<char*>(lead.data()),
                static_cast<std::streamsize>(samples_per_lead * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(samples_per_lead * sizeof(float)))
            throw io_error("truncated signal file: " + path.string());
    }
    return leads;
}

inline json record_meta_to_json(const record& rec, std::size_t n_samples) {
    json j;
    j["id"] = rec.id;
    j["sample_rate"] = rec.sample_rate;
    j["lead_names"] = rec.lead_names;
    j["n_samples"] = n_samples;
    if (rec.age.has_value()) j["age"] = *rec.age; else j["age"] = nullptr;
    j["gender"] = gender_to_string(rec.sex);
    j["labels"] = std::vector<int>(rec.labels.begin(), rec.labels.end());
    if (!rec.labels_clean.empty())
        j["labels_clean"] = std::vector<int>(rec.labels_clean.begin(), rec.labels_clean.end());
    return j;
}

inline void write_dataset(const fs::path& dir, const dataset& ds) {
    fs::create_directories(dir);
    std::ofstream meta(dir / "records.jsonl");
    if (!meta) throw io_error("cannot write " + (dir / "records.jsonl").string());
    for (const auto& rec : ds.records) {
        const std::size_t n = rec.signal.empty() ? 0 : rec.signal[0].size();
        meta << record_meta_to_json(rec, n).dump() << "\n";
        write_f32_file(dir / (rec.id + ".bin"), rec.signal);
    }
}

inline std::vector<std::uint8_t> labels_from_json(const json& j) {
    std::vector<std::uint8_t> out;
    for (const auto& x : j) out.push_back(static_cast<std::uint8_t>(x.get<int>()));
    return out;
}

inline dataset read_dataset(const fs::path& dir) {
    std::ifstream meta(dir / "records.jsonl");
    if (!meta) throw io_error("cannot read " + (dir / "records.jsonl").string());
    dataset ds;
    std::string line;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        record rec;
        rec.id = j.at("id").get<std::string>();
        rec.sample_rate = j.at("sample_rate").get<double>();
        rec.lead_names = j.at("lead_names").get<std::vector<std::string>>();
        if (j.contains("age") && !j["age"].is_null()) rec.age = j["age"].get<double>();
        rec.sex = gender_from_string(j.value("gender", "unknown"));
        rec.labels = labels_from_json(j.at("labels"));
        if (j.contains("labels_clean")) rec.labels_clean = labels_from_json(j["labels_clean"]);
        const auto n = j.at("n_samples").get<std::size_t>();
        rec.signal = read_f32_file(dir / (rec.id + ".bin"), rec.lead_names.size(), n);
        ds.records.push_back(std::move(rec));
    }
    if (!ds.records.empty()) ds.n_labels = static_cast<int>(ds.records[0].labels.size());
    for (const auto& rec : ds.records)
        if (static_cast<int>(rec.labels.size()) != ds.n_labels)
            throw invalid_input("records disagree on label count");
    return ds;
}

inline void write_prepared_dataset(const fs::path& dir, const prepared_dataset& ds) {
    fs::create_directories(dir);
    std::ofstream meta(dir / "records.jsonl");
    if (!meta) throw io_error("cannot write " + (dir / "records.jsonl").string());
    json header;
    header["prepared"] = true;
    header["window"] = ds.window;
    header["lead_names"] = ds.lead_names;
    header["n_labels"] = ds.n_labels;
    meta << header.dump() << "\n";
    for (const auto& rec : ds.records) {
        json j;
        j["id"] = rec.id;
        j["labels"] = std::vector<int>(rec.labels.begin(), rec.labels.end());
        if (!rec.labels_clean.empty())
            j["labels_clean"] = std::vector<int>(rec.labels_clean.begin(), rec.labels_clean.end());
        j["wide"] = rec.wide.flatten();
        meta << j.dump() << "\n";
        write_f32_file(dir / (rec.id + ".bin"), rec.channels);
    }
}

inline wide_features wide_from_flat(const std::vector<double>& v) {
    if (v.size() != wide_features::dim) throw io_error("bad wide feature vector length");
    wide_features wf;
    wf.age_norm = v[0];
    for (int i = 0; i < 3; ++i) wf.gender_onehot[i] = v[1 + i];
    for (int i = 0; i < 5; ++i) wf.rr_stats[i] = v[4 + i];
    return wf;
}

inline bool is_prepared_dataset(const fs::path& dir) {
    std::ifstream meta(dir / "records.jsonl");
    if (!meta) return false;
    std::string line;
    if (!std::getline(meta, line)) return false;
    json j = json::parse(line, nullptr, false);
    return j.is_object() && j.value("prepared", false);
}

inline prepared_dataset read_prepared_dataset(const fs::path& dir) {
    std::ifstream meta(dir / "records.jsonl");
    if (!meta) throw io_error("cannot read " + (dir / "records.jsonl").string());
    std::string line;
    if (!std::getline(meta, line)) throw io_error("empty prepared dataset");
    json header = json::parse(line);
    if (!header.value("prepared", false)) throw io_error("not a prepared dataset: " + dir.string());
    prepared_dataset ds;
    ds.window = header.at("window").get<int>();
    ds.lead_names = header.at("lead_names").get<std::vector<std::string>>();
    ds.n_labels = header.at("n_labels").get<int>();
    ds.n_channels = static_cast<int>(ds.lead_names.size());
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        prepared_record rec;
        rec.id = j.at("id").get<std::string>();
        rec.labels = labels_from_json(j.at("labels"));
        if (j.contains("labels_clean")) rec.labels_clean = labels_from_json(j["labels_clean"]);
        rec.wide = wide_from_flat(j.at("wide").get<std::vector<double>>());
        rec.channels = read_f32_file(dir / (rec.id + ".bin"),
                                     static_cast<std::size_t>(ds.n_channels),
                                     static_cast<std::size_t>(ds.window));
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

}  // namespace ecgmix
