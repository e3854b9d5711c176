#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "salmet/common.hpp"
#include "salmet/model.hpp"
#include "salmet/saliency.hpp"
#include "salmet/scores.hpp"
#include "salmet/tensor.hpp"

namespace salmet {

struct Dataset {
    std::vector<Image> images;
    std::vector<double> mean;    // per channel, over all pixels of all images
    std::vector<double> stddev;  // population
    std::vector<std::string> class_names;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

inline ChannelStats dataset_mean(std::span<const Image> images) {
    require(!images.empty(), "dataset_mean: empty dataset");
    const int c = images[0].channels;
    ChannelStats st;
    st.mean.assign(static_cast<std::size_t>(c), 0.0);
    st.stddev.assign(static_cast<std::size_t>(c), 0.0);
    std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sq(static_cast<std::size_t>(c), 0.0);
    std::size_t count = 0;
    for (const Image& img : images) {
        require(img.channels == c, "dataset_mean: images disagree on channel count");
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            const std::size_t ch = i % static_cast<std::size_t>(c);
            sum[ch] += img.pixels[i];
            sq[ch] += img.pixels[i] * img.pixels[i];
        }
        count += img.pixels.size() / static_cast<std::size_t>(c);
    }
    for (int ch = 0; ch < c; ++ch) {
        const double m = sum[static_cast<std::size_t>(ch)] / static_cast<double>(count);
        st.mean[static_cast<std::size_t>(ch)] = m;
        const double var = sq[static_cast<std::size_t>(ch)] / static_cast<double>(count) - m * m;
        st.stddev[static_cast<std::size_t>(ch)] = std::sqrt(std::max(var, 0.0));
    }
    return st;
}

inline std::string format_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw config_error("read failure on '" + path + "'");
    return bytes;
}

inline void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw config_error("cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw config_error("write failure on '" + path + "'");
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw config_error("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw config_error("write failure on '" + path + "'");
}

namespace detail {

inline void append_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v & 0xff));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void append_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline void append_f32(std::vector<std::uint8_t>& b, float v) { append_u32(b, std::bit_cast<std::uint32_t>(v)); }
inline void append_i32(std::vector<std::uint8_t>& b, std::int32_t v) {
    append_u32(b, static_cast<std::uint32_t>(v));
}

struct ByteReader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
    std::string origin;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw format_error(origin + ": truncated");
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
        pos += n;
        return s;
    }
    void expect_end() const {
        if (pos != bytes.size()) throw format_error(origin + ": trailing bytes after payload");
    }
};

}  // namespace detail

// ---- CIFAR-10 binary batches -----------------------------------------------
// Record: 1 label byte, then 1024 R, 1024 G, 1024 B bytes, rows top to bottom.

inline const std::vector<std::string>& cifar10_class_names() {
    static const std::vector<std::string> names = {"airplane", "automobile", "bird",  "cat",  "deer",
                                                   "dog",      "frog",       "horse", "ship", "truck"};
    return names;
}

inline Dataset load_cifar10(const std::vector<std::string>& paths) {
    require(!paths.empty(), "load_cifar10: no input files");
    constexpr int kSide = 32, kChannels = 3;
    constexpr std::size_t kRecord = 1 + 1024 * 3;
    Dataset ds;
    ds.class_names = cifar10_class_names();
    std::int64_t next_id = 0;
    for (const std::string& path : paths) {
        const std::vector<std::uint8_t> bytes = read_file_bytes(path);
        if (bytes.empty() || bytes.size() % kRecord != 0)
            throw format_error(path + ": length " + std::to_string(bytes.size()) +
                               " is not a positive multiple of 3073");
        for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
            const int label = bytes[off];
            if (label > 9) throw format_error(path + ": record " + std::to_string(off / kRecord) +
                                              ": label " + std::to_string(label) + " out of range");
            Image img(kSide, kSide, kChannels);
            img.label = label;
            img.id = next_id++;
            for (int c = 0; c < kChannels; ++c)
                for (int y = 0; y < kSide; ++y)
                    for (int x = 0; x < kSide; ++x)
                        img.at(y, x, c) =
                            bytes[off + 1 + static_cast<std::size_t>(c) * 1024 + static_cast<std::size_t>(y) * 32 +
                                  static_cast<std::size_t>(x)] /
                            255.0;
            ds.images.push_back(std::move(img));
        }
    }
    ChannelStats st = dataset_mean(ds.images);
    ds.mean = std::move(st.mean);
    ds.stddev = std::move(st.stddev);
    return ds;
}

// ---- SALM saliency archives -------------------------------------------------
// magic "SALM", version u16, method-id (u16 length + UTF-8), u32 n, h, w,
// then n*h*w little-endian f32 values in image-id order. A sidecar
// "<path>.ids.json" lists the image ids.

inline std::string salm_sidecar_path(const std::string& path) { return path + ".ids.json"; }

inline void write_saliency_archive(std::span<const SaliencyMap> maps, const std::string& path) {
    require(!maps.empty(), "saliency archive: nothing to write");
    const SaliencyMap& first = maps[0];
    require(first.method_id.size() <= 0xffff, "saliency archive: method id too long");
    for (std::size_t i = 0; i < maps.size(); ++i) {
        require(maps[i].height == first.height && maps[i].width == first.width,
                "saliency archive: maps disagree on dimensions");
        require(maps[i].method_id == first.method_id, "saliency archive: maps disagree on method id");
        require(i == 0 || maps[i].image_id > maps[i - 1].image_id,
                "saliency archive: image ids must be strictly ascending");
    }

    std::vector<std::uint8_t> b;
    b.reserve(20 + first.method_id.size() + maps.size() * first.values.size() * 4);
    b.insert(b.end(), {'S', 'A', 'L', 'M'});
    detail::append_u16(b, 1);
    detail::append_u16(b, static_cast<std::uint16_t>(first.method_id.size()));
    b.insert(b.end(), first.method_id.begin(), first.method_id.end());
    detail::append_u32(b, static_cast<std::uint32_t>(maps.size()));
    detail::append_u32(b, static_cast<std::uint32_t>(first.height));
    detail::append_u32(b, static_cast<std::uint32_t>(first.width));
    for (const SaliencyMap& m : maps)
        for (double v : m.values) detail::append_f32(b, static_cast<float>(v));
    write_file_bytes(path, b);

    nlohmann::ordered_json sidecar;
    sidecar["method_id"] = first.method_id;
    nlohmann::ordered_json ids = nlohmann::ordered_json::array();
    for (const SaliencyMap& m : maps) ids.push_back(m.image_id);
    sidecar["image_ids"] = std::move(ids);
    write_text_file(salm_sidecar_path(path), sidecar.dump(2) + "\n");
}

inline std::vector<SaliencyMap> read_saliency_archive(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    detail::ByteReader r{bytes, 0, path};
    if (r.str(4) != "SALM") throw format_error(path + ": bad magic, not a SALM archive");
    const std::uint16_t version = r.u16();
    if (version != 1) throw format_error(path + ": unsupported SALM version " + std::to_string(version));
    const std::uint16_t id_len = r.u16();
    const std::string method = r.str(id_len);
    const std::uint32_t n = r.u32();
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    if (n == 0 || h == 0 || w == 0) throw format_error(path + ": empty archive dimensions");
    r.need(static_cast<std::size_t>(n) * h * w * 4);

    const std::string sidecar_path = salm_sidecar_path(path);
    const nlohmann::json sidecar = [&] {
        std::ifstream f(sidecar_path);
        if (!f) throw format_error(path + ": missing sidecar '" + sidecar_path + "'");
        try {
            return nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw format_error(sidecar_path + ": invalid JSON: " + e.what());
        }
    }();
    if (!sidecar.contains("image_ids") || !sidecar["image_ids"].is_array() || sidecar["image_ids"].size() != n)
        throw format_error(sidecar_path + ": image_ids must list exactly " + std::to_string(n) + " ids");

    std::vector<SaliencyMap> maps;
    maps.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        SaliencyMap m(static_cast<int>(h), static_cast<int>(w));
        m.method_id = method;
        m.image_id = sidecar["image_ids"][i].get<std::int64_t>();
        for (double& v : m.values) v = r.f32();
        maps.push_back(std::move(m));
    }
    r.expect_end();
    for (std::size_t i = 1; i < maps.size(); ++i)
        if (maps[i].image_id <= maps[i - 1].image_id)
            throw format_error(sidecar_path + ": image ids must be strictly ascending");
    return maps;
}

// ---- SALD raw-tensor datasets ------------------------------------------------
// Same envelope idea as SALM: magic "SALD", version u16, u32 n, h, w, c,
// u8 has-labels, n*h*w*c f32 pixels (HWC, image-major), then n i32 labels.

inline void write_dataset(const Dataset& ds, const std::string& path) {
    require(!ds.images.empty(), "dataset write: nothing to write");
    const Image& first = ds.images[0];
    bool has_labels = true;
    for (const Image& img : ds.images) {
        require(img.height == first.height && img.width == first.width && img.channels == first.channels,
                "dataset write: images disagree on dimensions");
        if (img.label < 0) has_labels = false;
    }
    std::vector<std::uint8_t> b;
    b.reserve(23 + ds.images.size() * first.pixels.size() * 4);
    b.insert(b.end(), {'S', 'A', 'L', 'D'});
    detail::append_u16(b, 1);
    detail::append_u32(b, static_cast<std::uint32_t>(ds.images.size()));
    detail::append_u32(b, static_cast<std::uint32_t>(first.height));
    detail::append_u32(b, static_cast<std::uint32_t>(first.width));
    detail::append_u32(b, static_cast<std::uint32_t>(first.channels));
    b.push_back(has_labels ? 1 : 0);
    for (const Image& img : ds.images)
        for (double v : img.pixels) detail::append_f32(b, static_cast<float>(v));
    if (has_labels)
        for (const Image& img : ds.images) detail::append_i32(b, img.label);
    write_file_bytes(path, b);
}

inline Dataset read_dataset(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    detail::ByteReader r{bytes, 0, path};
    if (r.str(4) != "SALD") throw format_error(path + ": bad magic, not a SALD dataset");
    const std::uint16_t version = r.u16();
    if (version != 1) throw format_error(path + ": unsupported SALD version " + std::to_string(version));
    const std::uint32_t n = r.u32();
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    const std::uint32_t c = r.u32();
    if (n == 0 || h == 0 || w == 0 || c == 0) throw format_error(path + ": empty dataset dimensions");
    r.need(1);
    const bool has_labels = bytes[r.pos] != 0;
    r.pos += 1;

    Dataset ds;
    ds.images.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
        img.id = static_cast<std::int64_t>(i);
        for (double& v : img.pixels) v = r.f32();
        ds.images.push_back(std::move(img));
    }
    if (has_labels)
        for (std::uint32_t i = 0; i < n; ++i) ds.images[i].label = r.i32();
    r.expect_end();
    ChannelStats st = dataset_mean(ds.images);
    ds.mean = std::move(st.mean);
    ds.stddev = std::move(st.stddev);
    return ds;
}

// ---- score CSV ----------------------------------------------------------------

inline constexpr const char* kScoreCsvHeader = "image_id,class_label,confidence,method_id,metric_variant,score";

inline void write_scores(const ScoreTable& table, const std::string& path) {
    std::string out = kScoreCsvHeader;
    out += '\n';
    for (const ScoreRow& r : table.rows()) {
        out += std::to_string(r.image_id);
        out += ',';
        out += std::to_string(r.class_label);
        out += ',';
        out += format_g9(r.confidence);
        out += ',';
        out += r.method_id;
        out += ',';
        out += to_string(r.variant);
        out += ',';
        out += format_g9(r.score);
        out += '\n';
    }
    write_text_file(path, out);
}

inline ScoreTable read_scores(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(f, line)) throw format_error(path + ": empty file, expected header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kScoreCsvHeader)
        throw format_error(path + " line 1: bad header, expected '" + std::string(kScoreCsvHeader) + "'");

    auto parse_double = [&](const std::string& s, std::size_t line_no, const char* what) {
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size())
            throw format_error(path + " line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
        return v;
    };
    auto parse_i64 = [&](const std::string& s, std::size_t line_no, const char* what) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(s, &used);
            if (used != s.size()) throw std::invalid_argument("trailing");
            return static_cast<std::int64_t>(v);
        } catch (const std::exception&) {
            throw format_error(path + " line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
        }
    };

    ScoreTable table;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 6)
            throw format_error(path + " line " + std::to_string(line_no) + ": expected 6 fields, got " +
                               std::to_string(fields.size()));
        ScoreRow row;
        row.image_id = parse_i64(fields[0], line_no, "image id");
        row.class_label = static_cast<int>(parse_i64(fields[1], line_no, "class label"));
        row.confidence = parse_double(fields[2], line_no, "confidence");
        row.method_id = fields[3];
        try {
            row.variant = parse_variant(fields[4]);
        } catch (const std::exception& e) {
            throw format_error(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        row.score = parse_double(fields[5], line_no, "score");
        table.add(std::move(row));
    }
    return table;
}

// ---- JSON files ----------------------------------------------------------------

template <typename Json = nlohmann::json>
inline Json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open '" + path + "' for reading");
    try {
        return Json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw format_error(path + ": invalid JSON: " + e.what());
    }
}

template <typename Json>
inline void write_json_file(const std::string& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

inline Model load_model_files(const std::string& manifest_path, const std::string& blob_path) {
    const nlohmann::json manifest = read_json_file(manifest_path);
    const std::vector<std::uint8_t> blob = read_file_bytes(blob_path);
    try {
        return load_model(manifest, blob);
    } catch (const format_error& e) {
        throw format_error(manifest_path + ": " + e.what());
    }
}

}  // namespace salmet
