#include "mvrecon/io.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace mvr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return j;
}

void write_json(const std::string& path, const json& j) {
    // nlohmann::json keeps object keys sorted, so dumps are byte-stable.
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_f32_blob(const std::string& path, const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    std::vector<float> buf(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) buf[i] = static_cast<float>(data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<double> read_f32_blob(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<float> buf(expected);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(expected * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(float))
        throw std::runtime_error("blob " + path + " is shorter than expected");
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) out[i] = static_cast<double>(buf[i]);
    return out;
}

void write_u8_blob(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
}

std::vector<std::uint8_t> read_u8_blob(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> buf(expected);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(in.gcount()) != expected)
        throw std::runtime_error("blob " + path + " is shorter than expected");
    return buf;
}

void save_bundle(const SceneBundle& bundle, const std::string& dir) {
    ensure_dir(dir);
    json m;
    m["num_frames"] = bundle.num_frames;
    m["height"] = bundle.height;
    m["width"] = bundle.width;
    m["reference_index"] = bundle.reference_index;
    m["dtype"] = "f32";
    m["layout"] = "row_major_le";
    json cams = json::array();
    for (const auto& c : bundle.cameras) {
        json g = json::array();
        for (double x : c.nine_vector()) g.push_back(x);
        cams.push_back(g);
    }
    m["cameras"] = cams;
    m["has_depth"] = !bundle.depths.empty();
    m["has_dynamic_masks"] = bundle.has_dynamic_masks();
    write_json(dir + "/manifest.json", m);

    write_f32_blob(dir + "/images.f32", bundle.images);
    for (std::size_t i = 0; i < bundle.depths.size(); ++i) {
        write_f32_blob(dir + "/depth_" + std::to_string(i) + ".f32", bundle.depths[i].values);
        write_u8_blob(dir + "/valid_" + std::to_string(i) + ".u8", bundle.depths[i].valid);
    }
    for (std::size_t i = 0; i < bundle.dynamic_masks.size(); ++i)
        write_u8_blob(dir + "/dynamic_" + std::to_string(i) + ".u8", bundle.dynamic_masks[i]);
}

SceneBundle load_bundle(const std::string& dir) {
    json m = read_json(dir + "/manifest.json");
    SceneBundle b;
    b.num_frames = m.at("num_frames").get<int>();
    b.height = m.at("height").get<int>();
    b.width = m.at("width").get<int>();
    b.reference_index = m.at("reference_index").get<int>();
    std::size_t npix = static_cast<std::size_t>(b.height) * b.width;
    b.images = read_f32_blob(dir + "/images.f32", 3 * npix * b.num_frames);
    for (const auto& g : m.at("cameras")) {
        std::array<double, 9> nine{};
        for (int i = 0; i < 9; ++i) nine[i] = g.at(i).get<double>();
        b.cameras.push_back(Camera::from_nine_vector(nine, b.width, b.height));
    }
    if (m.value("has_depth", false)) {
        for (int i = 0; i < b.num_frames; ++i) {
            DepthMap d(b.height, b.width);
            d.values = read_f32_blob(dir + "/depth_" + std::to_string(i) + ".f32", npix);
            d.valid = read_u8_blob(dir + "/valid_" + std::to_string(i) + ".u8", npix);
            b.depths.push_back(std::move(d));
        }
    }
    if (m.value("has_dynamic_masks", false))
        for (int i = 0; i < b.num_frames; ++i)
            b.dynamic_masks.push_back(read_u8_blob(dir + "/dynamic_" + std::to_string(i) + ".u8", npix));
    return b;
}

void save_tensors(const std::map<std::string, Tensor>& tensors, const std::string& dir) {
    ensure_dir(dir);
    json m;
    json params = json::object();
    int idx = 0;
    for (const auto& [name, t] : tensors) {
        json e;
        e["shape"] = t.shape;
        e["file"] = "p" + std::to_string(idx) + ".f32";
        params[name] = e;
        write_f32_blob(dir + "/" + e["file"].get<std::string>(), t.v);
        ++idx;
    }
    m["params"] = params;
    write_json(dir + "/manifest.json", m);
}

std::map<std::string, Tensor> load_tensors(const std::string& dir) {
    json m = read_json(dir + "/manifest.json");
    std::map<std::string, Tensor> out;
    for (const auto& [name, e] : m.at("params").items()) {
        Shape shape = e.at("shape").get<Shape>();
        Tensor t(shape);
        t.v = read_f32_blob(dir + "/" + e.at("file").get<std::string>(), shape_numel(shape));
        out.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace mvr
