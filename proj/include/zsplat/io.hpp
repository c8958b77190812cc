/* Copyright 2026 The zsplat Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ZSPLAT_IO_HPP
#define ZSPLAT_IO_HPP

#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "zsplat/errors.hpp"
#include "zsplat/numerics.hpp"
#include "zsplat/point_representation.hpp"
#include "zsplat/scene.hpp"

namespace zsplat {

// ---------------------------------------------------------------------------
// Tensor container: one JSON header line {"dtype":"f32","shape":[...]}\n
// followed by the row-major little-endian payload.
// ---------------------------------------------------------------------------

enum class Dtype { f32, f64, u64 };

inline const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f32: return "f32";
        case Dtype::f64: return "f64";
        case Dtype::u64: return "u64";
    }
    return "?";
}

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 8; }

struct TensorFile {
    std::vector<std::size_t> shape;
    std::variant<std::vector<float>, std::vector<double>, std::vector<std::uint64_t>> data;

    Dtype dtype() const { return static_cast<Dtype>(data.index()); }

    std::size_t element_count() const {
        return std::visit([](const auto& v) { return v.size(); }, data);
    }

    /// Values as float; f64 is narrowed, u64 is rejected.
    std::vector<float> to_f32() const {
        if (auto* f = std::get_if<std::vector<float>>(&data)) return *f;
        if (auto* d = std::get_if<std::vector<double>>(&data)) return {d->begin(), d->end()};
        throw InputError("expected a floating-point tensor, got u64");
    }

    /// 2-D view: rows = product of all leading dimensions, cols = last dimension.
    Tensor2<float> to_matrix() const {
        if (shape.empty()) throw InputError("scalar tensor cannot be viewed as a matrix");
        std::size_t cols = shape.back();
        std::size_t rows = 1;
        for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
        return Tensor2<float>(rows, cols, to_f32());
    }

    bool operator==(const TensorFile&) const = default;
};

namespace detail {

template <class T>
void append_le(std::string& out, std::span<const T> values) {
    const std::size_t start = out.size();
    out.resize(start + values.size_bytes());
    std::memcpy(out.data() + start, values.data(), values.size_bytes());
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = start; i < out.size(); i += sizeof(T))
            std::reverse(out.begin() + static_cast<std::ptrdiff_t>(i),
                         out.begin() + static_cast<std::ptrdiff_t>(i + sizeof(T)));
    }
}

template <class T>
std::vector<T> read_le(const char* bytes, std::size_t count) {
    std::vector<T> out(count);
    std::memcpy(out.data(), bytes, count * sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* raw = reinterpret_cast<unsigned char*>(out.data());
        for (std::size_t i = 0; i < count; ++i) std::reverse(raw + i * sizeof(T), raw + (i + 1) * sizeof(T));
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace detail

inline std::string encode_tensor(const TensorFile& t) {
    std::size_t expected = 1;
    for (auto s : t.shape) expected *= s;
    if (expected != t.element_count())
        throw DimensionError("tensor shape product " + std::to_string(expected) + " does not match " +
                             std::to_string(t.element_count()) + " values");
    nlohmann::json header{{"dtype", dtype_name(t.dtype())}, {"shape", t.shape}};
    std::string out = header.dump();
    out.push_back('\n');
    std::visit([&](const auto& v) { detail::append_le(out, std::span(v)); }, t.data);
    return out;
}

inline TensorFile decode_tensor(std::string_view bytes) {
    const std::size_t newline = bytes.find('\n');
    if (newline == std::string_view::npos) throw FormatError("tensor header is not newline-terminated", bytes.size());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, newline));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("malformed tensor header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
    }
    if (!header.is_object() || !header.contains("dtype") || !header.contains("shape") ||
        !header["dtype"].is_string() || !header["shape"].is_array())
        throw FormatError("tensor header must hold a string 'dtype' and an array 'shape'", 0);
    TensorFile t;
    std::size_t count = 1;
    for (const auto& dim : header["shape"]) {
        if (!dim.is_number_unsigned()) throw FormatError("tensor shape entries must be non-negative integers", 0);
        t.shape.push_back(dim.get<std::size_t>());
        count *= t.shape.back();
    }
    const std::string dtype = header["dtype"].get<std::string>();
    Dtype d;
    if (dtype == "f32") d = Dtype::f32;
    else if (dtype == "f64") d = Dtype::f64;
    else if (dtype == "u64") d = Dtype::u64;
    else throw UnsupportedDtypeError(dtype, 0);
    const std::size_t payload_start = newline + 1;
    const std::size_t payload = bytes.size() - payload_start;
    const std::size_t expected = count * dtype_size(d);
    if (payload < expected)
        throw FormatError("truncated tensor payload: expected " + std::to_string(expected) + " bytes, found " +
                              std::to_string(payload),
                          bytes.size());
    if (payload > expected)
        throw FormatError("tensor payload has " + std::to_string(payload - expected) + " trailing bytes",
                          payload_start + expected);
    const char* p = bytes.data() + payload_start;
    switch (d) {
        case Dtype::f32: t.data = detail::read_le<float>(p, count); break;
        case Dtype::f64: t.data = detail::read_le<double>(p, count); break;
        case Dtype::u64: t.data = detail::read_le<std::uint64_t>(p, count); break;
    }
    return t;
}

inline void write_tensor(const std::filesystem::path& path, const TensorFile& t) {
    detail::write_file(path, encode_tensor(t));
}

inline TensorFile read_tensor(const std::filesystem::path& path) { return decode_tensor(detail::read_file(path)); }

inline void write_matrix(const std::filesystem::path& path, const Tensor2<float>& m) {
    write_tensor(path, TensorFile{{m.rows, m.cols}, m.data});
}

inline Tensor2<float> read_matrix(const std::filesystem::path& path) { return read_tensor(path).to_matrix(); }

// ---------------------------------------------------------------------------
// Camera JSON: {"fx", "fy", "cx", "cy", "cam_to_world": 16 row-major numbers}
// ---------------------------------------------------------------------------

inline nlohmann::json camera_to_json(const Camera& cam) {
    return {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy}, {"cam_to_world", cam.cam_to_world}};
}

inline Camera camera_from_json(const nlohmann::json& j) {
    Camera cam;
    try {
        for (const auto& [key, value] : j.items())
            if (key != "fx" && key != "fy" && key != "cx" && key != "cy" && key != "cam_to_world")
                throw FormatError("unknown camera key '" + key + "'", 0);
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        const auto& m = j.at("cam_to_world");
        if (!m.is_array() || m.size() != 16) throw FormatError("cam_to_world must hold 16 numbers", 0);
        for (std::size_t i = 0; i < 16; ++i) cam.cam_to_world[i] = m[i].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("invalid camera: ") + e.what(), 0);
    }
    cam.validate();
    return cam;
}

inline Camera read_camera(const std::filesystem::path& path) {
    const std::string text = detail::read_file(path);
    try {
        return camera_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("malformed camera JSON in " + path.string() + ": " + e.what(), e.byte);
    }
}

inline void write_camera(const std::filesystem::path& path, const Camera& cam) {
    detail::write_file(path, camera_to_json(cam).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Gaussian PLY: binary little-endian, 41 float properties per vertex in the
// usual 3DGS interchange order, truncated to degree-2 SH. Opacity is stored as
// logit(sigma), scales as ln(s).
// ---------------------------------------------------------------------------

inline constexpr std::size_t kPlyFloatsPerVertex = 3 + 3 + 3 + 24 + 1 + 3 + 4;

inline std::vector<std::string> gaussian_ply_properties() {
    std::vector<std::string> names{"x", "y", "z", "nx", "ny", "nz"};
    for (int i = 0; i < 3; ++i) names.push_back("f_dc_" + std::to_string(i));
    for (int i = 0; i < 24; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
    return names;
}

inline std::string encode_gaussians_ply(std::span<const GaussianPrimitive> gaussians) {
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        if (auto why = gaussians[i].violation())
            throw ValidationError("gaussian " + std::to_string(i) + ": " + *why);
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << gaussians.size() << "\n";
    for (const auto& name : gaussian_ply_properties()) header << "property float " << name << "\n";
    header << "end_header\n";
    std::string out = header.str();
    std::vector<float> row(kPlyFloatsPerVertex);
    for (const auto& g : gaussians) {
        std::size_t k = 0;
        for (float v : g.center) row[k++] = v;
        for (int i = 0; i < 3; ++i) row[k++] = 0.0f;
        for (int ch = 0; ch < 3; ++ch) row[k++] = g.sh[ch];
        // f_rest is channel-major: all higher-order coefficients of R, then G, then B.
        for (int ch = 0; ch < 3; ++ch)
            for (int basis = 1; basis < 9; ++basis) row[k++] = g.sh[basis * 3 + ch];
        row[k++] = static_cast<float>(logit(g.opacity));
        for (float s : g.scale) row[k++] = static_cast<float>(std::log(static_cast<double>(s)));
        for (float q : g.rotation) row[k++] = q;
        detail::append_le(out, std::span<const float>(row));
    }
    return out;
}

inline std::vector<GaussianPrimitive> decode_gaussians_ply(std::string_view bytes) {
    const std::string_view marker = "end_header\n";
    const std::size_t end = bytes.find(marker);
    if (end == std::string_view::npos) throw FormatError("PLY header has no end_header line", bytes.size());
    std::istringstream header{std::string(bytes.substr(0, end))};
    std::string line;
    std::size_t count = 0;
    bool have_count = false;
    std::vector<std::string> props;
    std::size_t offset = 0;
    while (std::getline(header, line)) {
        std::istringstream words(line);
        std::string head;
        words >> head;
        if (head == "format") {
            std::string fmt;
            words >> fmt;
            if (fmt != "binary_little_endian") throw FormatError("unsupported PLY format '" + fmt + "'", offset);
        } else if (head == "element") {
            std::string kind;
            words >> kind >> count;
            if (kind != "vertex" || !words) throw FormatError("expected a single vertex element", offset);
            have_count = true;
        } else if (head == "property") {
            std::string type, name;
            words >> type >> name;
            if (type != "float") throw FormatError("property " + name + " is not float", offset);
            props.push_back(name);
        } else if (head != "ply" && head != "comment" && !head.empty()) {
            throw FormatError("unexpected PLY header line '" + line + "'", offset);
        }
        offset += line.size() + 1;
    }
    if (!have_count) throw FormatError("PLY header lacks a vertex count", end);
    if (props != gaussian_ply_properties()) throw FormatError("PLY property layout is not the Gaussian layout", end);
    const std::size_t start = end + marker.size();
    const std::size_t need = count * kPlyFloatsPerVertex * sizeof(float);
    if (bytes.size() - start != need)
        throw FormatError("PLY payload holds " + std::to_string(bytes.size() - start) + " bytes, expected " +
                              std::to_string(need),
                          bytes.size());
    const auto values = detail::read_le<float>(bytes.data() + start, count * kPlyFloatsPerVertex);
    std::vector<GaussianPrimitive> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const float* row = &values[i * kPlyFloatsPerVertex];
        auto& g = out[i];
        std::size_t k = 0;
        for (auto& v : g.center) v = row[k++];
        k += 3;
        for (int ch = 0; ch < 3; ++ch) g.sh[ch] = row[k++];
        for (int ch = 0; ch < 3; ++ch)
            for (int basis = 1; basis < 9; ++basis) g.sh[basis * 3 + ch] = row[k++];
        g.opacity = static_cast<float>(sigmoid(row[k++]));
        for (auto& s : g.scale) s = static_cast<float>(std::exp(static_cast<double>(row[k++])));
        for (auto& q : g.rotation) q = row[k++];
    }
    return out;
}

inline void write_gaussians_ply(std::span<const GaussianPrimitive> gaussians, const std::filesystem::path& path) {
    detail::write_file(path, encode_gaussians_ply(gaussians));
}

inline std::vector<GaussianPrimitive> read_gaussians_ply(const std::filesystem::path& path) {
    return decode_gaussians_ply(detail::read_file(path));
}

}  // namespace zsplat

#endif  // ZSPLAT_IO_HPP
