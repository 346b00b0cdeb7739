// SPDX-License-Identifier: Apache-2.0

#include "cnet/pcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cnet {

uint64_t raster_index(const VoxelCoord& c, uint32_t d) {
    if (c.x >= d || c.y >= d || c.z >= d)
        throw RangeError("coordinate outside [0," + std::to_string(d) + ")^3");
    return (uint64_t(c.x) * d + c.y) * d + c.z;
}

VoxelCoord coord_from_raster(uint64_t idx, uint32_t d) {
    if (idx >= uint64_t(d) * d * d) throw RangeError("raster index out of range");
    VoxelCoord c;
    c.z = uint32_t(idx % d);
    idx /= d;
    c.y = uint32_t(idx % d);
    c.x = uint32_t(idx / d);
    return c;
}

VoxelCoord to_global(const VoxelCoord& origin, const VoxelCoord& local, uint32_t d, uint32_t n) {
    if (local.x >= d || local.y >= d || local.z >= d)
        throw RangeError("local coordinate outside block");
    const uint64_t lim = 1ull << n;
    VoxelCoord g{origin.x + local.x, origin.y + local.y, origin.z + local.z};
    if (g.x >= lim || g.y >= lim || g.z >= lim)
        throw RangeError("global coordinate overflows 2^n grid");
    return g;
}

VoxelCoord to_local(const VoxelCoord& origin, const VoxelCoord& global, uint32_t d) {
    if (global.x < origin.x || global.y < origin.y || global.z < origin.z)
        throw RangeError("global coordinate precedes block origin");
    VoxelCoord l{global.x - origin.x, global.y - origin.y, global.z - origin.z};
    if (l.x >= d || l.y >= d || l.z >= d) throw RangeError("coordinate outside block");
    return l;
}

void validate(const SparseTensor& t, uint32_t d) {
    if (t.features.size() != t.size() * size_t(t.cols))
        throw ShapeError("feature row count does not match coordinate count");
    if (int(t.bitdepths.size()) != t.cols) throw ShapeError("bitdepths do not match columns");
    uint64_t prev = 0;
    for (size_t i = 0; i < t.coords.size(); ++i) {
        uint64_t r = raster_index(t.coords[i], d);
        if (i > 0 && r <= prev) throw ShapeError("coordinates not strictly raster-ascending");
        prev = r;
    }
    for (size_t i = 0; i < t.size(); ++i)
        for (int c = 0; c < t.cols; ++c)
            if (t.at(i, c) >= (1u << t.bitdepths[c]))
                throw RangeError("feature value exceeds column bit depth");
}

namespace {

enum class PropType { F32, F64, I32, U32, U8, U16, I16 };

size_t prop_size(PropType t) {
    switch (t) {
        case PropType::F64: return 8;
        case PropType::F32: case PropType::I32: case PropType::U32: return 4;
        case PropType::U16: case PropType::I16: return 2;
        default: return 1;
    }
}

PropType parse_prop_type(const std::string& s, std::streampos off) {
    if (s == "float" || s == "float32") return PropType::F32;
    if (s == "double" || s == "float64") return PropType::F64;
    if (s == "int" || s == "int32") return PropType::I32;
    if (s == "uint" || s == "uint32") return PropType::U32;
    if (s == "uchar" || s == "uint8") return PropType::U8;
    if (s == "ushort" || s == "uint16") return PropType::U16;
    if (s == "short" || s == "int16") return PropType::I16;
    throw ParseError("unsupported property type '" + s + "' at byte " +
                     std::to_string(std::streamoff(off)));
}

struct VertexLayout {
    struct Prop {
        std::string name;
        PropType type;
    };
    std::vector<Prop> props;
    int idx[6] = {-1, -1, -1, -1, -1, -1};  // x y z red green blue
    size_t count = 0;

    size_t row_bytes() const {
        size_t n = 0;
        for (auto& p : props) n += prop_size(p.type);
        return n;
    }
};

double read_scalar_binary(const char* p, PropType t) {
    switch (t) {
        case PropType::F32: {
            float v;
            std::memcpy(&v, p, 4);
            return v;
        }
        case PropType::F64: {
            double v;
            std::memcpy(&v, p, 8);
            return v;
        }
        case PropType::I32: {
            int32_t v;
            std::memcpy(&v, p, 4);
            return v;
        }
        case PropType::U32: {
            uint32_t v;
            std::memcpy(&v, p, 4);
            return v;
        }
        case PropType::U16: {
            uint16_t v;
            std::memcpy(&v, p, 2);
            return v;
        }
        case PropType::I16: {
            int16_t v;
            std::memcpy(&v, p, 2);
            return v;
        }
        default: return uint8_t(*p);
    }
}

}  // namespace

RawPointCloud load_ply(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);

    auto fail = [&](const std::string& what) {
        throw ParseError(what + " at byte " + std::to_string(std::streamoff(f.tellg())));
    };

    std::string line;
    if (!std::getline(f, line) || (line != "ply" && line != "ply\r")) fail("missing ply magic");

    bool binary = false;
    bool in_vertex = false;
    bool saw_format = false;
    VertexLayout vtx;
    bool vertex_seen = false;
    bool done = false;

    while (!done) {
        if (!std::getline(f, line)) fail("unterminated header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
        if (tok == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt == "ascii")
                binary = false;
            else if (fmt == "binary_little_endian")
                binary = true;
            else
                fail("unsupported format '" + fmt + "'");
            saw_format = true;
        } else if (tok == "element") {
            std::string name;
            size_t count = 0;
            ls >> name >> count;
            if (!ls) fail("malformed element line");
            if (name == "vertex") {
                if (vertex_seen) fail("duplicate vertex element");
                vertex_seen = true;
                in_vertex = true;
                vtx.count = count;
            } else {
                if (!vertex_seen) fail("non-vertex element before vertex not supported");
                in_vertex = false;  // trailing elements are ignored
            }
        } else if (tok == "property") {
            if (!in_vertex) continue;
            std::string type;
            ls >> type;
            if (type == "list") fail("list property on vertex element not supported");
            std::string name;
            ls >> name;
            if (!ls) fail("malformed property line");
            PropType pt = parse_prop_type(type, f.tellg());
            static const char* wanted[6] = {"x", "y", "z", "red", "green", "blue"};
            for (int i = 0; i < 6; ++i)
                if (name == wanted[i]) vtx.idx[i] = int(vtx.props.size());
            vtx.props.push_back({name, pt});
        } else if (tok == "end_header") {
            done = true;
        } else {
            fail("unknown header token '" + tok + "'");
        }
    }
    if (!saw_format) fail("header missing format line");
    if (!vertex_seen) fail("header missing vertex element");
    for (int i = 0; i < 3; ++i)
        if (vtx.idx[i] < 0) fail("vertex element lacks x/y/z");
    for (int i = 0; i < 3; ++i) {
        PropType t = vtx.props[vtx.idx[i]].type;
        if (t == PropType::U8 || t == PropType::U16 || t == PropType::I16)
            fail("unsupported coordinate property type");
    }
    const bool has_color = vtx.idx[3] >= 0 && vtx.idx[4] >= 0 && vtx.idx[5] >= 0;
    if (has_color)
        for (int i = 3; i < 6; ++i)
            if (vtx.props[vtx.idx[i]].type != PropType::U8)
                fail("color properties must be uint8");

    RawPointCloud pc;
    pc.has_color = has_color;
    pc.points.resize(vtx.count);

    if (binary) {
        const size_t row = vtx.row_bytes();
        std::vector<char> buf(row);
        std::vector<size_t> offs(vtx.props.size());
        size_t o = 0;
        for (size_t i = 0; i < vtx.props.size(); ++i) {
            offs[i] = o;
            o += prop_size(vtx.props[i].type);
        }
        for (size_t i = 0; i < vtx.count; ++i) {
            f.read(buf.data(), std::streamsize(row));
            if (!f) fail("truncated vertex data");
            RawPoint& p = pc.points[i];
            p.x = read_scalar_binary(buf.data() + offs[vtx.idx[0]], vtx.props[vtx.idx[0]].type);
            p.y = read_scalar_binary(buf.data() + offs[vtx.idx[1]], vtx.props[vtx.idx[1]].type);
            p.z = read_scalar_binary(buf.data() + offs[vtx.idx[2]], vtx.props[vtx.idx[2]].type);
            if (has_color) {
                p.r = uint8_t(buf[offs[vtx.idx[3]]]);
                p.g = uint8_t(buf[offs[vtx.idx[4]]]);
                p.b = uint8_t(buf[offs[vtx.idx[5]]]);
            }
        }
    } else {
        for (size_t i = 0; i < vtx.count; ++i) {
            if (!std::getline(f, line)) fail("truncated vertex data");
            std::istringstream ls(line);
            std::vector<double> vals(vtx.props.size());
            for (size_t j = 0; j < vtx.props.size(); ++j)
                if (!(ls >> vals[j])) fail("malformed vertex line " + std::to_string(i));
            RawPoint& p = pc.points[i];
            p.x = vals[vtx.idx[0]];
            p.y = vals[vtx.idx[1]];
            p.z = vals[vtx.idx[2]];
            if (has_color) {
                auto to_u8 = [&](double v) {
                    if (v < 0 || v > 255) fail("color value out of range");
                    return uint8_t(v);
                };
                p.r = to_u8(vals[vtx.idx[3]]);
                p.g = to_u8(vals[vtx.idx[4]]);
                p.b = to_u8(vals[vtx.idx[5]]);
            }
        }
    }
    return pc;
}

void save_ply(const std::string& path, const SparseTensor& cloud, bool binary, bool with_color) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "ply\n"
      << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
    if (with_color)
        f << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    f << "end_header\n";

    for (size_t i = 0; i < cloud.size(); ++i) {
        const auto& c = cloud.coords[i];
        if (binary) {
            float xyz[3] = {float(c.x), float(c.y), float(c.z)};
            f.write(reinterpret_cast<const char*>(xyz), 12);
            if (with_color) {
                uint8_t rgb[3] = {uint8_t(cloud.at(i, 0)), uint8_t(cloud.at(i, 1)),
                                  uint8_t(cloud.at(i, 2))};
                f.write(reinterpret_cast<const char*>(rgb), 3);
            }
        } else {
            f << c.x << ' ' << c.y << ' ' << c.z;
            if (with_color)
                f << ' ' << cloud.at(i, 0) << ' ' << cloud.at(i, 1) << ' ' << cloud.at(i, 2);
            f << '\n';
        }
    }
    if (!f) throw IoError("write failed for " + path);
}

VoxelizeResult voxelize(const RawPointCloud& pc, int n) {
    if (n < 3 || n > 16) throw ConfigError("bit depth must lie in [3,16]");
    const double lim = double(1u << n);

    std::array<double, 3> shift{0, 0, 0};
    bool need_shift = false;
    for (const auto& p : pc.points) {
        const double v[3] = {p.x, p.y, p.z};
        for (int a = 0; a < 3; ++a)
            if (v[a] < 0 || v[a] >= lim) need_shift = true;
    }
    if (need_shift && !pc.points.empty()) {
        shift = {pc.points[0].x, pc.points[0].y, pc.points[0].z};
        for (const auto& p : pc.points) {
            shift[0] = std::min(shift[0], p.x);
            shift[1] = std::min(shift[1], p.y);
            shift[2] = std::min(shift[2], p.z);
        }
        for (auto& s : shift) s = std::floor(s);
    }

    struct Item {
        uint64_t key;
        uint32_t r, g, b;
    };
    std::vector<Item> items;
    items.reserve(pc.points.size());
    const double top = std::nextafter(lim, 0.0);
    for (const auto& p : pc.points) {
        const double v[3] = {p.x - shift[0], p.y - shift[1], p.z - shift[2]};
        uint32_t q[3];
        for (int a = 0; a < 3; ++a) {
            if (v[a] < 0 || v[a] > lim)
                throw RangeError("point outside [0,2^n) after quantization");
            q[a] = uint32_t(std::floor(std::min(v[a], top)));
        }
        items.push_back({(uint64_t(q[0]) << 32) | (uint64_t(q[1]) << 16) | q[2], p.r, p.g, p.b});
    }
    std::sort(items.begin(), items.end(),
              [](const Item& a, const Item& b) { return a.key < b.key; });

    VoxelizeResult out;
    out.shift = {float(shift[0]), float(shift[1]), float(shift[2])};
    SparseTensor& t = out.tensor;
    t.cols = 3;
    t.bitdepths = {8, 8, 8};
    size_t i = 0;
    while (i < items.size()) {
        size_t j = i;
        uint64_t sum[3] = {0, 0, 0};
        while (j < items.size() && items[j].key == items[i].key) {
            sum[0] += items[j].r;
            sum[1] += items[j].g;
            sum[2] += items[j].b;
            ++j;
        }
        const uint64_t cnt = j - i;
        VoxelCoord c{uint32_t(items[i].key >> 32), uint32_t(items[i].key >> 16) & 0xFFFF,
                     uint32_t(items[i].key) & 0xFFFF};
        t.coords.push_back(c);
        for (int a = 0; a < 3; ++a) {
            // mean rounded to nearest, ties up: floor((2*sum + cnt) / (2*cnt))
            t.features.push_back(uint16_t((2 * sum[a] + cnt) / (2 * cnt)));
        }
        i = j;
    }
    return out;
}

}  // namespace cnet
