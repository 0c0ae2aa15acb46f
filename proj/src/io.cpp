#include "embreg/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace embreg {

namespace fs = std::filesystem;

namespace {

constexpr char kEvolMagic[5] = {'E', 'V', 'O', 'L', '\0'};
constexpr std::uint16_t kEvolVersion = 1;

template <class T>
T byteswap(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
}

template <class T>
T from_order(T v, bool big_endian) {
    const bool host_big = std::endian::native == std::endian::big;
    return host_big == big_endian ? v : byteswap(v);
}

template <class T>
void put_le(std::ostream& os, T v) {
    v = from_order(v, false);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const fs::path& path, const char* field) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw IoError(path.string() + ": truncated header reading " + field);
    return from_order(v, false);
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string extension(const fs::path& p) { return lower(p.extension().string()); }

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    return os;
}

// ---------------------------------------------------------------- MetaImage

enum class ElementType { Short, Float, UChar };

struct MetaHeader {
    Dims dims{};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};
    ElementType type = ElementType::Float;
    bool msb = false;
    fs::path data_file;
    std::streamoff local_offset = -1;  // ElementDataFile = LOCAL
};

std::size_t element_size(ElementType t) {
    switch (t) {
        case ElementType::Short: return 2;
        case ElementType::Float: return 4;
        case ElementType::UChar: return 1;
    }
    return 0;
}

std::vector<double> parse_numbers(const std::string& value, std::size_t expected, const fs::path& path,
                                  const std::string& key) {
    std::istringstream ss(value);
    std::vector<double> out;
    double v;
    while (ss >> v) out.push_back(v);
    if (out.size() != expected)
        throw IoError(path.string() + ": field " + key + " expects " + std::to_string(expected) + " values, got '" +
                      value + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    const auto s = lower(v);
    return s == "true" || s == "1" || s == "yes";
}

MetaHeader read_meta_header(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    MetaHeader h;
    bool have_dims = false, have_type = false, have_file = false;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "NDims") {
            if (value != "3") throw IoError(path.string() + ": field NDims must be 3, got " + value);
        } else if (key == "DimSize") {
            const auto v = parse_numbers(value, 3, path, key);
            // MetaImage lists the fastest axis first: (x, y, z).
            h.dims = Dims{static_cast<int>(v[2]), static_cast<int>(v[1]), static_cast<int>(v[0])};
            have_dims = true;
        } else if (key == "ElementSpacing" || key == "ElementSize") {
            const auto v = parse_numbers(value, 3, path, key);
            h.spacing = Vec3{v[2], v[1], v[0]};
        } else if (key == "Offset" || key == "Position" || key == "Origin") {
            const auto v = parse_numbers(value, 3, path, key);
            h.origin = Vec3{v[2], v[1], v[0]};
        } else if (key == "ElementType") {
            if (value == "MET_SHORT") h.type = ElementType::Short;
            else if (value == "MET_FLOAT") h.type = ElementType::Float;
            else if (value == "MET_UCHAR") h.type = ElementType::UChar;
            else throw IoError(path.string() + ": field ElementType has unsupported value " + value);
            have_type = true;
        } else if (key == "BinaryDataByteOrderMSB" || key == "ElementByteOrderMSB") {
            h.msb = parse_bool(value);
        } else if (key == "CompressedData") {
            if (parse_bool(value)) throw IoError(path.string() + ": field CompressedData=True is not supported");
        } else if (key == "ObjectType") {
            if (value != "Image") throw IoError(path.string() + ": field ObjectType must be Image, got " + value);
        } else if (key == "ElementNumberOfChannels") {
            if (value != "1") throw IoError(path.string() + ": field ElementNumberOfChannels must be 1");
        } else if (key == "ElementDataFile") {
            have_file = true;
            if (value == "LOCAL") {
                h.local_offset = is.tellg();
            } else {
                fs::path p(value);
                h.data_file = p.is_absolute() ? p : path.parent_path() / p;
            }
            break;
        }
    }
    if (!have_dims) throw IoError(path.string() + ": missing field DimSize");
    if (!have_type) throw IoError(path.string() + ": missing field ElementType");
    if (!have_file) throw IoError(path.string() + ": missing field ElementDataFile");
    if (h.dims.d < 1 || h.dims.h < 1 || h.dims.w < 1) throw IoError(path.string() + ": field DimSize must be positive");
    return h;
}

std::vector<char> read_meta_payload(const MetaHeader& h, const fs::path& header_path) {
    const fs::path data_path = h.local_offset >= 0 ? header_path : h.data_file;
    std::ifstream is(data_path, std::ios::binary);
    if (!is) throw IoError("cannot open data file " + data_path.string());
    is.seekg(0, std::ios::end);
    const std::streamoff total = is.tellg();
    const std::streamoff start = h.local_offset >= 0 ? h.local_offset : 0;
    const std::size_t expected = h.dims.count() * element_size(h.type);
    const std::streamoff available = total - start;
    if (available != static_cast<std::streamoff>(expected))
        throw IoError(data_path.string() + ": data size mismatch, header declares " + std::to_string(h.dims.count()) +
                      " voxels (" + std::to_string(expected) + " bytes) but file holds " + std::to_string(available) +
                      " bytes");
    std::vector<char> buf(expected);
    is.seekg(start);
    is.read(buf.data(), static_cast<std::streamsize>(expected));
    if (!is) throw IoError(data_path.string() + ": read failed");
    return buf;
}

template <class Out>
std::vector<Out> decode(const std::vector<char>& raw, const MetaHeader& h) {
    const std::size_t n = h.dims.count();
    std::vector<Out> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (h.type) {
            case ElementType::Short: {
                std::int16_t v;
                std::memcpy(&v, raw.data() + 2 * i, 2);
                out[i] = static_cast<Out>(from_order(v, h.msb));
                break;
            }
            case ElementType::Float: {
                float v;
                std::memcpy(&v, raw.data() + 4 * i, 4);
                out[i] = static_cast<Out>(from_order(v, h.msb));
                break;
            }
            case ElementType::UChar: out[i] = static_cast<Out>(static_cast<unsigned char>(raw[i])); break;
        }
    }
    return out;
}

void write_meta(const fs::path& path, const Dims& dims, const Vec3& spacing, const Vec3& origin, const char* type,
                const std::vector<char>& payload) {
    fs::path raw = path;
    raw.replace_extension(".raw");
    {
        auto os = open_out(path);
        os << std::setprecision(17);
        os << "ObjectType = Image\n";
        os << "NDims = 3\n";
        os << "BinaryData = True\n";
        os << "BinaryDataByteOrderMSB = " << (std::endian::native == std::endian::big ? "True" : "False") << "\n";
        os << "CompressedData = False\n";
        os << "Offset = " << origin[2] << " " << origin[1] << " " << origin[0] << "\n";
        os << "ElementSpacing = " << spacing[2] << " " << spacing[1] << " " << spacing[0] << "\n";
        os << "DimSize = " << dims.w << " " << dims.h << " " << dims.d << "\n";
        os << "ElementType = " << type << "\n";
        os << "ElementDataFile = " << raw.filename().string() << "\n";
        if (!os) throw IoError("write failed: " + path.string());
    }
    auto os = open_out(raw);
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw IoError("write failed: " + raw.string());
}

template <class T>
std::vector<char> as_bytes(std::span<const T> values) {
    std::vector<char> out(values.size() * sizeof(T));
    std::memcpy(out.data(), values.data(), out.size());
    return out;
}

}  // namespace

// ---------------------------------------------------------------- .evol

EvolRecord read_evol(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, kEvolMagic, 5) != 0)
        throw IoError(path.string() + ": bad magic, not an .evol file");
    const auto version = get_le<std::uint16_t>(is, path, "version");
    if (version != kEvolVersion) throw IoError(path.string() + ": unsupported field version " + std::to_string(version));
    EvolRecord rec;
    rec.channels = static_cast<int>(get_le<std::uint32_t>(is, path, "C"));
    rec.dims.d = static_cast<int>(get_le<std::uint32_t>(is, path, "D"));
    rec.dims.h = static_cast<int>(get_le<std::uint32_t>(is, path, "H"));
    rec.dims.w = static_cast<int>(get_le<std::uint32_t>(is, path, "W"));
    for (auto& s : rec.spacing) s = get_le<float>(is, path, "spacing");
    for (auto& o : rec.origin) o = get_le<float>(is, path, "origin");
    if (rec.channels < 1 || rec.dims.d < 1 || rec.dims.h < 1 || rec.dims.w < 1)
        throw IoError(path.string() + ": fields C/D/H/W must be positive");
    const std::size_t n = static_cast<std::size_t>(rec.channels) * rec.dims.count();
    const auto here = is.tellg();
    is.seekg(0, std::ios::end);
    const auto available = is.tellg() - here;
    if (available != static_cast<std::streamoff>(n * 4))
        throw IoError(path.string() + ": data size mismatch, header declares " + std::to_string(n) +
                      " floats but payload holds " + std::to_string(available) + " bytes");
    is.seekg(here);
    rec.payload.resize(n);
    is.read(reinterpret_cast<char*>(rec.payload.data()), static_cast<std::streamsize>(n * 4));
    if (!is) throw IoError(path.string() + ": read failed");
    if constexpr (std::endian::native == std::endian::big)
        for (auto& v : rec.payload) v = byteswap(v);
    return rec;
}

void write_evol(const EvolRecord& rec, const fs::path& path) {
    auto os = open_out(path);
    os.write(kEvolMagic, 5);
    put_le<std::uint16_t>(os, kEvolVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(rec.channels));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(rec.dims.d));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(rec.dims.h));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(rec.dims.w));
    for (double s : rec.spacing) put_le<float>(os, static_cast<float>(s));
    for (double o : rec.origin) put_le<float>(os, static_cast<float>(o));
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(rec.payload.data()),
                 static_cast<std::streamsize>(rec.payload.size() * sizeof(float)));
    } else {
        for (float v : rec.payload) put_le<float>(os, v);
    }
    if (!os) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------- typed API

Volume load_volume(const fs::path& path) {
    const auto ext = extension(path);
    if (ext == ".evol") {
        auto rec = read_evol(path);
        if (rec.channels != 1)
            throw IoError(path.string() + ": field C must be 1 for a scalar volume, got " + std::to_string(rec.channels));
        return Volume(rec.dims, rec.spacing, rec.origin, std::move(rec.payload));
    }
    if (ext == ".mhd" || ext == ".mha") {
        const auto h = read_meta_header(path);
        const auto raw = read_meta_payload(h, path);
        return Volume(h.dims, h.spacing, h.origin, decode<float>(raw, h));
    }
    throw IoError(path.string() + ": unrecognised volume extension '" + ext + "' (expected .mhd or .evol)");
}

void save_volume(const Volume& v, const fs::path& path) {
    const auto ext = extension(path);
    if (ext == ".evol") {
        write_evol(EvolRecord{1, v.dims(), v.spacing(), v.origin(), v.values()}, path);
    } else if (ext == ".mhd") {
        write_meta(path, v.dims(), v.spacing(), v.origin(), "MET_FLOAT", as_bytes(v.data()));
    } else {
        throw IoError(path.string() + ": unrecognised volume extension '" + ext + "' (expected .mhd or .evol)");
    }
}

LabelVolume load_labels(const fs::path& path) {
    const auto ext = extension(path);
    if (ext == ".mhd" || ext == ".mha") {
        const auto h = read_meta_header(path);
        const auto raw = read_meta_payload(h, path);
        const auto values = decode<double>(raw, h);
        std::vector<std::uint16_t> out(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double v = values[i];
            if (v < 0 || v > std::numeric_limits<std::uint16_t>::max() || v != std::floor(v))
                throw IoError(path.string() + ": label value " + std::to_string(v) + " is not a small non-negative integer");
            out[i] = static_cast<std::uint16_t>(v);
        }
        return LabelVolume(h.dims, h.spacing, h.origin, std::move(out));
    }
    if (ext == ".evol") {
        auto v = load_volume(path);
        std::vector<std::uint16_t> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<std::uint16_t>(std::lround(v[i]));
        return LabelVolume(v.dims(), v.spacing(), v.origin(), std::move(out));
    }
    throw IoError(path.string() + ": unrecognised label extension '" + ext + "'");
}

void save_labels(const LabelVolume& labels, const fs::path& path) {
    if (extension(path) != ".mhd") throw IoError(path.string() + ": labels are written as .mhd");
    const auto max = labels.empty() ? 0 : *std::max_element(labels.data().begin(), labels.data().end());
    if (max <= 255) {
        std::vector<char> bytes(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) bytes[i] = static_cast<char>(labels[i]);
        write_meta(path, labels.dims(), labels.spacing(), labels.origin(), "MET_UCHAR", bytes);
    } else {
        if (max > std::numeric_limits<std::int16_t>::max())
            throw IoError(path.string() + ": label " + std::to_string(max) + " does not fit MET_SHORT");
        std::vector<std::int16_t> shorts(labels.data().begin(), labels.data().end());
        write_meta(path, labels.dims(), labels.spacing(), labels.origin(), "MET_SHORT",
                   as_bytes(std::span<const std::int16_t>(shorts)));
    }
}

EmbeddingVolume load_embedding(const fs::path& path) {
    auto rec = read_evol(path);
    return EmbeddingVolume(rec.channels, rec.dims, rec.spacing, rec.origin, std::move(rec.payload));
}

void save_embedding(const EmbeddingVolume& e, const fs::path& path) {
    write_evol(EvolRecord{e.channels(), e.dims(), e.spacing(), e.origin(),
                          std::vector<float>(e.data().begin(), e.data().end())},
               path);
}

DisplacementField load_field(const fs::path& path) {
    auto rec = read_evol(path);
    if (rec.channels != 3)
        throw IoError(path.string() + ": field C must be 3 for a displacement field, got " +
                      std::to_string(rec.channels));
    return DisplacementField(rec.dims, rec.spacing, rec.origin, std::move(rec.payload));
}

void save_field(const DisplacementField& f, const fs::path& path) {
    write_evol(EvolRecord{3, f.dims(), f.spacing(), f.origin(), std::vector<float>(f.data().begin(), f.data().end())},
               path);
}

}  // namespace embreg
