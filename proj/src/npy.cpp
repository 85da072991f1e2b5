#include <patchace/npy.hpp>

#include <patchace/error.hpp>

#include <cctype>
#include <cstring>
#include <fstream>
#include <string>

namespace patchace::npy {

namespace {

constexpr char kMagic[6] = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

std::string descr_for(Dtype dt) {
    switch (dt) {
        case Dtype::F32: return "<f4";
        case Dtype::F64: return "<f8";
        case Dtype::U8: return "|u1";
    }
    throw ArgumentError("npy: unknown dtype");
}

Dtype dtype_for(const std::string& descr) {
    if (descr == "<f4") return Dtype::F32;
    if (descr == "<f8") return Dtype::F64;
    if (descr == "|u1" || descr == "<u1") return Dtype::U8;
    throw FormatError("npy: unsupported dtype descr '" + descr + "'");
}

std::string shape_tuple(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (i + 1 < shape.size())
            s += ", ";
        else
            s += ",";
    }
    if (shape.size() > 1) s.pop_back(); // trailing comma only for 1-tuples
    s += ")";
    return s;
}

struct HeaderFields {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::size_t> shape;
};

// Parse the Python dict literal numpy writes. Keys may appear in any order;
// only the three standard keys are recognized.
HeaderFields parse_header(const std::string& header) {
    HeaderFields out;
    auto find_key = [&](const std::string& key) -> std::size_t {
        const std::string quoted = "'" + key + "'";
        const std::size_t pos = header.find(quoted);
        if (pos == std::string::npos)
            throw FormatError("npy: header missing key " + quoted);
        std::size_t colon = header.find(':', pos + quoted.size());
        if (colon == std::string::npos) throw FormatError("npy: malformed header");
        ++colon;
        while (colon < header.size() && std::isspace(static_cast<unsigned char>(header[colon])))
            ++colon;
        return colon;
    };

    {
        std::size_t p = find_key("descr");
        if (p >= header.size() || (header[p] != '\'' && header[p] != '"'))
            throw FormatError("npy: descr is not a string");
        const char quote = header[p];
        const std::size_t end = header.find(quote, p + 1);
        if (end == std::string::npos) throw FormatError("npy: unterminated descr");
        out.descr = header.substr(p + 1, end - p - 1);
    }
    {
        std::size_t p = find_key("fortran_order");
        if (header.compare(p, 4, "True") == 0)
            out.fortran_order = true;
        else if (header.compare(p, 5, "False") == 0)
            out.fortran_order = false;
        else
            throw FormatError("npy: fortran_order is not a boolean");
    }
    {
        std::size_t p = find_key("shape");
        if (p >= header.size() || header[p] != '(')
            throw FormatError("npy: shape is not a tuple");
        const std::size_t end = header.find(')', p);
        if (end == std::string::npos) throw FormatError("npy: unterminated shape");
        std::string body = header.substr(p + 1, end - p - 1);
        std::size_t i = 0;
        while (i < body.size()) {
            while (i < body.size() &&
                   (std::isspace(static_cast<unsigned char>(body[i])) || body[i] == ','))
                ++i;
            if (i >= body.size()) break;
            if (!std::isdigit(static_cast<unsigned char>(body[i])))
                throw FormatError("npy: non-integer extent in shape");
            std::size_t val = 0;
            while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
                val = val * 10 + static_cast<std::size_t>(body[i] - '0');
                ++i;
            }
            out.shape.push_back(val);
        }
    }
    return out;
}

} // namespace

std::vector<std::byte> encode(const Tensor& t) {
    std::string header = "{'descr': '" + descr_for(t.dtype()) +
                         "', 'fortran_order': False, 'shape': " +
                         shape_tuple(t.shape()) + ", }";
    // Pad with spaces so magic+version+len+header is a multiple of 64,
    // terminated by newline.
    const std::size_t prefix = 6 + 2 + 2;
    std::size_t total = prefix + header.size() + 1;
    const std::size_t padded = (total + 63) / 64 * 64;
    header.append(padded - total, ' ');
    header.push_back('\n');
    if (header.size() > 0xFFFF)
        throw FormatError("npy: header too large for v1.0");

    std::vector<std::byte> out;
    out.reserve(prefix + header.size() + t.byte_size());
    out.insert(out.end(), reinterpret_cast<const std::byte*>(kMagic),
               reinterpret_cast<const std::byte*>(kMagic) + 6);
    out.push_back(std::byte{1});
    out.push_back(std::byte{0});
    const auto hlen = static_cast<std::uint16_t>(header.size());
    out.push_back(static_cast<std::byte>(hlen & 0xFF));
    out.push_back(static_cast<std::byte>((hlen >> 8) & 0xFF));
    out.insert(out.end(), reinterpret_cast<const std::byte*>(header.data()),
               reinterpret_cast<const std::byte*>(header.data()) + header.size());
    out.insert(out.end(), t.raw(), t.raw() + t.byte_size());
    return out;
}

Tensor decode(std::span<const std::byte> bytes) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 6) != 0)
        throw FormatError("npy: bad magic");
    const auto major = static_cast<unsigned>(bytes[6]);
    const auto minor = static_cast<unsigned>(bytes[7]);
    (void)minor;
    std::size_t header_len = 0;
    std::size_t header_off = 0;
    if (major == 1) {
        header_len = static_cast<std::size_t>(bytes[8]) |
                     (static_cast<std::size_t>(bytes[9]) << 8);
        header_off = 10;
    } else if (major == 2) {
        if (bytes.size() < 12) throw FormatError("npy: truncated v2 header");
        header_len = static_cast<std::size_t>(bytes[8]) |
                     (static_cast<std::size_t>(bytes[9]) << 8) |
                     (static_cast<std::size_t>(bytes[10]) << 16) |
                     (static_cast<std::size_t>(bytes[11]) << 24);
        header_off = 12;
    } else {
        throw FormatError("npy: unsupported version " + std::to_string(major));
    }
    if (bytes.size() < header_off + header_len)
        throw FormatError("npy: truncated header");

    const std::string header(reinterpret_cast<const char*>(bytes.data()) + header_off,
                             header_len);
    const HeaderFields fields = parse_header(header);
    if (fields.fortran_order)
        throw FormatError("npy: Fortran-order layout is not supported");
    const Dtype dtype = dtype_for(fields.descr);

    Tensor t(fields.shape, dtype);
    const std::size_t payload_off = header_off + header_len;
    const std::size_t payload = bytes.size() - payload_off;
    if (payload != t.byte_size())
        throw FormatError("npy: payload size " + std::to_string(payload) +
                          " does not match shape " + shape_to_string(fields.shape));
    std::memcpy(t.raw(), bytes.data() + payload_off, payload);
    return t;
}

Tensor read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("npy: cannot open " + path.string());
    std::vector<std::byte> bytes;
    in.seekg(0, std::ios::end);
    bytes.resize(static_cast<std::size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!in) throw IoError("npy: read failure on " + path.string());
    return decode(bytes);
}

void write(const Tensor& t, const std::filesystem::path& path) {
    const std::vector<std::byte> bytes = encode(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("npy: cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("npy: write failure on " + path.string());
}

} // namespace patchace::npy
