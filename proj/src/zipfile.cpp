#include <patchace/zipfile.hpp>

#include <patchace/error.hpp>

#include <zlib.h>

#include <cstring>
#include <span>

namespace patchace::zipio {

namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
// DOS date for 1980-01-01, time 00:00:00.
constexpr std::uint16_t kDosDate = 0x0021;
constexpr std::uint16_t kDosTime = 0;

void put16(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xFF));
    b.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put32(std::string& b, std::uint32_t v) {
    b.push_back(static_cast<char>(v & 0xFF));
    b.push_back(static_cast<char>((v >> 8) & 0xFF));
    b.push_back(static_cast<char>((v >> 16) & 0xFF));
    b.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint16_t get16(const std::byte* p) {
    return static_cast<std::uint16_t>(static_cast<unsigned>(p[0]) |
                                      (static_cast<unsigned>(p[1]) << 8));
}

std::uint32_t get32(const std::byte* p) {
    return static_cast<std::uint32_t>(static_cast<unsigned>(p[0]) |
                                      (static_cast<unsigned>(p[1]) << 8) |
                                      (static_cast<unsigned>(p[2]) << 16) |
                                      (static_cast<unsigned>(p[3]) << 24));
}

std::uint32_t crc_of(std::span<const std::byte> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::byte> inflate_raw(std::span<const std::byte> in, std::size_t out_size) {
    std::vector<std::byte> out(out_size);
    z_stream zs{};
    if (inflateInit2(&zs, -15) != Z_OK)
        throw IoError("zip: inflateInit failed");
    zs.next_in = const_cast<Bytef*>(reinterpret_cast<const Bytef*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END)
        throw FormatError("zip: deflate stream is corrupt");
    if (zs.total_out != out_size)
        throw FormatError("zip: inflated size mismatch");
    return out;
}

} // namespace

ZipWriter::ZipWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw IoError("zip: cannot open " + path.string() + " for writing");
}

ZipWriter::~ZipWriter() {
    if (!finished_) {
        try {
            finish();
        } catch (...) {
        }
    }
}

void ZipWriter::add(const std::string& name, std::span<const std::byte> bytes) {
    if (finished_) throw IoError("zip: add after finish");
    if (bytes.size() > 0xFFFFFFFFull)
        throw IoError("zip: entry too large (zip64 not supported)");
    const std::uint32_t crc = crc_of(bytes);
    const auto size = static_cast<std::uint32_t>(bytes.size());

    std::string hdr;
    put32(hdr, kLocalSig);
    put16(hdr, 20);       // version needed
    put16(hdr, 0);        // flags
    put16(hdr, 0);        // method: stored
    put16(hdr, kDosTime);
    put16(hdr, kDosDate);
    put32(hdr, crc);
    put32(hdr, size);     // compressed
    put32(hdr, size);     // uncompressed
    put16(hdr, static_cast<std::uint16_t>(name.size()));
    put16(hdr, 0);        // extra len
    hdr += name;

    out_.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    out_.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw IoError("zip: write failure on " + path_.string());

    entries_.push_back({name, crc, size, offset_});
    offset_ += static_cast<std::uint32_t>(hdr.size() + bytes.size());
}

void ZipWriter::add_text(const std::string& name, const std::string& text) {
    add(name, std::as_bytes(std::span<const char>(text.data(), text.size())));
}

void ZipWriter::finish() {
    if (finished_) return;
    finished_ = true;
    std::string cd;
    for (const Entry& e : entries_) {
        put32(cd, kCentralSig);
        put16(cd, 20); // version made by
        put16(cd, 20); // version needed
        put16(cd, 0);  // flags
        put16(cd, 0);  // method
        put16(cd, kDosTime);
        put16(cd, kDosDate);
        put32(cd, e.crc);
        put32(cd, e.size);
        put32(cd, e.size);
        put16(cd, static_cast<std::uint16_t>(e.name.size()));
        put16(cd, 0); // extra
        put16(cd, 0); // comment
        put16(cd, 0); // disk number
        put16(cd, 0); // internal attrs
        put32(cd, 0); // external attrs
        put32(cd, e.offset);
        cd += e.name;
    }
    std::string eocd;
    put32(eocd, kEndSig);
    put16(eocd, 0);
    put16(eocd, 0);
    put16(eocd, static_cast<std::uint16_t>(entries_.size()));
    put16(eocd, static_cast<std::uint16_t>(entries_.size()));
    put32(eocd, static_cast<std::uint32_t>(cd.size()));
    put32(eocd, offset_);
    put16(eocd, 0);

    out_.write(cd.data(), static_cast<std::streamsize>(cd.size()));
    out_.write(eocd.data(), static_cast<std::streamsize>(eocd.size()));
    out_.close();
    if (out_.fail()) throw IoError("zip: failed to finalize " + path_.string());
}

ZipReader::ZipReader(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("zip: cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::size_t>(in.tellg());
    if (file_size < 22) throw FormatError("zip: file too small");

    // Locate the end-of-central-directory record, allowing a trailing comment.
    const std::size_t tail_len = std::min<std::size_t>(file_size, 22 + 65535);
    std::vector<std::byte> tail(tail_len);
    in.seekg(static_cast<std::streamoff>(file_size - tail_len));
    in.read(reinterpret_cast<char*>(tail.data()), static_cast<std::streamsize>(tail_len));
    std::size_t eocd = tail_len;
    for (std::size_t i = tail_len - 22 + 1; i-- > 0;) {
        if (get32(tail.data() + i) == kEndSig) {
            eocd = i;
            break;
        }
    }
    if (eocd == tail_len) throw FormatError("zip: end record not found");

    const std::uint16_t count = get16(tail.data() + eocd + 10);
    const std::uint32_t cd_size = get32(tail.data() + eocd + 12);
    const std::uint32_t cd_offset = get32(tail.data() + eocd + 16);

    std::vector<std::byte> cd(cd_size);
    in.seekg(cd_offset);
    in.read(reinterpret_cast<char*>(cd.data()), static_cast<std::streamsize>(cd_size));
    if (!in) throw FormatError("zip: truncated central directory");

    std::size_t pos = 0;
    for (std::uint16_t k = 0; k < count; ++k) {
        if (pos + 46 > cd.size() || get32(cd.data() + pos) != kCentralSig)
            throw FormatError("zip: bad central directory entry");
        Entry e;
        e.method = get16(cd.data() + pos + 10);
        e.crc = get32(cd.data() + pos + 16);
        e.compressed_size = get32(cd.data() + pos + 20);
        e.size = get32(cd.data() + pos + 24);
        const std::uint16_t name_len = get16(cd.data() + pos + 28);
        const std::uint16_t extra_len = get16(cd.data() + pos + 30);
        const std::uint16_t comment_len = get16(cd.data() + pos + 32);
        e.local_offset = get32(cd.data() + pos + 42);
        if (pos + 46 + name_len > cd.size())
            throw FormatError("zip: truncated entry name");
        std::string name(reinterpret_cast<const char*>(cd.data() + pos + 46), name_len);
        if (e.size == 0xFFFFFFFFu || e.compressed_size == 0xFFFFFFFFu)
            throw FormatError("zip: zip64 archives are not supported");
        order_.push_back(name);
        entries_.emplace(std::move(name), e);
        pos += 46u + name_len + extra_len + comment_len;
    }
}

std::vector<std::string> ZipReader::names() const { return order_; }

bool ZipReader::contains(const std::string& name) const {
    return entries_.count(name) > 0;
}

std::vector<std::byte> ZipReader::read(const std::string& name) const {
    const auto it = entries_.find(name);
    if (it == entries_.end())
        throw FormatError("zip: no entry '" + name + "' in " + path_.string());
    const Entry& e = it->second;

    std::ifstream in(path_, std::ios::binary);
    if (!in) throw IoError("zip: cannot open " + path_.string());
    std::byte local[30];
    in.seekg(e.local_offset);
    in.read(reinterpret_cast<char*>(local), 30);
    if (!in || get32(local) != kLocalSig)
        throw FormatError("zip: bad local header for '" + name + "'");
    const std::uint16_t name_len = get16(local + 26);
    const std::uint16_t extra_len = get16(local + 28);
    in.seekg(name_len + extra_len, std::ios::cur);

    std::vector<std::byte> raw(e.compressed_size);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (!in) throw FormatError("zip: truncated entry data for '" + name + "'");

    std::vector<std::byte> data;
    if (e.method == 0) {
        if (e.compressed_size != e.size)
            throw FormatError("zip: stored entry size mismatch");
        data = std::move(raw);
    } else if (e.method == 8) {
        data = inflate_raw(raw, e.size);
    } else {
        throw FormatError("zip: unsupported compression method " +
                          std::to_string(e.method));
    }
    if (crc_of(data) != e.crc)
        throw FormatError("zip: CRC mismatch for '" + name + "'");
    return data;
}

} // namespace patchace::zipio
