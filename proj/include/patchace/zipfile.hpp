#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace patchace::zipio {

/// Streaming ZIP writer. Entries are stored uncompressed with a fixed
/// 1980-01-01 timestamp so identical content yields identical archive bytes.
class ZipWriter {
public:
    explicit ZipWriter(const std::filesystem::path& path);
    ~ZipWriter();

    ZipWriter(const ZipWriter&) = delete;
    ZipWriter& operator=(const ZipWriter&) = delete;

    void add(const std::string& name, std::span<const std::byte> bytes);
    void add_text(const std::string& name, const std::string& text);

    /// Write the central directory and close the file. Called by the
    /// destructor if not called explicitly.
    void finish();

private:
    struct Entry {
        std::string name;
        std::uint32_t crc;
        std::uint32_t size;
        std::uint32_t offset;
    };

    std::ofstream out_;
    std::filesystem::path path_;
    std::vector<Entry> entries_;
    std::uint32_t offset_ = 0;
    bool finished_ = false;
};

/// ZIP reader for archives with stored or deflate entries (covers numpy's
/// savez and savez_compressed). CRCs are validated on read.
class ZipReader {
public:
    explicit ZipReader(const std::filesystem::path& path);

    std::vector<std::string> names() const;
    bool contains(const std::string& name) const;
    std::vector<std::byte> read(const std::string& name) const;

private:
    struct Entry {
        std::uint16_t method;
        std::uint32_t crc;
        std::uint32_t compressed_size;
        std::uint32_t size;
        std::uint32_t local_offset;
    };

    std::filesystem::path path_;
    std::map<std::string, Entry> entries_;
    std::vector<std::string> order_;
};

} // namespace patchace::zipio
