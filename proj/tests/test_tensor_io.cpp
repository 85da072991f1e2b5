#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <patchace/archive.hpp>
#include <patchace/npy.hpp>
#include <patchace/rng.hpp>
#include <patchace/tensor.hpp>
#include <patchace/zipfile.hpp>

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace patchace;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "patchace_tensor_io";
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<std::byte> hand_built_npy_f32_2x3() {
    // Built from the public format description, not through the writer.
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }";
    while ((10 + header.size() + 1) % 64 != 0) header += ' ';
    header += '\n';
    std::vector<std::byte> bytes;
    const char magic[] = "\x93NUMPY";
    for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::byte>(magic[i]));
    bytes.push_back(std::byte{1});
    bytes.push_back(std::byte{0});
    bytes.push_back(static_cast<std::byte>(header.size() & 0xFF));
    bytes.push_back(static_cast<std::byte>(header.size() >> 8));
    for (const char c : header) bytes.push_back(static_cast<std::byte>(c));
    const float values[6] = {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f};
    const auto* payload = reinterpret_cast<const std::byte*>(values);
    bytes.insert(bytes.end(), payload, payload + sizeof values);
    return bytes;
}

} // namespace

TEST_CASE("tensor basic invariants") {
    Tensor t({2, 3}, Dtype::F32);
    CHECK(t.size() == 6);
    CHECK(t.byte_size() == 24);
    CHECK_THROWS_AS((void)t.f64(), ArgumentError);

    Tensor scalar({}, Dtype::F64);
    CHECK(scalar.size() == 1);
    CHECK(scalar.rank() == 0);

    Tensor empty({0}, Dtype::U8);
    CHECK(empty.size() == 0);
    CHECK(empty.byte_size() == 0);
}

TEST_CASE("npy roundtrip identity across dtypes and shapes") {
    const auto dir = temp_dir();
    RngStream rng(2024);

    const std::vector<std::vector<std::size_t>> shapes = {
        {}, {0}, {1}, {7}, {2, 3}, {3, 1, 4}, {2, 0, 5}};
    for (const auto& shape : shapes) {
        for (const Dtype dtype : {Dtype::F32, Dtype::F64, Dtype::U8}) {
            Tensor t(shape, dtype);
            if (dtype == Dtype::F32)
                for (float& v : t.f32()) v = static_cast<float>(rng.normal());
            else if (dtype == Dtype::F64)
                for (double& v : t.f64()) v = rng.normal();
            else
                for (std::uint8_t& v : t.u8())
                    v = static_cast<std::uint8_t>(rng.below(256));

            const auto path = dir / "roundtrip.npy";
            npy::write(t, path);
            const Tensor back = npy::read(path);
            CHECK(back.same_bytes(t));
        }
    }
}

TEST_CASE("npy header layout: padding and payload size") {
    const auto dir = temp_dir();
    const float values[4] = {1.5f, -2.0f, 0.0f, 8.0f};
    Tensor t = Tensor::from_f32({2, 2}, values);
    const auto path = dir / "header.npy";
    npy::write(t, path);

    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    const std::size_t header_len =
        static_cast<unsigned char>(bytes[8]) |
        (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    CHECK((10 + header_len) % 64 == 0);
    CHECK(bytes.size() - (10 + header_len) == 16); // 4 f32 payload, little-endian
    float first;
    std::memcpy(&first, bytes.data() + 10 + header_len, 4);
    CHECK(first == 1.5f);
}

TEST_CASE("npy reads a hand-constructed v1.0 file") {
    const Tensor t = npy::decode(hand_built_npy_f32_2x3());
    CHECK(t.shape() == std::vector<std::size_t>{2, 3});
    CHECK(t.dtype() == Dtype::F32);
    CHECK(t.f32()[0] == 1.0f);
    CHECK(t.f32()[5] == 6.0f);
}

TEST_CASE("npy reads v2.0 headers") {
    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }";
    while ((12 + header.size() + 1) % 64 != 0) header += ' ';
    header += '\n';
    std::vector<std::byte> bytes;
    const char magic[] = "\x93NUMPY";
    for (int i = 0; i < 6; ++i) bytes.push_back(static_cast<std::byte>(magic[i]));
    bytes.push_back(std::byte{2});
    bytes.push_back(std::byte{0});
    const std::uint32_t hlen = static_cast<std::uint32_t>(header.size());
    for (int shift = 0; shift < 32; shift += 8)
        bytes.push_back(static_cast<std::byte>((hlen >> shift) & 0xFF));
    for (const char c : header) bytes.push_back(static_cast<std::byte>(c));
    const double values[3] = {1.0, 2.5, -3.0};
    const auto* payload = reinterpret_cast<const std::byte*>(values);
    bytes.insert(bytes.end(), payload, payload + sizeof values);

    const Tensor t = npy::decode(bytes);
    CHECK(t.dtype() == Dtype::F64);
    CHECK(t.f64()[1] == 2.5);
}

TEST_CASE("npy zero-dimensional scalar container") {
    const double value = 42.0;
    Tensor t = Tensor::from_f64({}, std::span<const double>(&value, 1));
    const std::vector<std::byte> bytes = npy::encode(t);
    const Tensor back = npy::decode(bytes);
    CHECK(back.shape().empty());
    CHECK(back.size() == 1);
    CHECK(back.f64()[0] == 42.0);
}

TEST_CASE("npy rejects malformed input") {
    auto good = hand_built_npy_f32_2x3();

    SUBCASE("bad magic") {
        good[0] = std::byte{0x00};
        CHECK_THROWS_AS(npy::decode(good), FormatError);
    }
    SUBCASE("fortran order") {
        std::string text(reinterpret_cast<const char*>(good.data()), good.size());
        const auto pos = text.find("False");
        std::memcpy(good.data() + pos, "True ", 5);
        CHECK_THROWS_AS(npy::decode(good), FormatError);
    }
    SUBCASE("unsupported dtype") {
        std::string text(reinterpret_cast<const char*>(good.data()), good.size());
        const auto pos = text.find("<f4");
        std::memcpy(good.data() + pos, "<i4", 3);
        CHECK_THROWS_AS(npy::decode(good), FormatError);
    }
    SUBCASE("payload size mismatch") {
        good.pop_back();
        CHECK_THROWS_AS(npy::decode(good), FormatError);
    }
    SUBCASE("truncated header") {
        good.resize(8);
        CHECK_THROWS_AS(npy::decode(good), FormatError);
    }
}

TEST_CASE("zip roundtrip with stored entries") {
    const auto path = temp_dir() / "plain.zip";
    {
        zipio::ZipWriter writer(path);
        const std::string a = "alpha-contents";
        writer.add_text("a.txt", a);
        writer.add_text("dir/b.txt", "beta");
        writer.finish();
    }
    zipio::ZipReader reader(path);
    CHECK(reader.names() == std::vector<std::string>{"a.txt", "dir/b.txt"});
    const auto a = reader.read("a.txt");
    CHECK(std::string(reinterpret_cast<const char*>(a.data()), a.size()) ==
          "alpha-contents");
    CHECK_THROWS_AS(reader.read("missing"), FormatError);
}

TEST_CASE("zip writer output is byte-deterministic") {
    const auto dir = temp_dir();
    auto make = [&](const std::filesystem::path& p) {
        zipio::ZipWriter writer(p);
        writer.add_text("x", "same content");
        writer.add_text("y", std::string(1000, 'q'));
        writer.finish();
    };
    make(dir / "one.zip");
    make(dir / "two.zip");
    std::ifstream a(dir / "one.zip", std::ios::binary), b(dir / "two.zip", std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("zip reader handles deflate entries") {
    // Build a deflate-compressed member by hand, mimicking savez_compressed.
    const std::string content(512, 'z');
    uLong bound = compressBound(content.size());
    std::vector<unsigned char> deflated(bound);
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, -15, 8,
                         Z_DEFAULT_STRATEGY) == Z_OK);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(content.data()));
    zs.avail_in = static_cast<uInt>(content.size());
    zs.next_out = deflated.data();
    zs.avail_out = static_cast<uInt>(deflated.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    const std::size_t csize = zs.total_out;
    deflateEnd(&zs);

    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(content.data()),
                static_cast<uInt>(content.size()));

    auto put16 = [](std::string& b, unsigned v) {
        b.push_back(static_cast<char>(v & 0xFF));
        b.push_back(static_cast<char>((v >> 8) & 0xFF));
    };
    auto put32 = [](std::string& b, unsigned long v) {
        for (int shift = 0; shift < 32; shift += 8)
            b.push_back(static_cast<char>((v >> shift) & 0xFF));
    };

    std::string file;
    const std::string name = "z.bin";
    put32(file, 0x04034b50);
    put16(file, 20);
    put16(file, 0);
    put16(file, 8); // deflate
    put16(file, 0);
    put16(file, 0x21);
    put32(file, crc);
    put32(file, csize);
    put32(file, content.size());
    put16(file, name.size());
    put16(file, 0);
    file += name;
    file.append(reinterpret_cast<const char*>(deflated.data()), csize);

    const std::size_t cd_offset = file.size();
    put32(file, 0x02014b50);
    put16(file, 20);
    put16(file, 20);
    put16(file, 0);
    put16(file, 8);
    put16(file, 0);
    put16(file, 0x21);
    put32(file, crc);
    put32(file, csize);
    put32(file, content.size());
    put16(file, name.size());
    put16(file, 0);
    put16(file, 0);
    put16(file, 0);
    put16(file, 0);
    put32(file, 0);
    put32(file, 0);
    file += name;
    const std::size_t cd_size = file.size() - cd_offset;
    put32(file, 0x06054b50);
    put16(file, 0);
    put16(file, 0);
    put16(file, 1);
    put16(file, 1);
    put32(file, cd_size);
    put32(file, cd_offset);
    put16(file, 0);

    const auto path = temp_dir() / "deflate.zip";
    std::ofstream(path, std::ios::binary) << file;

    zipio::ZipReader reader(path);
    const auto data = reader.read("z.bin");
    CHECK(std::string(reinterpret_cast<const char*>(data.data()), data.size()) == content);
}

TEST_CASE("npz archive tensor entries") {
    const auto path = temp_dir() / "archive.npz";
    const float values[4] = {0.5f, 1.5f, 2.5f, 3.5f};
    {
        NpzWriter writer(path);
        writer.add_tensor("img/x", Tensor::from_f32({2, 2}, values));
        writer.add_text("manifest.json", "{}");
        writer.finish();
    }
    NpzReader reader(path);
    CHECK(reader.has_tensor("img/x"));
    CHECK(reader.tensor_keys() == std::vector<std::string>{"img/x"});
    const Tensor back = reader.tensor("img/x");
    CHECK(back.f32()[3] == 3.5f);
    CHECK(reader.text("manifest.json") == "{}");
}

TEST_CASE("rng streams are deterministic and splittable") {
    RngStream a(99), b(99);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(99);
    RngStream d(100);
    bool differs = false;
    for (int i = 0; i < 16; ++i) differs |= (c.next_u64() != d.next_u64());
    CHECK(differs);

    CHECK(derive_seed(7, 0) != derive_seed(7, 1));
    CHECK(derive_seed(7, 0) == derive_seed(7, 0));
}

TEST_CASE("choose_channel_indices selects a full permutation when keep == total") {
    RngStream rng(42);
    const auto indices = choose_channel_indices(rng, 5, 5);
    REQUIRE(indices.size() == 5);
    std::vector<bool> seen(5, false);
    for (const std::size_t index : indices) {
        REQUIRE(index < 5);
        CHECK_FALSE(seen[index]);
        seen[index] = true;
    }
}

TEST_CASE("choose_channel_indices edge cases") {
    RngStream rng(42);
    CHECK(choose_channel_indices(rng, 100, 0).empty());
    CHECK_THROWS_AS(choose_channel_indices(rng, 3, 4), ArgumentError);

    RngStream first(7), second(7);
    CHECK(choose_channel_indices(first, 112, 100) ==
          choose_channel_indices(second, 112, 100));
}

TEST_CASE("choose_channel_indices sampling frequencies match d/D") {
    // Frequency-count oracle: over many draws each index should appear with
    // probability d/D, within 5 sigma of the binomial deviation.
    const std::size_t total = 10, keep = 3, draws = 10000;
    std::vector<std::size_t> counts(total, 0);
    RngStream rng(1234);
    for (std::size_t t = 0; t < draws; ++t) {
        for (const std::size_t index : choose_channel_indices(rng, total, keep))
            ++counts[index];
    }
    const double p = static_cast<double>(keep) / static_cast<double>(total);
    const double expected = draws * p;
    const double sigma = std::sqrt(draws * p * (1.0 - p));
    for (const std::size_t count : counts)
        CHECK(std::abs(static_cast<double>(count) - expected) <= 5.0 * sigma);
}
