#pragma once

#include <patchace/npy.hpp>
#include <patchace/zipfile.hpp>

#include <optional>
#include <string>

namespace patchace {

/// NPZ-style archive writer: tensor entries are NPY members named
/// "<key>.npy", text entries keep their literal name.
class NpzWriter {
public:
    explicit NpzWriter(const std::filesystem::path& path) : zip_(path) {}

    void add_tensor(const std::string& key, const Tensor& t) {
        const std::vector<std::byte> bytes = npy::encode(t);
        zip_.add(key + ".npy", bytes);
    }

    void add_text(const std::string& name, const std::string& text) {
        zip_.add_text(name, text);
    }

    void finish() { zip_.finish(); }

private:
    zipio::ZipWriter zip_;
};

class NpzReader {
public:
    explicit NpzReader(const std::filesystem::path& path) : zip_(path) {}

    bool has_tensor(const std::string& key) const {
        return zip_.contains(key + ".npy") || zip_.contains(key);
    }

    Tensor tensor(const std::string& key) const {
        const std::string name = zip_.contains(key + ".npy") ? key + ".npy" : key;
        return npy::decode(zip_.read(name));
    }

    bool has_text(const std::string& name) const { return zip_.contains(name); }

    std::string text(const std::string& name) const {
        const std::vector<std::byte> bytes = zip_.read(name);
        return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
    }

    /// Tensor keys (member names with the ".npy" suffix stripped).
    std::vector<std::string> tensor_keys() const {
        std::vector<std::string> keys;
        for (const std::string& name : zip_.names()) {
            if (name.size() > 4 && name.ends_with(".npy"))
                keys.push_back(name.substr(0, name.size() - 4));
        }
        return keys;
    }

private:
    zipio::ZipReader zip_;
};

} // namespace patchace
