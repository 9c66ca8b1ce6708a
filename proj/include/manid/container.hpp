#pragma once

// Checkpoint container: a versioned text header of key=value pairs followed
// by little-endian float64 blocks in declaration order.
//
//   MANID-CONTAINER 1
//   kind=<type tag>
//   <key>=<value>            (any number, insertion order preserved)
//   blocks=<count>
//   block=<name> <length>    (one per block)
//   end_header
//   <raw little-endian doubles of every block, concatenated>
//
// Composite objects nest children under dotted key prefixes.

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace manid {

class Container {
public:
    struct Block {
        std::string name;
        std::vector<double> values;
        bool operator==(const Block&) const = default;
    };

    static constexpr int kVersion = 1;

    Container() = default;
    explicit Container(std::string kind) : kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, long long value);
    void set(const std::string& key, std::size_t value) { set(key, static_cast<long long>(value)); }
    void set(const std::string& key, int value) { set(key, static_cast<long long>(value)); }
    void set(const std::string& key, bool value) { set(key, std::string(value ? "1" : "0")); }

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    void add_block(const std::string& name, std::vector<double> values);
    bool has_block(const std::string& name) const;
    const std::vector<double>& block(const std::string& name) const;

    /// Copies every key and block of `child` under "prefix." and records its kind.
    void embed(const std::string& prefix, const Container& child);
    /// Inverse of embed.
    Container extract(const std::string& prefix) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    std::string to_bytes() const;
    static Container from_bytes(const std::string& bytes);
    void write(const std::filesystem::path& path) const;
    static Container read(const std::filesystem::path& path);

    bool operator==(const Container&) const = default;

private:
    std::string kind_;
    std::vector<std::pair<std::string, std::string>> entries_;
    std::vector<Block> blocks_;
};

/// Shortest decimal text that parses back to exactly `v`.
std::string format_exact(double v);

/// Little-endian float64 encoding helpers shared by the file formats.
void append_le_doubles(std::string& out, const std::vector<double>& values);
std::vector<double> read_le_doubles(const std::string& bytes, std::size_t offset, std::size_t count);

}  // namespace manid
