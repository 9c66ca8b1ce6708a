#include "manid/container.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "manid/errors.hpp"

namespace manid {

namespace {

constexpr const char* kMagic = "MANID-CONTAINER";

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
    return v;
}

void check_key(const std::string& key) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos || key == "kind" ||
        key == "blocks" || key == "block" || key == "end_header")
        throw FormatError("invalid container key '" + key + "'");
}

}  // namespace

std::string format_exact(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void append_le_doubles(std::string& out, const std::vector<double>& values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint64_t le = to_le(std::bit_cast<std::uint64_t>(values[i]));
        std::memcpy(out.data() + start + i * 8, &le, 8);
    }
}

std::vector<double> read_le_doubles(const std::string& bytes, std::size_t offset,
                                    std::size_t count) {
    if (offset + count * 8 > bytes.size()) throw FormatError("truncated float64 block");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t raw = 0;
        std::memcpy(&raw, bytes.data() + offset + i * 8, 8);
        out[i] = std::bit_cast<double>(to_le(raw));
    }
    return out;
}

void Container::set(const std::string& key, const std::string& value) {
    check_key(key);
    if (value.find('\n') != std::string::npos) throw FormatError("container value contains newline");
    for (auto& [k, v] : entries_)
        if (k == key) {
            v = value;
            return;
        }
    entries_.emplace_back(key, value);
}

void Container::set(const std::string& key, double value) { set(key, format_exact(value)); }
void Container::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

bool Container::has(const std::string& key) const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [&](const auto& e) { return e.first == key; });
}

const std::string& Container::get(const std::string& key) const {
    for (const auto& [k, v] : entries_)
        if (k == key) return v;
    throw FormatError("missing container key '" + key + "'");
}

double Container::get_double(const std::string& key) const {
    const std::string& s = get(key);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("key '" + key + "' is not a number: " + s);
    return v;
}

long long Container::get_int(const std::string& key) const {
    const std::string& s = get(key);
    long long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("key '" + key + "' is not an integer: " + s);
    return v;
}

std::size_t Container::get_size(const std::string& key) const {
    const long long v = get_int(key);
    if (v < 0) throw FormatError("key '" + key + "' is negative");
    return static_cast<std::size_t>(v);
}

bool Container::get_bool(const std::string& key) const { return get_int(key) != 0; }

void Container::add_block(const std::string& name, std::vector<double> values) {
    check_key(name);
    if (name.find(' ') != std::string::npos) throw FormatError("block name contains a space");
    if (has_block(name)) throw FormatError("duplicate block '" + name + "'");
    blocks_.push_back({name, std::move(values)});
}

bool Container::has_block(const std::string& name) const {
    return std::any_of(blocks_.begin(), blocks_.end(),
                       [&](const Block& b) { return b.name == name; });
}

const std::vector<double>& Container::block(const std::string& name) const {
    for (const auto& b : blocks_)
        if (b.name == name) return b.values;
    throw FormatError("missing container block '" + name + "'");
}

void Container::embed(const std::string& prefix, const Container& child) {
    set(prefix + ".kind", child.kind());
    for (const auto& [k, v] : child.entries_) set(prefix + "." + k, v);
    for (const auto& b : child.blocks_) add_block(prefix + "." + b.name, b.values);
}

Container Container::extract(const std::string& prefix) const {
    const std::string p = prefix + ".";
    Container out(get(p + "kind"));
    for (const auto& [k, v] : entries_)
        if (k.rfind(p, 0) == 0 && k != p + "kind") out.entries_.emplace_back(k.substr(p.size()), v);
    for (const auto& b : blocks_)
        if (b.name.rfind(p, 0) == 0) out.blocks_.push_back({b.name.substr(p.size()), b.values});
    return out;
}

std::string Container::to_bytes() const {
    std::ostringstream head;
    head << kMagic << ' ' << kVersion << '\n';
    head << "kind=" << kind_ << '\n';
    for (const auto& [k, v] : entries_) head << k << '=' << v << '\n';
    head << "blocks=" << blocks_.size() << '\n';
    for (const auto& b : blocks_) head << "block=" << b.name << ' ' << b.values.size() << '\n';
    head << "end_header\n";
    std::string out = head.str();
    for (const auto& b : blocks_) append_le_doubles(out, b.values);
    return out;
}

Container Container::from_bytes(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw FormatError("container header is truncated");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    const std::string magic = next_line();
    if (magic != std::string(kMagic) + " " + std::to_string(kVersion))
        throw FormatError("not a version-" + std::to_string(kVersion) + " container: '" + magic + "'");
    const std::string kind_line = next_line();
    if (kind_line.rfind("kind=", 0) != 0) throw FormatError("container missing kind");
    Container c(kind_line.substr(5));

    std::vector<std::pair<std::string, std::size_t>> layout;
    std::size_t declared = 0;
    bool saw_blocks = false;
    for (;;) {
        const std::string line = next_line();
        if (line == "end_header") break;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed header line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (saw_blocks && key == "block") {
            const std::size_t sp = value.rfind(' ');
            if (sp == std::string::npos) throw FormatError("malformed block line '" + line + "'");
            layout.emplace_back(value.substr(0, sp), std::stoull(value.substr(sp + 1)));
        } else if (key == "blocks" && !saw_blocks) {
            saw_blocks = true;
            declared = std::stoull(value);
        } else {
            c.entries_.emplace_back(key, value);
        }
    }
    if (layout.size() != declared) throw FormatError("block count does not match declaration");
    for (const auto& [name, count] : layout) {
        c.blocks_.push_back({name, read_le_doubles(bytes, pos, count)});
        pos += count * 8;
    }
    if (pos != bytes.size()) throw FormatError("trailing bytes after container payload");
    return c;
}

void Container::write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path.string() + "' for writing");
    const std::string bytes = to_bytes();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("failed writing '" + path.string() + "'");
}

Container Container::read(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_bytes(ss.str());
}

}  // namespace manid
