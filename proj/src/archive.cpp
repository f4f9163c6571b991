#include "tasklens/archive.hpp"

#include <algorithm>
#include <array>
#include <cstring>

#include <fmt/format.h>
#include <zlib.h>

#include "tasklens/error.hpp"

namespace tasklens::archive {

namespace {

constexpr std::size_t kBlock = 512;
constexpr std::size_t kMaxInflated = std::size_t{1} << 30;

[[noreturn]] void corrupt(const std::string& why) {
    throw Error(ErrorCode::ValidationError, "corrupt package archive: " + why, nlohmann::json{{"archive", why}});
}

std::string gunzip(std::string_view bytes) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) corrupt("inflateInit2 failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    std::array<char, 1 << 16> buf{};
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(buf.data());
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            corrupt(zs.msg ? zs.msg : "inflate error");
        }
        out.append(buf.data(), buf.size() - zs.avail_out);
        if (out.size() > kMaxInflated) {
            inflateEnd(&zs);
            throw Error(ErrorCode::TooLarge, "package expands beyond 1 GiB");
        }
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            corrupt("truncated gzip stream");
        }
    }
    inflateEnd(&zs);
    return out;
}

std::string gzip(std::string_view bytes) {
    z_stream zs{};
    if (deflateInit2(&zs, 9, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw Error(ErrorCode::Io, "deflateInit2 failed");
    }
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    zs.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    std::array<char, 1 << 16> buf{};
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(buf.data());
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = deflate(&zs, Z_FINISH);
        if (rc == Z_STREAM_ERROR) {
            deflateEnd(&zs);
            throw Error(ErrorCode::Io, "deflate failed");
        }
        out.append(buf.data(), buf.size() - zs.avail_out);
    }
    deflateEnd(&zs);
    return out;
}

std::uint64_t parse_octal(const char* p, std::size_t n) {
    std::uint64_t v = 0;
    std::size_t i = 0;
    while (i < n && (p[i] == ' ' || p[i] == '\0')) ++i;
    for (; i < n && p[i] >= '0' && p[i] <= '7'; ++i) v = v * 8 + static_cast<std::uint64_t>(p[i] - '0');
    return v;
}

std::string field_string(const char* p, std::size_t n) {
    return std::string(p, strnlen(p, n));
}

std::string clean_name(std::string name) {
    while (name.starts_with("./")) name.erase(0, 2);
    return name;
}

void put_octal(char* dst, std::size_t width, std::uint64_t value) {
    auto s = fmt::format("{:0{}o}", value, width - 1);
    std::memcpy(dst, s.data(), width - 1);
    dst[width - 1] = '\0';
}

}  // namespace

bool looks_like_gzip(std::string_view bytes) {
    return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
           static_cast<unsigned char>(bytes[1]) == 0x8b;
}

Members read_tgz(std::string_view bytes) {
    if (!looks_like_gzip(bytes)) corrupt("not a gzip stream");
    const std::string tar = gunzip(bytes);
    Members out;
    std::size_t pos = 0;
    std::string long_name;
    while (pos + kBlock <= tar.size()) {
        const char* h = tar.data() + pos;
        if (std::all_of(h, h + kBlock, [](char c) { return c == '\0'; })) break;

        std::uint64_t stored = parse_octal(h + 148, 8);
        std::uint64_t sum = 0;
        for (std::size_t i = 0; i < kBlock; ++i) {
            sum += (i >= 148 && i < 156) ? static_cast<unsigned char>(' ') : static_cast<unsigned char>(h[i]);
        }
        if (sum != stored) corrupt("bad tar header checksum");

        const std::uint64_t size = parse_octal(h + 124, 12);
        const char type = h[156];
        std::string name = field_string(h, 100);
        if (std::memcmp(h + 257, "ustar", 5) == 0) {
            auto prefix = field_string(h + 345, 155);
            if (!prefix.empty()) name = prefix + "/" + name;
        }
        pos += kBlock;
        if (pos + size > tar.size()) corrupt("member data truncated");
        std::string data = tar.substr(pos, size);
        pos += (size + kBlock - 1) / kBlock * kBlock;

        if (type == 'L') {
            long_name = field_string(data.data(), data.size());
            continue;
        }
        if (type == 'x') {
            // pax extended header: "len key=value\n" records; only path matters here.
            std::size_t p = 0;
            while (p < data.size()) {
                auto sp = data.find(' ', p);
                if (sp == std::string::npos) break;
                auto len = std::stoul(data.substr(p, sp - p));
                auto rec = data.substr(sp + 1, len - (sp - p) - 2);
                if (rec.starts_with("path=")) long_name = rec.substr(5);
                p += len;
            }
            continue;
        }
        if (!long_name.empty()) {
            name = std::move(long_name);
            long_name.clear();
        }
        if (type != '0' && type != '\0') continue;
        name = clean_name(std::move(name));
        if (name.empty()) continue;
        out[name] = std::move(data);
    }
    return out;
}

std::string write_tgz(const Members& members) {
    std::string tar;
    for (const auto& [name, data] : members) {
        std::array<char, kBlock> h{};
        std::string base = name;
        std::string prefix;
        if (base.size() > 99) {
            auto split = base.rfind('/', 154);
            if (split == std::string::npos || base.size() - split - 1 > 99) {
                throw Error(ErrorCode::Io, "member path too long for ustar: " + name);
            }
            prefix = base.substr(0, split);
            base = base.substr(split + 1);
        }
        std::memcpy(h.data(), base.data(), base.size());
        put_octal(h.data() + 100, 8, 0644);
        put_octal(h.data() + 108, 8, 0);
        put_octal(h.data() + 116, 8, 0);
        put_octal(h.data() + 124, 12, data.size());
        put_octal(h.data() + 136, 12, 0);
        h[156] = '0';
        std::memcpy(h.data() + 257, "ustar", 6);
        std::memcpy(h.data() + 263, "00", 2);
        std::memcpy(h.data() + 345, prefix.data(), prefix.size());
        std::memset(h.data() + 148, ' ', 8);
        std::uint64_t sum = 0;
        for (char c : h) sum += static_cast<unsigned char>(c);
        put_octal(h.data() + 148, 7, sum);
        h[155] = ' ';
        tar.append(h.data(), h.size());
        tar.append(data);
        tar.append((kBlock - data.size() % kBlock) % kBlock, '\0');
    }
    tar.append(2 * kBlock, '\0');
    return gzip(tar);
}

}  // namespace tasklens::archive
