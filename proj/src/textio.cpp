#include "tiervc/textio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include "tiervc/error.hpp"

namespace tiervc {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), ErrorKind::io, "cannot open '" + path + "'");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    check(!in.bad(), ErrorKind::io, "read of '" + path + "' failed");
    return content;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    check(out.good(), ErrorKind::io, "write to '" + path + "' failed");
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            if (pos < text.size()) lines.push_back(text.substr(pos));
            break;
        }
        std::string line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
        pos = nl + 1;
    }
    return lines;
}

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t d = s.find(delim, pos);
        if (d == std::string::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, d - pos));
        pos = d + 1;
    }
}

double parse_double(const std::string& token, const std::string& where) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    check(ec == std::errc() && ptr == token.data() + token.size(), ErrorKind::io,
          where + ": '" + token + "' is not a number");
    return v;
}

long parse_long(const std::string& token, const std::string& where) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    check(ec == std::errc() && ptr == token.data() + token.size(), ErrorKind::io,
          where + ": '" + token + "' is not an integer");
    return v;
}

std::string format_double(double v) {
    char buf[64];
    // %.17g is enough to round-trip any double exactly.
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace tiervc
