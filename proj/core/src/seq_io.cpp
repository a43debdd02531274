#include "towerlimits/seq_io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "towerlimits/errors.hpp"

namespace towerlimits {

void write_seq(std::ostream& out, const WeightedSeq& seq) {
    out << "# gamma=" << std::setprecision(17) << seq.gamma() << " d=" << seq.dim()
        << " nmin=" << seq.n_min() << " nmax=" << seq.n_max() << " side=" << to_string(seq.side())
        << '\n';
    for (long n = seq.n_min(); n <= seq.n_max(); ++n) {
        const auto e = seq.at(n);
        for (int r = 0; r < seq.dim(); ++r)
            for (int c = 0; c < seq.dim(); ++c) {
                if (r || c) out << ' ';
                out << std::setprecision(17) << e(r, c);
            }
        out << '\n';
    }
}

namespace {

template <class T>
T parse_number(std::string_view text, int line, int column, const char* what) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw ParseError(std::string("expected ") + what + ", got '" + std::string(text) + "'", line,
                         column);
    return value;
}

}  // namespace

WeightedSeq read_seq(std::istream& in) {
    std::string line;
    int line_no = 0;
    std::map<std::string, std::pair<std::string, int>> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (line.rfind("#", 0) != 0) throw ParseError("missing '# gamma=...' header line", line_no, 1);
        std::size_t pos = 1;
        while (pos < line.size()) {
            while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r'))
                ++pos;
            if (pos >= line.size()) break;
            const std::size_t end = line.find_first_of(" \t\r", pos);
            const std::string tok = line.substr(pos, end == std::string::npos ? end : end - pos);
            const auto eq = tok.find('=');
            if (eq == std::string::npos)
                throw ParseError("header token '" + tok + "' is not key=value", line_no,
                                 static_cast<int>(pos) + 1);
            header[tok.substr(0, eq)] = {tok.substr(eq + 1), static_cast<int>(pos + eq) + 2};
            pos = end == std::string::npos ? line.size() : end;
        }
        break;
    }
    if (header.empty()) throw ParseError("empty sequence file", line_no, 0);
    for (const char* key : {"gamma", "d", "nmin", "nmax", "side"})
        if (!header.count(key))
            throw ParseError(std::string("header is missing '") + key + "'", line_no, 1);
    for (const auto& [key, v] : header)
        if (key != "gamma" && key != "d" && key != "nmin" && key != "nmax" && key != "side")
            throw ParseError("unknown header key '" + key + "'", line_no, v.second);

    const int header_line = line_no;
    const double gamma = parse_number<double>(header["gamma"].first, header_line,
                                              header["gamma"].second, "a real gamma");
    const int d = parse_number<int>(header["d"].first, header_line, header["d"].second, "an integer d");
    const long nmin = parse_number<long>(header["nmin"].first, header_line, header["nmin"].second,
                                         "an integer nmin");
    const long nmax = parse_number<long>(header["nmax"].first, header_line, header["nmax"].second,
                                         "an integer nmax");
    Side side;
    try {
        side = side_from_string(header["side"].first);
    } catch (const InvalidInput& e) {
        throw ParseError(e.what(), header_line, header["side"].second);
    }
    WeightedSeq seq = [&] {
        try {
            return WeightedSeq(nmin, nmax, d, gamma, side);
        } catch (const InvalidInput& e) {
            throw ParseError(e.what(), header_line, 1);
        }
    }();

    long n = nmin;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (line[0] == '#') continue;
        if (n > nmax) throw ParseError("more entry lines than nmax-nmin+1", line_no, 1);
        auto e = seq.at(n);
        std::size_t pos = 0;
        int count = 0;
        while (true) {
            pos = line.find_first_not_of(" \t\r", pos);
            if (pos == std::string::npos) break;
            const std::size_t end = std::min(line.find_first_of(" \t\r", pos), line.size());
            if (count >= d * d) throw ParseError("too many entries on line", line_no, static_cast<int>(pos) + 1);
            const double v = parse_number<double>(std::string_view(line).substr(pos, end - pos), line_no,
                                                  static_cast<int>(pos) + 1, "a real entry");
            e(count / d, count % d) = v;
            ++count;
            pos = end;
        }
        if (count != d * d)
            throw ParseError("expected " + std::to_string(d * d) + " entries, found " +
                                 std::to_string(count),
                             line_no, static_cast<int>(line.size()) + 1);
        ++n;
    }
    if (n != nmax + 1)
        throw ParseError("expected " + std::to_string(nmax - nmin + 1) + " entry lines, found " +
                             std::to_string(n - nmin),
                         line_no + 1, 1);
    return seq;
}

void save_seq(const std::filesystem::path& path, const WeightedSeq& seq) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot open '" + path.string() + "' for writing");
    write_seq(out, seq);
}

WeightedSeq load_seq(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    return read_seq(in);
}

}  // namespace towerlimits
