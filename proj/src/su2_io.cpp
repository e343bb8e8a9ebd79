#include "cfdgcn/mesh.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <sstream>

namespace cfdgcn {
namespace {

constexpr int kLineType = 3;
constexpr int kTriangleType = 5;
constexpr int kQuadType = 9;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    /// Next non-blank, non-comment line; nullopt at end of input.
    std::optional<std::string> next() {
        std::string raw;
        while (std::getline(in_, raw)) {
            ++line_;
            auto t = trim(raw);
            if (t.empty() || t[0] == '%') continue;
            return t;
        }
        return std::nullopt;
    }
    std::size_t line() const { return line_; }

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

struct Keyword {
    std::string key;
    std::string value;
};

std::optional<Keyword> as_keyword(const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) return std::nullopt;
    return Keyword{trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
}

long parse_int(const std::string& tok, std::size_t line, const char* what) {
    long v = 0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(line, std::string("expected integer ") + what + ", got '" + tok + "'");
    }
    return v;
}

double parse_double(const std::string& tok, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, "expected a coordinate, got '" + tok + "'");
    }
}

long count_value(const Keyword& kw, std::size_t line) {
    const auto toks = split_ws(kw.value);
    if (toks.empty()) throw ParseError(line, kw.key + " has no value");
    const long n = parse_int(toks[0], line, kw.key.c_str());
    if (n < 0) throw ParseError(line, kw.key + " must be non-negative");
    return n;
}

/// Reads the body line of a counted section; throws if the section ends early.
std::string section_line(LineReader& r, const std::string& section, long expected, long found) {
    auto l = r.next();
    if (!l || as_keyword(*l)) {
        throw ParseError(r.line(), section + " section: expected " + std::to_string(expected) +
                                       " entries but found " + std::to_string(found));
    }
    return *l;
}

}  // namespace

Mesh parse_su2(std::istream& in) {
    LineReader r(in);
    Mesh mesh;
    bool have_ndime = false;
    bool have_nelem = false;
    bool have_npoin = false;
    // Index validation is deferred until NPOIN is known; keep line numbers for reporting.
    std::vector<std::size_t> element_lines;
    std::vector<std::vector<std::size_t>> segment_lines;

    while (auto line = r.next()) {
        const auto kw = as_keyword(*line);
        if (!kw) throw ParseError(r.line(), "unexpected line outside any section: '" + *line + "'");

        if (kw->key == "NDIME") {
            const long d = count_value(*kw, r.line());
            if (d != 2) throw ParseError(r.line(), "only NDIME= 2 is supported, got " + kw->value);
            have_ndime = true;
        } else if (kw->key == "NELEM") {
            const long m = count_value(*kw, r.line());
            have_nelem = true;
            mesh.elements.reserve(static_cast<std::size_t>(m));
            for (long i = 0; i < m; ++i) {
                const auto body = section_line(r, "NELEM", m, i);
                const auto toks = split_ws(body);
                const long type = parse_int(toks[0], r.line(), "element type");
                std::size_t nv = 0;
                if (type == kTriangleType) {
                    nv = 3;
                } else if (type == kQuadType) {
                    nv = 4;
                } else {
                    throw ParseError(r.line(), "unknown element type code " + toks[0]);
                }
                if (toks.size() != nv + 1 && toks.size() != nv + 2) {
                    throw ParseError(r.line(), "element type " + toks[0] + " expects " +
                                                   std::to_string(nv) + " vertex indices");
                }
                Element el;
                el.size = static_cast<int>(nv);
                for (std::size_t k = 0; k < nv; ++k) {
                    el.v[k] = static_cast<int>(parse_int(toks[k + 1], r.line(), "vertex index"));
                }
                mesh.elements.push_back(el);
                element_lines.push_back(r.line());
            }
        } else if (kw->key == "NPOIN") {
            const long n = count_value(*kw, r.line());
            have_npoin = true;
            mesh.nodes.reserve(static_cast<std::size_t>(n));
            for (long i = 0; i < n; ++i) {
                const auto toks = split_ws(section_line(r, "NPOIN", n, i));
                if (toks.size() != 2 && toks.size() != 3) {
                    throw ParseError(r.line(), "point line expects 'x y [index]'");
                }
                mesh.nodes.push_back({parse_double(toks[0], r.line()), parse_double(toks[1], r.line())});
            }
        } else if (kw->key == "NMARK") {
            const long nm = count_value(*kw, r.line());
            for (long i = 0; i < nm; ++i) {
                auto tag_line = r.next();
                const auto tag_kw = tag_line ? as_keyword(*tag_line) : std::nullopt;
                if (!tag_kw || tag_kw->key != "MARKER_TAG") {
                    throw ParseError(r.line(), "NMARK section: expected MARKER_TAG for marker " +
                                                   std::to_string(i));
                }
                auto elems_line = r.next();
                const auto elems_kw = elems_line ? as_keyword(*elems_line) : std::nullopt;
                if (!elems_kw || elems_kw->key != "MARKER_ELEMS") {
                    throw ParseError(r.line(), "marker '" + tag_kw->value + "': expected MARKER_ELEMS");
                }
                const long ns = count_value(*elems_kw, r.line());
                Marker marker{tag_kw->value, {}};
                std::vector<std::size_t> lines;
                for (long s = 0; s < ns; ++s) {
                    const auto toks =
                        split_ws(section_line(r, "MARKER_ELEMS of '" + marker.tag + "'", ns, s));
                    if (parse_int(toks[0], r.line(), "marker element type") != kLineType) {
                        throw ParseError(r.line(), "unknown marker element type code " + toks[0]);
                    }
                    if (toks.size() != 3) throw ParseError(r.line(), "line element expects 2 indices");
                    marker.segments.push_back(
                        {static_cast<int>(parse_int(toks[1], r.line(), "vertex index")),
                         static_cast<int>(parse_int(toks[2], r.line(), "vertex index"))});
                    lines.push_back(r.line());
                }
                mesh.markers.push_back(std::move(marker));
                segment_lines.push_back(std::move(lines));
            }
        }
        // Other keywords (NZONE, IZONE, ...) carry no data needed here.
    }

    const std::size_t end_line = r.line();
    if (!have_ndime) throw ParseError(end_line, "missing required section NDIME");
    if (!have_nelem) throw ParseError(end_line, "missing required section NELEM");
    if (!have_npoin) throw ParseError(end_line, "missing required section NPOIN");

    const auto n = static_cast<int>(mesh.nodes.size());
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        for (int v : mesh.elements[e].vertices()) {
            if (v < 0 || v >= n) {
                throw ParseError(element_lines[e], "node index " + std::to_string(v) +
                                                       " out of range [0, " + std::to_string(n) + ")");
            }
        }
    }
    for (std::size_t m = 0; m < mesh.markers.size(); ++m) {
        for (std::size_t s = 0; s < mesh.markers[m].segments.size(); ++s) {
            for (int v : mesh.markers[m].segments[s]) {
                if (v < 0 || v >= n) {
                    throw ParseError(segment_lines[m][s], "node index " + std::to_string(v) +
                                                              " out of range [0, " +
                                                              std::to_string(n) + ")");
                }
            }
        }
    }
    return mesh;
}

Mesh parse_su2_string(const std::string& text) {
    std::istringstream in(text);
    return parse_su2(in);
}

Mesh read_su2_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeshError("cannot open mesh file: " + path);
    try {
        return parse_su2(in);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path + ": " + e.detail());
    }
}

void write_su2(std::ostream& out, const Mesh& mesh) {
    const auto old_precision = out.precision();
    out << std::setprecision(17);
    out << "NDIME= 2\n";
    out << "NELEM= " << mesh.elements.size() << '\n';
    for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
        const auto& el = mesh.elements[e];
        out << (el.size == 3 ? kTriangleType : kQuadType);
        for (int v : el.vertices()) out << ' ' << v;
        out << ' ' << e << '\n';
    }
    out << "NPOIN= " << mesh.nodes.size() << '\n';
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        out << mesh.nodes[i].x << ' ' << mesh.nodes[i].y << ' ' << i << '\n';
    }
    out << "NMARK= " << mesh.markers.size() << '\n';
    for (const auto& m : mesh.markers) {
        out << "MARKER_TAG= " << m.tag << '\n';
        out << "MARKER_ELEMS= " << m.segments.size() << '\n';
        for (const auto& s : m.segments) out << kLineType << ' ' << s[0] << ' ' << s[1] << '\n';
    }
    out.precision(old_precision);
}

std::string write_su2_string(const Mesh& mesh) {
    std::ostringstream out;
    write_su2(out, mesh);
    return out.str();
}

void write_su2_file(const std::string& path, const Mesh& mesh) {
    std::ofstream out(path);
    if (!out) throw MeshError("cannot write mesh file: " + path);
    write_su2(out, mesh);
    if (!out) throw MeshError("write failed: " + path);
}

}  // namespace cfdgcn
