#pragma once

// CSV series, content digests and run manifests.

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pqdyn/dynamics.hpp"
#include "pqdyn/error.hpp"
#include "pqdyn/json_util.hpp"

namespace pqdyn::artifacts {

namespace fs = std::filesystem;
using json_util::Json;

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::string sha256_hex(std::string_view data) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
        throw Error(ErrorKind::Io, "sha256: digest computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

[[nodiscard]] inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, std::string_view content) {
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + p.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "write failed for '" + p.string() + "'");
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180, '.' decimal, shortest round-trip doubles)
// ---------------------------------------------------------------------------

inline void append_number(std::string& out, double v) {
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    out.append(buf.data(), r.ptr);
}

inline void append_field(std::string& out, std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) {
        out.append(s);
        return;
    }
    out.push_back('"');
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
}

class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) text_.push_back(',');
            append_field(text_, header[i]);
        }
        text_ += "\r\n";
    }

    CsvWriter& number(double v) {
        sep();
        append_number(text_, v);
        return *this;
    }
    CsvWriter& integer(long long v) {
        sep();
        text_ += std::to_string(v);
        return *this;
    }
    CsvWriter& text(std::string_view s) {
        sep();
        append_field(text_, s);
        return *this;
    }
    CsvWriter& empty() {
        sep();
        return *this;
    }
    void end_row() {
        if (cell_ != columns_)
            throw Error(ErrorKind::InvalidArgument, "csv row has " + std::to_string(cell_) + " cells, header has " +
                                                        std::to_string(columns_));
        text_ += "\r\n";
        cell_ = 0;
    }
    [[nodiscard]] const std::string& str() const { return text_; }

private:
    void sep() {
        if (cell_++) text_.push_back(',');
    }
    std::size_t columns_;
    std::size_t cell_ = 0;
    std::string text_;
};

/// Minimal RFC 4180 reader (quoted fields, CRLF or LF line ends).
[[nodiscard]] inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) throw Error(ErrorKind::Integrity, "csv: unterminated quoted field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

[[nodiscard]] inline double parse_double(const std::string& s, const std::string& what) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw Error(ErrorKind::Integrity, what + ": not a number: '" + s + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Series
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::vector<std::string> trajectory_header(Eigen::Index d) {
    std::vector<std::string> h{"t"};
    for (const char* p : {"x_", "v_", "eps_"})
        for (Eigen::Index i = 1; i <= d; ++i) h.push_back(p + std::to_string(i));
    h.emplace_back("flags");
    return h;
}

/// t, x_1..x_D, v_1..v_D, eps_1..eps_D, flags.
[[nodiscard]] inline std::string trajectory_csv(const Trajectory& tr) {
    const auto d = tr.dim();
    CsvWriter w(trajectory_header(d));
    for (std::size_t k = 0; k < tr.size(); ++k) {
        w.number(tr.times[k]);
        for (Eigen::Index i = 0; i < d; ++i) w.number(tr.states[k].x[i]);
        for (Eigen::Index i = 0; i < d; ++i) w.number(tr.states[k].v[i]);
        for (Eigen::Index i = 0; i < d; ++i) w.number(tr.noise_draws[k][i]);
        w.integer(tr.flags[k]);
        w.end_row();
    }
    return w.str();
}

[[nodiscard]] inline Trajectory trajectory_from_csv(std::string_view text, double dt) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw Error(ErrorKind::Integrity, "trajectory csv: empty file");
    const auto& h = rows.front();
    if (h.size() < 5 || (h.size() - 2) % 3 != 0 || h.front() != "t" || h.back() != "flags")
        throw Error(ErrorKind::Integrity, "trajectory csv: unexpected header");
    const auto d = static_cast<Eigen::Index>((h.size() - 2) / 3);
    if (h != trajectory_header(d)) throw Error(ErrorKind::Integrity, "trajectory csv: unexpected header");
    Trajectory tr;
    tr.dt = dt;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto where = "trajectory csv row " + std::to_string(r);
        if (row.size() != h.size()) throw Error(ErrorKind::Integrity, where + ": wrong number of fields");
        PhaseState st{Vector(d), Vector(d)};
        Vector eps(d);
        std::size_t c = 0;
        tr.times.push_back(parse_double(row[c++], where));
        for (Eigen::Index i = 0; i < d; ++i) st.x[i] = parse_double(row[c++], where);
        for (Eigen::Index i = 0; i < d; ++i) st.v[i] = parse_double(row[c++], where);
        for (Eigen::Index i = 0; i < d; ++i) eps[i] = parse_double(row[c++], where);
        tr.states.push_back(std::move(st));
        tr.noise_draws.push_back(std::move(eps));
        tr.flags.push_back(static_cast<std::uint8_t>(parse_double(row[c], where) != 0.0));
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

[[nodiscard]] inline std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Write `content` under `dir` and return its inventory entry.
inline Json write_artifact(const fs::path& dir, const std::string& name, std::string_view content,
                           const std::string& role) {
    write_file(dir / name, content);
    return {{"name", name}, {"role", role}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}};
}

inline void write_manifest(const fs::path& dir, const Json& manifest) {
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// Read manifest.json and check every declared file against its digest.
[[nodiscard]] inline Json load_verified_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    if (!fs::exists(path)) throw Error(ErrorKind::Integrity, "missing manifest: '" + path.string() + "'");
    Json m;
    try {
        m = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::Integrity, "corrupt manifest: " + std::string(e.what()));
    }
    if (!m.is_object() || !m.contains("files") || !m["files"].is_array())
        throw Error(ErrorKind::Integrity, "corrupt manifest: no file inventory");
    for (const auto& f : m["files"]) {
        if (!f.contains("name") || !f.contains("sha256") || !f["name"].is_string() || !f["sha256"].is_string())
            throw Error(ErrorKind::Integrity, "corrupt manifest: bad file entry");
        const auto name = f["name"].get<std::string>();
        const auto p = dir / name;
        if (!fs::exists(p)) throw Error(ErrorKind::Integrity, "missing artifact '" + name + "'");
        const auto digest = sha256_hex(read_file(p));
        if (digest != f["sha256"].get<std::string>())
            throw Error(ErrorKind::Integrity, "digest mismatch for '" + name + "'");
    }
    return m;
}

}  // namespace pqdyn::artifacts
