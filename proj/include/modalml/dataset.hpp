#pragma once

// Regression databases built from sweep results.
//
// Pole DBs hold one row per operating point (features | M pole coordinates).
// The full participation DB stacks the N x M participation matrix of every
// operating point, simulation-major then state-minor, so row i*N + n belongs to
// operating point i and state n. Method I / Method II views and single-output
// slices are reorganizations of those tables.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modalml/eigen.hpp"
#include "modalml/error.hpp"
#include "modalml/matrix.hpp"
#include "modalml/rng.hpp"
#include "modalml/sysmodel.hpp"

namespace modalml::dataset {

enum class Layout { poles_re, poles_im, pf_full, pf_method1, pf_method2, so_slice };

struct RegressionDB {
    Layout layout = Layout::poles_re;
    /// 1-based state number (Method I) or mode number (Method II, SO slice).
    std::size_t index = 0;
    /// For SO slices: which pole DB the column came from.
    Layout source = Layout::poles_re;
    RMatrix x, y;
    std::vector<std::string> feature_names, output_names;
    std::string config_name, grid_hash;
    /// PF_FULL only: number of states stacked per operating point.
    std::size_t n_states = 0;

    std::size_t rows() const noexcept { return x.rows(); }

    friend bool operator==(const RegressionDB&, const RegressionDB&) = default;
};

inline std::string layout_name(Layout l) {
    switch (l) {
        case Layout::poles_re: return "POLES_RE";
        case Layout::poles_im: return "POLES_IM";
        case Layout::pf_full: return "PF_FULL";
        case Layout::pf_method1: return "PF_METHOD1";
        case Layout::pf_method2: return "PF_METHOD2";
        case Layout::so_slice: return "SO_SLICE";
    }
    return "?";
}

inline Layout layout_from_name(const std::string& s) {
    for (auto l : {Layout::poles_re, Layout::poles_im, Layout::pf_full, Layout::pf_method1, Layout::pf_method2,
                   Layout::so_slice})
        if (layout_name(l) == s) return l;
    throw FormatError("unknown DB layout '" + s + "'");
}

/// File stem following {config}_{layout}.
inline std::string file_stem(const RegressionDB& db) {
    std::string tag = layout_name(db.layout);
    std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    if (db.layout == Layout::pf_method1 || db.layout == Layout::pf_method2) tag += "_" + std::to_string(db.index);
    if (db.layout == Layout::so_slice)
        tag += std::string(db.source == Layout::poles_re ? "_re_" : "_im_") + std::to_string(db.index);
    return db.config_name + "_" + tag;
}

/// Checks the shape identities every layout must satisfy.
inline void validate(const RegressionDB& db) {
    detail::require_dims(db.x.rows() == db.y.rows(), "RegressionDB: x and y row counts differ");
    detail::require_dims(db.feature_names.size() == db.x.cols(), "RegressionDB: feature name count mismatch");
    detail::require_dims(db.output_names.size() == db.y.cols(), "RegressionDB: output name count mismatch");
    if (db.layout == Layout::pf_full) {
        detail::require_dims(db.n_states > 0 && db.rows() % db.n_states == 0,
                             "RegressionDB: PF_FULL rows must be a multiple of the state count");
        detail::require_dims(db.y.cols() == db.n_states, "RegressionDB: PF_FULL must have M = N output columns");
    }
    if (db.layout == Layout::so_slice) detail::require_dims(db.y.cols() == 1, "RegressionDB: SO slice has one output");
}

inline std::vector<std::string> pole_names(const std::string& part, std::size_t m) {
    std::vector<std::string> out;
    for (std::size_t k = 1; k <= m; ++k) out.push_back(part + "(lambda_" + std::to_string(k) + ")");
    return out;
}

struct PoleAndPfDBs {
    RegressionDB re, im, pf_full;
};

/// One operating point and its (already tracked) modal solution.
struct SweepSample {
    sysmodel::FeaturePoint point;
    eigen::ModalSolution solution;
};

/// Builds the pole real/imag DBs and the stacked participation DB, rows in
/// the order of the samples.
inline PoleAndPfDBs assemble(std::span<const SweepSample> samples, const std::string& config_name,
                             const std::string& grid_hash) {
    detail::require(!samples.empty(), "assemble: no samples");
    const std::size_t nf = samples.front().point.values.size();
    const std::size_t m = samples.front().solution.lambdas.size();
    const std::size_t n = samples.front().solution.p.rows();
    const auto& names = samples.front().point.names;

    PoleAndPfDBs out;
    auto init = [&](RegressionDB& db, Layout l, std::size_t rows, std::vector<std::string> outs) {
        db.layout = l;
        db.config_name = config_name;
        db.grid_hash = grid_hash;
        db.feature_names = names;
        db.output_names = std::move(outs);
        db.x = RMatrix(rows, nf);
        db.y = RMatrix(rows, db.output_names.size());
    };
    init(out.re, Layout::poles_re, samples.size(), pole_names("Re", m));
    init(out.im, Layout::poles_im, samples.size(), pole_names("Im", m));
    std::vector<std::string> pf_names;
    for (std::size_t k = 1; k <= m; ++k) pf_names.push_back("PF(lambda_" + std::to_string(k) + ")");
    init(out.pf_full, Layout::pf_full, samples.size() * n, pf_names);
    out.pf_full.n_states = n;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.solution.lambdas.size() != m || s.solution.p.rows() != n || s.solution.p.cols() != m ||
            s.point.values.size() != nf)
            throw DimensionError("assemble: inconsistent mode or feature counts across samples (sample " +
                                 std::to_string(i) + ")");
        for (std::size_t f = 0; f < nf; ++f) out.re.x(i, f) = out.im.x(i, f) = s.point.values[f];
        for (std::size_t k = 0; k < m; ++k) {
            out.re.y(i, k) = s.solution.lambdas[k].real();
            out.im.y(i, k) = s.solution.lambdas[k].imag();
        }
        for (std::size_t st = 0; st < n; ++st) {
            const std::size_t r = i * n + st;
            for (std::size_t f = 0; f < nf; ++f) out.pf_full.x(r, f) = s.point.values[f];
            for (std::size_t k = 0; k < m; ++k) out.pf_full.y(r, k) = s.solution.p(st, k);
        }
    }
    validate(out.re);
    validate(out.im);
    validate(out.pf_full);
    return out;
}

/// Single-output view of a pole DB: the column of mode number m (1-based).
inline RegressionDB to_single_output(const RegressionDB& poles, std::size_t m) {
    detail::require(poles.layout == Layout::poles_re || poles.layout == Layout::poles_im,
                    "to_single_output: source must be a pole DB");
    if (m < 1 || m > poles.y.cols())
        throw DomainError("to_single_output: mode number " + std::to_string(m) + " outside 1.." +
                          std::to_string(poles.y.cols()));
    RegressionDB out;
    out.layout = Layout::so_slice;
    out.source = poles.layout;
    out.index = m;
    out.x = poles.x;
    out.y = RMatrix(poles.rows(), 1);
    for (std::size_t i = 0; i < poles.rows(); ++i) out.y(i, 0) = poles.y(i, m - 1);
    out.feature_names = poles.feature_names;
    out.output_names = {poles.output_names[m - 1]};
    out.config_name = poles.config_name;
    out.grid_hash = poles.grid_hash;
    return out;
}

/// Method I: participation of state n (1-based) in every mode, one row per
/// operating point.
inline RegressionDB pf_method1(const RegressionDB& pf_full, std::size_t n) {
    detail::require(pf_full.layout == Layout::pf_full, "pf_method1: source must be PF_FULL");
    const std::size_t ns = pf_full.n_states;
    if (n < 1 || n > ns)
        throw DomainError("pf_method1: state number " + std::to_string(n) + " outside 1.." + std::to_string(ns));
    const std::size_t rows = pf_full.rows() / ns;
    RegressionDB out;
    out.layout = Layout::pf_method1;
    out.index = n;
    out.x = RMatrix(rows, pf_full.x.cols());
    out.y = RMatrix(rows, pf_full.y.cols());
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t r = i * ns + (n - 1);
        std::copy(pf_full.x.row(r).begin(), pf_full.x.row(r).end(), out.x.row(i).begin());
        std::copy(pf_full.y.row(r).begin(), pf_full.y.row(r).end(), out.y.row(i).begin());
    }
    out.feature_names = pf_full.feature_names;
    for (const auto& name : pf_full.output_names) out.output_names.push_back("PV" + std::to_string(n) + ":" + name);
    out.config_name = pf_full.config_name;
    out.grid_hash = pf_full.grid_hash;
    return out;
}

/// Method II: participation of every state in mode m (1-based); the inputs
/// are the features plus the real and imaginary part of that mode.
inline RegressionDB pf_method2(const RegressionDB& pf_full, const RegressionDB& re, const RegressionDB& im,
                               std::size_t m) {
    detail::require(pf_full.layout == Layout::pf_full && re.layout == Layout::poles_re && im.layout == Layout::poles_im,
                    "pf_method2: expects PF_FULL, POLES_RE and POLES_IM");
    const std::size_t ns = pf_full.n_states;
    const std::size_t rows = pf_full.rows() / ns;
    detail::require_dims(re.rows() == rows && im.rows() == rows, "pf_method2: pole DBs do not match PF_FULL rows");
    if (m < 1 || m > pf_full.y.cols())
        throw DomainError("pf_method2: mode number " + std::to_string(m) + " outside 1.." +
                          std::to_string(pf_full.y.cols()));
    const std::size_t nf = pf_full.x.cols();
    RegressionDB out;
    out.layout = Layout::pf_method2;
    out.index = m;
    out.x = RMatrix(rows, nf + 2);
    out.y = RMatrix(rows, ns);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t f = 0; f < nf; ++f) out.x(i, f) = pf_full.x(i * ns, f);
        out.x(i, nf) = re.y(i, m - 1);
        out.x(i, nf + 1) = im.y(i, m - 1);
        for (std::size_t st = 0; st < ns; ++st) out.y(i, st) = pf_full.y(i * ns + st, m - 1);
    }
    out.feature_names = pf_full.feature_names;
    out.feature_names.push_back(re.output_names[m - 1]);
    out.feature_names.push_back(im.output_names[m - 1]);
    for (std::size_t st = 1; st <= ns; ++st)
        out.output_names.push_back("PV" + std::to_string(st) + ":" + pf_full.output_names[m - 1]);
    out.config_name = pf_full.config_name;
    out.grid_hash = pf_full.grid_hash;
    return out;
}

inline RegressionDB select_rows(const RegressionDB& db, std::span<const std::size_t> rows) {
    RegressionDB out = db;
    out.x = RMatrix(rows.size(), db.x.cols());
    out.y = RMatrix(rows.size(), db.y.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        std::copy(db.x.row(rows[k]).begin(), db.x.row(rows[k]).end(), out.x.row(k).begin());
        std::copy(db.y.row(rows[k]).begin(), db.y.row(rows[k]).end(), out.y.row(k).begin());
    }
    return out;
}

/// Seeded shuffle of row indices split into (train, validate).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n_rows, double fraction,
                                                                                   std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("split: fraction must lie strictly between 0 and 1");
    if (n_rows < 2) throw DomainError("split: at least two rows are required");
    std::vector<std::size_t> idx(n_rows);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n_rows - 1; i > 0; --i) std::swap(idx[i], idx[rng.below(i + 1)]);
    auto n_train = static_cast<std::size_t>(std::llround(fraction * double(n_rows)));
    n_train = std::clamp<std::size_t>(n_train, 1, n_rows - 1);
    std::vector<std::size_t> train(idx.begin(), idx.begin() + std::ptrdiff_t(n_train));
    std::vector<std::size_t> valid(idx.begin() + std::ptrdiff_t(n_train), idx.end());
    std::sort(train.begin(), train.end());
    std::sort(valid.begin(), valid.end());
    return {std::move(train), std::move(valid)};
}

inline std::pair<RegressionDB, RegressionDB> split_train_validate(const RegressionDB& db, double fraction = 0.8,
                                                                  std::uint64_t seed = 0) {
    const auto [train, valid] = split_indices(db.rows(), fraction, seed);
    return {select_rows(db, train), select_rows(db, valid)};
}

// ---------------------------------------------------------------------------
// Persistence: CSV payload + JSON manifest

/// Shortest decimal representation that parses back to the same double.
inline void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

inline std::string format_double(double v) {
    std::string s;
    append_double(s, v);
    return s;
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw FormatError("malformed number '" + std::string(s) + "'");
    return v;
}

inline nlohmann::json manifest(const RegressionDB& db, const std::string& csv_name) {
    nlohmann::json j = {{"schema_version", 1},
                        {"layout", layout_name(db.layout)},
                        {"index", db.index},
                        {"config", db.config_name},
                        {"grid_hash", db.grid_hash},
                        {"n_rows", db.rows()},
                        {"n_features", db.x.cols()},
                        {"n_outputs", db.y.cols()},
                        {"feature_names", db.feature_names},
                        {"output_names", db.output_names},
                        {"csv", csv_name}};
    if (db.layout == Layout::so_slice) j["source"] = layout_name(db.source);
    if (db.layout == Layout::pf_full) j["n_states"] = db.n_states;
    return j;
}

/// Writes {dir}/{stem}.csv and {dir}/{stem}.json; returns the manifest path.
inline std::filesystem::path save(const RegressionDB& db, const std::filesystem::path& dir) {
    validate(db);
    std::filesystem::create_directories(dir);
    const std::string stem = file_stem(db);
    const auto csv_path = dir / (stem + ".csv");
    const auto json_path = dir / (stem + ".json");

    std::string buf;
    buf.reserve(1 << 20);
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw Error("cannot open " + csv_path.string() + " for writing");
    for (std::size_t c = 0; c < db.feature_names.size() + db.output_names.size(); ++c) {
        if (c) buf += ',';
        buf += c < db.feature_names.size() ? db.feature_names[c] : db.output_names[c - db.feature_names.size()];
    }
    buf += '\n';
    for (std::size_t r = 0; r < db.rows(); ++r) {
        for (std::size_t c = 0; c < db.x.cols(); ++c) {
            if (c) buf += ',';
            append_double(buf, db.x(r, c));
        }
        for (std::size_t c = 0; c < db.y.cols(); ++c) {
            buf += ',';
            append_double(buf, db.y(r, c));
        }
        buf += '\n';
        if (buf.size() > (1u << 20)) {
            csv.write(buf.data(), std::streamsize(buf.size()));
            buf.clear();
        }
    }
    csv.write(buf.data(), std::streamsize(buf.size()));
    if (!csv) throw Error("write failed for " + csv_path.string());

    std::ofstream js(json_path);
    js << manifest(db, csv_path.filename().string()).dump(2) << '\n';
    if (!js) throw Error("write failed for " + json_path.string());
    return json_path;
}

/// Loads a DB from its manifest path (the .json written by save()).
inline RegressionDB load(const std::filesystem::path& manifest_path) {
    std::ifstream js(manifest_path);
    if (!js) throw Error("cannot open " + manifest_path.string());
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    RegressionDB db;
    try {
        if (j.at("schema_version").get<int>() != 1) throw FormatError("unsupported DB manifest schema_version");
        db.layout = layout_from_name(j.at("layout").get<std::string>());
        db.index = j.value("index", std::size_t{0});
        if (j.contains("source")) db.source = layout_from_name(j["source"].get<std::string>());
        db.n_states = j.value("n_states", std::size_t{0});
        db.config_name = j.at("config").get<std::string>();
        db.grid_hash = j.at("grid_hash").get<std::string>();
        db.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        db.output_names = j.at("output_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("incomplete manifest " + manifest_path.string() + ": " + e.what());
    }
    const std::size_t n_rows = j.at("n_rows").get<std::size_t>();
    const std::size_t nf = j.at("n_features").get<std::size_t>();
    const std::size_t no = j.at("n_outputs").get<std::size_t>();
    if (db.feature_names.size() != nf || db.output_names.size() != no)
        throw FormatError("manifest column counts disagree with name lists");

    const auto csv_path = manifest_path.parent_path() / j.at("csv").get<std::string>();
    std::ifstream csv(csv_path, std::ios::binary);
    if (!csv) throw Error("cannot open " + csv_path.string());
    std::string content((std::istreambuf_iterator<char>(csv)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto next_line = [&](std::string_view& line) {
        if (pos >= content.size()) return false;
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        line = std::string_view(content).substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = end + 1;
        return true;
    };
    std::string_view line;
    if (!next_line(line)) throw FormatError("empty CSV " + csv_path.string());
    {
        std::vector<std::string> header;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            header.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        std::vector<std::string> expected = db.feature_names;
        expected.insert(expected.end(), db.output_names.begin(), db.output_names.end());
        if (header != expected) throw FormatError("CSV header does not match manifest in " + csv_path.string());
    }
    db.x = RMatrix(n_rows, nf);
    db.y = RMatrix(n_rows, no);
    std::size_t r = 0;
    while (next_line(line)) {
        if (line.empty()) continue;
        if (r >= n_rows) throw FormatError("CSV has more rows than the manifest states");
        std::size_t start = 0, c = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const auto cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
            if (c >= nf + no) throw FormatError("CSV row " + std::to_string(r + 1) + " has too many columns");
            const double v = parse_double(cell);
            if (c < nf)
                db.x(r, c) = v;
            else
                db.y(r, c - nf) = v;
            ++c;
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (c != nf + no) throw FormatError("CSV row " + std::to_string(r + 1) + " has too few columns");
        ++r;
    }
    if (r != n_rows) throw FormatError("CSV has " + std::to_string(r) + " rows, manifest states " + std::to_string(n_rows));
    validate(db);
    return db;
}

} // namespace modalml::dataset
