#include "scroll/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "scroll/error.hpp"

namespace scroll::io {

using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

// ---------------------------------------------------------------------------
// Plumbing
// ---------------------------------------------------------------------------

std::string read_text(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path, 0, "a readable file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::string &path) {
    const std::string s = read_text(path);
    return {s.begin(), s.end()};
}

void write_text(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("failed writing " + path);
}

void write_bytes(const std::string &path, const std::vector<std::uint8_t> &bytes) {
    write_text(path, std::string(bytes.begin(), bytes.end()));
}

std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace {

class Writer {
  public:
    template <class T> void put(T v) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        bytes.insert(bytes.end(), b, b + sizeof(T));
    }
    void magic(const char *m) { bytes.insert(bytes.end(), m, m + 4); }
    void raw(const std::string &s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> bytes;
};

class Reader {
  public:
    Reader(const std::vector<std::uint8_t> &b, std::string name) : b_(b), name_(std::move(name)) {}

    template <class T> T get(const char *what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, b_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void magic(const char *m, std::uint16_t version) {
        need(4, std::string("magic ") + m);
        if (std::memcmp(b_.data(), m, 4) != 0) fail(std::string("magic ") + m);
        pos_ = 4;
        const std::size_t at = pos_;
        const auto v = get<std::uint16_t>("format version");
        if (v != version) throw FormatError(name_, at, "format version " + std::to_string(version) + ", found " +
                                                            std::to_string(v));
    }
    std::string raw(std::size_t n, const char *what) {
        need(n, what);
        std::string s(b_.begin() + static_cast<long>(pos_), b_.begin() + static_cast<long>(pos_ + n));
        pos_ += n;
        return s;
    }
    void need(std::size_t n, const std::string &what) const {
        if (b_.size() - pos_ < n) fail(what);
    }
    [[noreturn]] void fail(const std::string &what) const { throw FormatError(name_, pos_, what); }
    [[noreturn]] void fail_at(std::size_t at, const std::string &what) const { throw FormatError(name_, at, what); }
    void finish() const {
        if (pos_ != b_.size()) fail("end of file");
    }
    std::size_t pos() const { return pos_; }
    const std::string &name() const { return name_; }

  private:
    const std::vector<std::uint8_t> &b_;
    std::string name_;
    std::size_t pos_ = 0;
};

// Splits text into lines, remembering each line's byte offset. Blank lines are skipped.
template <class F> void for_each_line(const std::string &text, const std::string &name, F &&fn) {
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error &e) {
                throw FormatError(name, start + (e.byte > 0 ? e.byte - 1 : 0), "a JSON object");
            }
            fn(j, start);
        }
        start = end + 1;
    }
}

json vec_json(const Vec3 &p) { return json::array({p.x, p.y, p.z}); }

Vec3 json_vec(const json &j, const std::string &name, std::size_t offset, const char *field) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number())
        throw FormatError(name, offset, std::string("field '") + field + "' as [x, y, z] numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

const json &field(const json &j, const char *key, const std::string &name, std::size_t offset) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(name, offset, std::string("field '") + key + "'");
    return j[key];
}

std::int64_t int_field(const json &j, const char *key, const std::string &name, std::size_t offset) {
    const json &v = field(j, key, name, offset);
    if (!v.is_number_integer()) throw FormatError(name, offset, std::string("integer field '") + key + "'");
    return v.get<std::int64_t>();
}

} // namespace

// ---------------------------------------------------------------------------
// Volume
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_volume(const ProbabilityVolume &v) {
    v.validate();
    if (v.channels.size() > 255) throw ConfigError("too many channels for the volume format");
    Writer w;
    w.magic("VOLP");
    w.put<std::uint16_t>(volume_version);
    for (std::size_t d : {v.dims.nx, v.dims.ny, v.dims.nz}) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double s : {v.spacing.x, v.spacing.y, v.spacing.z}) w.put<float>(static_cast<float>(s));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(v.channels.size()));
    for (const auto &c : v.channels)
        for (float x : c) w.put<std::uint8_t>(static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0f, 1.0f) * 255.0f)));
    return w.bytes;
}

ProbabilityVolume decode_volume(const std::vector<std::uint8_t> &bytes, const std::string &name) {
    Reader r(bytes, name);
    r.magic("VOLP", volume_version);
    std::size_t d[3];
    for (auto &x : d) {
        const std::size_t at = r.pos();
        x = r.get<std::uint32_t>("dimension (u32)");
        if (x == 0) r.fail_at(at, "positive dimension");
    }
    float s[3];
    for (auto &x : s) {
        const std::size_t at = r.pos();
        x = r.get<float>("voxel spacing (f32)");
        if (!(x > 0.0f) || !std::isfinite(x)) r.fail_at(at, "positive finite voxel spacing");
    }
    const auto channels = r.get<std::uint8_t>("channel count (u8)");
    ProbabilityVolume v = ProbabilityVolume::zeros({d[0], d[1], d[2]}, {s[0], s[1], s[2]}, channels);
    const std::size_t n = v.dims.count();
    for (auto &c : v.channels) {
        r.need(n, std::to_string(n) + " voxel bytes");
        const std::string raw = r.raw(n, "voxel bytes");
        for (std::size_t i = 0; i < n; ++i) c[i] = static_cast<float>(static_cast<unsigned char>(raw[i])) / 255.0f;
    }
    r.finish();
    return v;
}

void write_volume(const std::string &path, const ProbabilityVolume &v) { write_bytes(path, encode_volume(v)); }
ProbabilityVolume read_volume(const std::string &path) { return decode_volume(read_bytes(path), path); }

// ---------------------------------------------------------------------------
// Observations
// ---------------------------------------------------------------------------

std::string encode_paths(const std::vector<Path> &paths) {
    std::string out;
    for (const Path &p : paths) {
        json pts = json::array();
        for (const Vec3 &q : p.points) pts.push_back(vec_json(q));
        json j;
        j["id"] = p.id;
        j["kind"] = path_kind_name(p.kind);
        j["pts"] = std::move(pts);
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<Path> decode_paths(const std::string &text, const std::string &name) {
    std::vector<Path> out;
    for_each_line(text, name, [&](const json &j, std::size_t at) {
        Path p;
        p.id = int_field(j, "id", name, at);
        const json &kind = field(j, "kind", name, at);
        if (!kind.is_string()) throw FormatError(name, at, "string field 'kind'");
        try {
            p.kind = parse_path_kind(kind.get<std::string>());
        } catch (const ConfigError &) {
            throw FormatError(name, at, "kind 'surface', 'fiber_h' or 'fiber_v'");
        }
        const json &pts = field(j, "pts", name, at);
        if (!pts.is_array() || pts.size() < 2) throw FormatError(name, at, "'pts' with at least 2 points");
        for (const json &q : pts) p.points.push_back(json_vec(q, name, at, "pts"));
        out.push_back(std::move(p));
    });
    return out;
}

std::string encode_normals(const std::vector<NormalSample> &normals) {
    std::string out;
    for (const NormalSample &n : normals) {
        json j;
        j["p"] = vec_json(n.position);
        j["n"] = vec_json(n.normal);
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<NormalSample> decode_normals(const std::string &text, const std::string &name) {
    std::vector<NormalSample> out;
    for_each_line(text, name, [&](const json &j, std::size_t at) {
        NormalSample n{json_vec(field(j, "p", name, at), name, at, "p"), json_vec(field(j, "n", name, at), name, at, "n")};
        if (std::fabs(norm(n.normal) - 1.0) > 1e-6) throw FormatError(name, at, "unit normal 'n'");
        out.push_back(n);
    });
    return out;
}

std::string encode_links(const std::vector<WindingLink> &links) {
    std::string out;
    for (const WindingLink &l : links) {
        json pairs = json::array();
        for (const auto &[a, b] : l.pairs) pairs.push_back(json::array({vec_json(a), vec_json(b)}));
        json j;
        j["from"] = l.from;
        j["to"] = l.to;
        j["offset"] = l.offset;
        j["pairs"] = std::move(pairs);
        j["votes"] = l.votes;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<WindingLink> decode_links(const std::string &text, const std::string &name) {
    std::vector<WindingLink> out;
    for_each_line(text, name, [&](const json &j, std::size_t at) {
        WindingLink l;
        l.from = int_field(j, "from", name, at);
        l.to = int_field(j, "to", name, at);
        l.offset = static_cast<int>(int_field(j, "offset", name, at));
        if (l.offset == 0) throw FormatError(name, at, "non-zero 'offset'");
        l.votes = static_cast<int>(int_field(j, "votes", name, at));
        const json &pairs = field(j, "pairs", name, at);
        if (!pairs.is_array() || pairs.empty()) throw FormatError(name, at, "non-empty 'pairs'");
        for (const json &pr : pairs) {
            if (!pr.is_array() || pr.size() != 2) throw FormatError(name, at, "pairs as [[x,y,z],[x,y,z]]");
            l.pairs.emplace_back(json_vec(pr[0], name, at, "pairs"), json_vec(pr[1], name, at, "pairs"));
        }
        out.push_back(std::move(l));
    });
    return out;
}

std::string encode_points(const std::vector<Vec3> &points) {
    std::string out;
    for (const Vec3 &p : points) {
        json j;
        j["p"] = vec_json(p);
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<Vec3> decode_points(const std::string &text, const std::string &name) {
    std::vector<Vec3> out;
    for_each_line(text, name,
                  [&](const json &j, std::size_t at) { out.push_back(json_vec(field(j, "p", name, at), name, at, "p")); });
    return out;
}

void write_features(const std::string &dir, const FeatureSet &f) {
    write_text(dir + "/paths.jsonl", encode_paths(f.paths));
    write_text(dir + "/normals.jsonl", encode_normals(f.normals));
    write_text(dir + "/links.jsonl", encode_links(f.links));
}

FeatureSet read_features(const std::string &dir) {
    FeatureSet f;
    const std::string p = dir + "/paths.jsonl", n = dir + "/normals.jsonl", l = dir + "/links.jsonl";
    f.paths = decode_paths(read_text(p), p);
    f.normals = decode_normals(read_text(n), n);
    f.links = decode_links(read_text(l), l);
    return f;
}

// ---------------------------------------------------------------------------
// Transform sections (shared by model and checkpoint)
// ---------------------------------------------------------------------------

namespace {

template <class Real> void put_grid(Writer &w, const VectorGrid &g) {
    for (double v : {g.origin.x, g.origin.y, g.origin.z}) w.put<double>(v);
    for (double v : {g.spacing.x, g.spacing.y, g.spacing.z}) w.put<double>(v);
    for (std::uint32_t d : g.dims) w.put<std::uint32_t>(d);
    for (double v : g.data) w.put<Real>(static_cast<Real>(v));
}

template <class Real> VectorGrid get_grid(Reader &r) {
    VectorGrid g;
    g.origin = {r.get<double>("grid origin"), r.get<double>("grid origin"), r.get<double>("grid origin")};
    const std::size_t at = r.pos();
    g.spacing = {r.get<double>("grid spacing"), r.get<double>("grid spacing"), r.get<double>("grid spacing")};
    if (!(g.spacing.x > 0.0 && g.spacing.y > 0.0 && g.spacing.z > 0.0) || !std::isfinite(g.origin.x + g.origin.y + g.origin.z))
        r.fail_at(at, "positive grid spacing");
    const std::size_t dat = r.pos();
    for (auto &d : g.dims) d = r.get<std::uint32_t>("grid dims");
    if (g.dims[0] < 2 || g.dims[1] < 2 || g.dims[2] < 2) r.fail_at(dat, "grid dims of at least 2");
    const std::size_t n = 3 * g.node_count();
    r.need(n * sizeof(Real), std::to_string(n) + " grid values");
    g.data.resize(n);
    for (double &v : g.data) {
        const std::size_t vat = r.pos();
        v = static_cast<double>(r.get<Real>("grid value"));
        if (!std::isfinite(v)) r.fail_at(vat, "finite grid value");
    }
    return g;
}

template <class Real> void put_transform(Writer &w, const ComposedTransform &t) {
    const SpiralParams &s = t.spiral;
    for (double v : {s.rho, s.theta_max, s.z_min, s.z_max, s.spacing()}) w.put<double>(v);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.direction));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.affine.keypoints.size()));
    for (const AffineKeypoint &k : t.affine.keypoints)
        for (double v : {k.log_sx, k.log_sy, k.tx, k.ty}) w.put<double>(v);
    put_grid<Real>(w, t.flow.coarse);
    put_grid<Real>(w, t.flow.fine);
    w.put<std::uint32_t>(t.gap.n_theta);
    w.put<std::uint32_t>(t.gap.n_z);
    for (double v : t.gap.values) w.put<Real>(static_cast<Real>(v));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.flow.step_count));
}

template <class Real> ComposedTransform get_transform(Reader &r) {
    ComposedTransform t;
    SpiralParams &s = t.spiral;
    const std::size_t sat = r.pos();
    s.rho = r.get<double>("rho (f64)");
    s.theta_max = r.get<double>("theta_max (f64)");
    s.z_min = r.get<double>("z_min (f64)");
    s.z_max = r.get<double>("z_max (f64)");
    const double spacing = r.get<double>("winding spacing (f64)");
    const std::size_t dat = r.pos();
    const auto dir = r.get<std::uint8_t>("direction (u8)");
    if (dir > 1) r.fail_at(dat, "direction 0 or 1");
    s.direction = static_cast<WindingDirection>(dir);
    try {
        s.validate();
    } catch (const ConfigError &) {
        r.fail_at(sat, "valid spiral parameters");
    }
    if (std::fabs(spacing - s.spacing()) > 1e-9 * s.spacing()) r.fail_at(sat + 32, "spacing equal to 2*pi*rho");
    const std::size_t kat = r.pos();
    const auto keypoints = r.get<std::uint32_t>("affine keypoint count (u32)");
    if (keypoints < 2) r.fail_at(kat, "at least 2 affine keypoints");
    r.need(std::size_t{keypoints} * 32, "affine keypoints");
    t.affine.keypoints.resize(keypoints);
    for (AffineKeypoint &k : t.affine.keypoints) {
        k.log_sx = r.get<double>("log_sx");
        k.log_sy = r.get<double>("log_sy");
        k.tx = r.get<double>("tx");
        k.ty = r.get<double>("ty");
    }
    t.affine.z_min = s.z_min;
    t.affine.z_max = s.z_max;
    t.flow.coarse = get_grid<Real>(r);
    t.flow.fine = get_grid<Real>(r);
    const std::size_t gat = r.pos();
    const auto nt = r.get<std::uint32_t>("gap theta nodes (u32)");
    const auto nz = r.get<std::uint32_t>("gap z nodes (u32)");
    if (nt < 2 || nz < 2) r.fail_at(gat, "gap lattice of at least 2 x 2");
    t.gap = GapField::zeros(nt, nz, s.theta_max, s.z_min, s.z_max);
    r.need(std::size_t{nt} * nz * sizeof(Real), "gap values");
    for (double &v : t.gap.values) v = static_cast<double>(r.get<Real>("gap value"));
    const std::size_t stat = r.pos();
    t.flow.step_count = r.get<std::uint16_t>("Euler step count (u16)");
    if (t.flow.step_count < 1) r.fail_at(stat, "at least one Euler step");
    return t;
}

json metadata_json(const FitMetadata &m) {
    json j;
    j["steps"] = m.steps;
    j["seed"] = m.seed;
    j["final_loss"] = m.final_loss;
    j["final_terms"] = json::array();
    for (double v : m.final_terms) j["final_terms"].push_back(v);
    j["center_z"] = m.center_z;
    j["center_reference"] = json::array();
    for (const Vec3 &p : m.center_reference) j["center_reference"].push_back(vec_json(p));
    return j;
}

FitMetadata metadata_from(const std::string &text, const std::string &name, std::size_t at) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw FormatError(name, at + (e.byte > 0 ? e.byte - 1 : 0), "metadata JSON");
    }
    FitMetadata m;
    try {
        m.steps = j.at("steps").get<std::int64_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.final_loss = j.at("final_loss").get<double>();
        const json &ft = j.at("final_terms");
        if (!ft.is_array() || ft.size() != loss_term_count) throw FormatError(name, at, "7 final loss terms");
        for (std::size_t k = 0; k < loss_term_count; ++k) m.final_terms[k] = ft[k].get<double>();
        m.center_z = j.at("center_z").get<std::vector<double>>();
        for (const json &p : j.at("center_reference")) m.center_reference.push_back(json_vec(p, name, at, "center_reference"));
    } catch (const json::exception &) {
        throw FormatError(name, at, "metadata with steps, seed, final_loss, final_terms, center_z, center_reference");
    }
    if (m.center_z.size() != m.center_reference.size())
        throw FormatError(name, at, "center_z and center_reference of equal length");
    return m;
}

void put_metadata(Writer &w, const FitMetadata &m) {
    const std::string meta = metadata_json(m).dump();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    w.raw(meta);
}

FitMetadata get_metadata(Reader &r) {
    const auto len = r.get<std::uint32_t>("metadata length (u32)");
    const std::size_t at = r.pos();
    return metadata_from(r.raw(len, "metadata bytes"), r.name(), at);
}

} // namespace

std::vector<std::uint8_t> encode_model(const FittedModel &model) {
    Writer w;
    w.magic("SPFM");
    w.put<std::uint16_t>(model_version);
    put_transform<float>(w, model.transform);
    put_metadata(w, model.meta);
    return w.bytes;
}

FittedModel decode_model(const std::vector<std::uint8_t> &bytes, const std::string &name) {
    Reader r(bytes, name);
    r.magic("SPFM", model_version);
    FittedModel m;
    m.transform = get_transform<float>(r);
    m.meta = get_metadata(r);
    r.finish();
    return m;
}

void write_model(const std::string &path, const FittedModel &model) { write_bytes(path, encode_model(model)); }
FittedModel read_model(const std::string &path) { return decode_model(read_bytes(path), path); }

std::vector<std::uint8_t> encode_checkpoint(const FitState &s) {
    Writer w;
    w.magic("SPCK");
    w.put<std::uint16_t>(checkpoint_version);
    put_transform<double>(w, s.transform);
    w.put<std::int64_t>(s.step);
    w.put<std::uint64_t>(s.params.size());
    for (const auto *v : {&s.params, &s.scales, &s.adam_m, &s.adam_v})
        for (double x : *v) w.put<double>(x);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.meta.history.size()));
    for (const HistoryRow &h : s.meta.history) {
        w.put<std::int64_t>(h.step);
        for (double t : h.terms) w.put<double>(t);
        w.put<double>(h.total);
    }
    put_metadata(w, s.meta);
    return w.bytes;
}

FitState decode_checkpoint(const std::vector<std::uint8_t> &bytes, const std::string &name) {
    Reader r(bytes, name);
    r.magic("SPCK", checkpoint_version);
    FitState s;
    s.transform = get_transform<double>(r);
    s.step = r.get<std::int64_t>("step (i64)");
    const std::size_t nat = r.pos();
    const auto n = r.get<std::uint64_t>("parameter count (u64)");
    if (n != ParamLayout::of(s.transform).size) r.fail_at(nat, "parameter count matching the transform layout");
    r.need(4 * n * sizeof(double), "optimiser arrays");
    for (auto *v : {&s.params, &s.scales, &s.adam_m, &s.adam_v}) {
        v->resize(n);
        for (double &x : *v) x = r.get<double>("optimiser value");
    }
    const auto rows = r.get<std::uint32_t>("history row count (u32)");
    std::vector<HistoryRow> history(rows);
    for (HistoryRow &h : history) {
        h.step = r.get<std::int64_t>("history step");
        for (double &t : h.terms) t = r.get<double>("history term");
        h.total = r.get<double>("history total");
    }
    s.meta = get_metadata(r);
    s.meta.history = std::move(history);
    r.finish();
    unpack_parameters(s.params, s.transform);
    return s;
}

void write_checkpoint(const std::string &path, const FitState &state) { write_bytes(path, encode_checkpoint(state)); }
FitState read_checkpoint(const std::string &path) { return decode_checkpoint(read_bytes(path), path); }

// ---------------------------------------------------------------------------
// Meshes and text outputs
// ---------------------------------------------------------------------------

std::string encode_obj(const TriMesh &mesh) {
    std::string out;
    const bool uv = !mesh.uv.empty();
    for (const Vec3 &v : mesh.vertices)
        out += "v " + format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z) + "\n";
    for (const auto &t : mesh.uv) out += "vt " + format_double(t[0]) + " " + format_double(t[1]) + "\n";
    for (const auto &f : mesh.faces) {
        out += "f";
        for (std::uint32_t k : f) {
            const std::string i = std::to_string(k + 1);
            out += " " + (uv ? i + "/" + i : i);
        }
        out += "\n";
    }
    return out;
}

TriMesh decode_obj(const std::string &text, const std::string &name) {
    TriMesh m;
    std::size_t start = 0;
    bool faces_have_uv = false;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::istringstream line(text.substr(start, end - start));
        std::string tag;
        line >> tag;
        if (tag == "v") {
            Vec3 p;
            if (!(line >> p.x >> p.y >> p.z)) throw FormatError(name, start, "'v x y z'");
            m.vertices.push_back(p);
        } else if (tag == "vt") {
            std::array<double, 2> t{};
            if (!(line >> t[0] >> t[1])) throw FormatError(name, start, "'vt u v'");
            m.uv.push_back(t);
        } else if (tag == "f") {
            std::array<std::uint32_t, 3> f{};
            for (auto &idx : f) {
                std::string tok;
                if (!(line >> tok)) throw FormatError(name, start, "triangular face 'f a b c'");
                const std::size_t slash = tok.find('/');
                faces_have_uv |= slash != std::string::npos;
                long v = 0;
                try {
                    v = std::stol(tok.substr(0, slash));
                } catch (const std::exception &) {
                    throw FormatError(name, start, "integer vertex index");
                }
                if (v < 1 || static_cast<std::size_t>(v) > m.vertices.size())
                    throw FormatError(name, start, "vertex index within 1.." + std::to_string(m.vertices.size()));
                idx = static_cast<std::uint32_t>(v - 1);
            }
            std::string extra;
            if (line >> extra) throw FormatError(name, start, "triangular face (3 indices)");
            m.faces.push_back(f);
        } else if (!tag.empty() && tag[0] != '#') {
            throw FormatError(name, start, "'v', 'vt', 'f' or comment");
        }
        start = end + 1;
    }
    if (!m.uv.empty() && m.uv.size() != m.vertices.size())
        throw FormatError(name, text.size(), "one 'vt' per vertex");
    (void)faces_have_uv;
    return m;
}

std::string encode_labels(const std::vector<int> &labels) {
    std::string out;
    for (int l : labels) out += std::to_string(l) + "\n";
    return out;
}

std::vector<int> decode_labels(const std::string &text, const std::string &name) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(start, end - start);
        int v = 0;
        const auto r = std::from_chars(line.data(), line.data() + line.size(), v);
        if (r.ec != std::errc() || r.ptr != line.data() + line.size()) throw FormatError(name, start, "an integer label");
        out.push_back(v);
        start = end + 1;
    }
    return out;
}

void write_mesh(const std::string &path, const TriMesh &mesh) {
    write_text(path, encode_obj(mesh));
    if (!mesh.labels.empty()) write_text(path + ".labels", encode_labels(mesh.labels));
}

TriMesh read_mesh(const std::string &path) {
    TriMesh m = decode_obj(read_text(path), path);
    std::ifstream probe(path + ".labels");
    if (probe) {
        m.labels = decode_labels(read_text(path + ".labels"), path + ".labels");
        if (m.labels.size() != m.vertices.size())
            throw FormatError(path + ".labels", 0, std::to_string(m.vertices.size()) + " labels");
    }
    return m;
}

std::string encode_history(const std::vector<HistoryRow> &rows) {
    std::string out = "step";
    for (std::size_t k = 0; k < loss_term_count; ++k) out += std::string(",") + loss_term_name(static_cast<LossTerm>(k));
    out += ",total\n";
    for (const HistoryRow &r : rows) {
        out += std::to_string(r.step);
        for (double t : r.terms) out += "," + format_double(t);
        out += "," + format_double(r.total) + "\n";
    }
    return out;
}

std::string encode_pgm(const std::vector<float> &values, std::size_t width, std::size_t height) {
    if (values.size() != width * height) throw ConfigError("image size mismatch");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (float v : values) out.push_back(static_cast<char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    return out;
}

} // namespace scroll::io
