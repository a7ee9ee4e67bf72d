#pragma once

// File formats. Binary files are little-endian and start with a 4-byte magic and a u16
// version; readers reject other versions. Every reader throws FormatError naming the file,
// the byte offset and what was expected.

#include <cstdint>
#include <string>
#include <vector>

#include "scroll/fitting.hpp"
#include "scroll/mesh.hpp"
#include "scroll/observations.hpp"
#include "scroll/volume.hpp"

namespace scroll::io {

inline constexpr std::uint16_t volume_version = 1;
inline constexpr std::uint16_t model_version = 1;
inline constexpr std::uint16_t checkpoint_version = 1;

// Volumes: VOLP, dims 3 x u32, spacing 3 x f32, channel count u8, u8 channels (value / 255).
std::vector<std::uint8_t> encode_volume(const ProbabilityVolume &v);
ProbabilityVolume decode_volume(const std::vector<std::uint8_t> &bytes, const std::string &name = "<memory>");
void write_volume(const std::string &path, const ProbabilityVolume &v);
ProbabilityVolume read_volume(const std::string &path);

// Line-delimited JSON observations.
std::string encode_paths(const std::vector<Path> &paths);
std::vector<Path> decode_paths(const std::string &text, const std::string &name = "<memory>");
std::string encode_normals(const std::vector<NormalSample> &normals);
std::vector<NormalSample> decode_normals(const std::string &text, const std::string &name = "<memory>");
std::string encode_links(const std::vector<WindingLink> &links);
std::vector<WindingLink> decode_links(const std::string &text, const std::string &name = "<memory>");
/// Centerline points, one {"p": [x, y, z]} per line.
std::string encode_points(const std::vector<Vec3> &points);
std::vector<Vec3> decode_points(const std::string &text, const std::string &name = "<memory>");

/// paths.jsonl, normals.jsonl and links.jsonl in `dir`.
void write_features(const std::string &dir, const FeatureSet &features);
FeatureSet read_features(const std::string &dir);

// Fitted model: SPFM.
std::vector<std::uint8_t> encode_model(const FittedModel &model);
FittedModel decode_model(const std::vector<std::uint8_t> &bytes, const std::string &name = "<memory>");
void write_model(const std::string &path, const FittedModel &model);
FittedModel read_model(const std::string &path);

// Optimiser checkpoint: SPCK, full double precision.
std::vector<std::uint8_t> encode_checkpoint(const FitState &state);
FitState decode_checkpoint(const std::vector<std::uint8_t> &bytes, const std::string &name = "<memory>");
void write_checkpoint(const std::string &path, const FitState &state);
FitState read_checkpoint(const std::string &path);

// Meshes: OBJ with optional vt; winding labels in a sidecar with one integer per line.
std::string encode_obj(const TriMesh &mesh);
TriMesh decode_obj(const std::string &text, const std::string &name = "<memory>");
std::string encode_labels(const std::vector<int> &labels);
std::vector<int> decode_labels(const std::string &text, const std::string &name = "<memory>");
/// Writes `path` and, if the mesh has labels, `path + ".labels"`.
void write_mesh(const std::string &path, const TriMesh &mesh);
/// Reads `path` and the labels sidecar when present.
TriMesh read_mesh(const std::string &path);

/// Loss history as CSV with a header row.
std::string encode_history(const std::vector<HistoryRow> &rows);

/// 8-bit binary PGM of values in [0, 1].
std::string encode_pgm(const std::vector<float> &values, std::size_t width, std::size_t height);

std::string read_text(const std::string &path);
std::vector<std::uint8_t> read_bytes(const std::string &path);
void write_text(const std::string &path, const std::string &text);
void write_bytes(const std::string &path, const std::vector<std::uint8_t> &bytes);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

} // namespace scroll::io
