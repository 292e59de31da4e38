#include "ecog/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <utility>

#include <json.hpp>

namespace ecog {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Condition c) { return c == Condition::Awake ? "awake" : "anesthesia"; }

Condition condition_from_string(const std::string& s) {
  if (s == "awake") return Condition::Awake;
  if (s == "anesthesia") return Condition::Anesthesia;
  throw DataError("unknown condition '" + s + "' (expected awake|anesthesia)");
}

std::size_t Recording::n_included() const {
  std::size_t n = 0;
  for (const auto& ch : channels) n += ch.excluded ? 0 : 1;
  return n;
}

std::vector<int> Recording::included_rows() const {
  std::vector<int> rows;
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (!channels[i].excluded) rows.push_back(static_cast<int>(i));
  return rows;
}

std::vector<ChannelMeta> default_grid(int n_channels, int n_cols) {
  std::vector<ChannelMeta> out(static_cast<std::size_t>(n_channels));
  for (int i = 0; i < n_channels; ++i) out[i] = ChannelMeta{i, i / n_cols, i % n_cols, false};
  return out;
}

std::int64_t samples_per_second(double fs_hz) {
  const double r = std::round(fs_hz);
  if (!(fs_hz > 0) || std::abs(fs_hz - r) > 1e-9)
    throw DataError("sampling rate must be a positive integer number of Hz, got " + std::to_string(fs_hz));
  return static_cast<std::int64_t>(r);
}

void validate(const Recording& rec) {
  if (!(rec.fs_hz > 0) || !std::isfinite(rec.fs_hz))
    throw DataError("invalid fs_hz " + std::to_string(rec.fs_hz) + " (must be > 0)");
  if (rec.channels.size() != rec.n_channels())
    throw DataError("channel metadata count " + std::to_string(rec.channels.size()) +
                    " does not match sample rows " + std::to_string(rec.n_channels()));
  std::set<std::pair<int, int>> cells;
  for (const auto& ch : rec.channels)
    if (!cells.insert({ch.grid_row, ch.grid_col}).second)
      throw DataError("duplicate grid position (" + std::to_string(ch.grid_row) + "," +
                      std::to_string(ch.grid_col) + ") for channel " + std::to_string(ch.index));
  if (rec.day_id < 1) throw DataError("day_id must be >= 1");
  const double n = static_cast<double>(rec.n_samples());
  for (auto t : rec.triggers) {
    const double td = static_cast<double>(t);
    if (td < rec.fs_hz)
      throw DataError("trigger at sample " + std::to_string(t) + " has less than 1 s of pre-stimulus data");
    if (td + 4.0 * rec.fs_hz > n)
      throw DataError("trigger at sample " + std::to_string(t) + " runs past the end of the recording (" +
                      std::to_string(rec.n_samples()) + " samples)");
  }
}

namespace {

fs::path manifest_path(const fs::path& dir) { return dir / "manifest.json"; }
fs::path samples_path(const fs::path& dir) { return dir / "samples.f32"; }

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

void write_dataset(const Recording& rec, const fs::path& dir) {
  validate(rec);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());

  json m;
  m["version"] = kManifestVersion;
  m["fs_hz"] = rec.fs_hz;
  m["n_channels"] = rec.n_channels();
  m["n_samples"] = rec.n_samples();
  json chans = json::array();
  for (const auto& ch : rec.channels)
    chans.push_back({{"index", ch.index}, {"grid_row", ch.grid_row}, {"grid_col", ch.grid_col}});
  m["channels"] = std::move(chans);
  m["triggers"] = rec.triggers;
  m["condition"] = to_string(rec.condition);
  m["day_id"] = rec.day_id;

  {
    std::ofstream f(manifest_path(dir));
    if (!f) throw DataError("failed to write " + manifest_path(dir).string());
    f << m.dump(2) << '\n';
  }

  std::vector<std::uint32_t> buf(rec.n_channels() * rec.n_samples());
  std::size_t k = 0;
  for (Eigen::Index c = 0; c < rec.samples.rows(); ++c)
    for (Eigen::Index t = 0; t < rec.samples.cols(); ++t)
      buf[k++] = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(rec.samples(c, t))));
  std::ofstream f(samples_path(dir), std::ios::binary);
  if (!f) throw DataError("failed to write " + samples_path(dir).string());
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!f) throw DataError("short write to " + samples_path(dir).string());
}

Recording read_dataset(const fs::path& dir) {
  std::ifstream mf(manifest_path(dir));
  if (!mf) throw DataError("missing manifest " + manifest_path(dir).string());
  json m;
  try {
    m = json::parse(mf);
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path(dir).string() + ": " + e.what());
  }

  Recording rec;
  std::size_t n_ch = 0, n_s = 0;
  try {
    const int version = m.at("version").get<int>();
    if (version != kManifestVersion)
      throw DataError("unsupported manifest version " + std::to_string(version));
    rec.fs_hz = m.at("fs_hz").get<double>();
    n_ch = m.at("n_channels").get<std::size_t>();
    n_s = m.at("n_samples").get<std::size_t>();
    for (const auto& c : m.at("channels"))
      rec.channels.push_back(ChannelMeta{c.at("index").get<int>(), c.at("grid_row").get<int>(),
                                         c.at("grid_col").get<int>(), false});
    rec.triggers = m.at("triggers").get<std::vector<std::int64_t>>();
    rec.condition = condition_from_string(m.at("condition").get<std::string>());
    rec.day_id = m.at("day_id").get<int>();
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path(dir).string() + ": " + e.what());
  }
  if (!(rec.fs_hz > 0)) throw DataError("invalid fs_hz " + std::to_string(rec.fs_hz) + " in manifest");

  const auto sp = samples_path(dir);
  std::error_code ec;
  const auto actual = fs::file_size(sp, ec);
  if (ec) throw DataError("missing sample file " + sp.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(n_ch) * n_s * 4;
  if (actual != expected)
    throw DataError("sample file length mismatch: expected " + std::to_string(expected) + " bytes, found " +
                    std::to_string(actual));

  std::vector<std::uint32_t> buf(n_ch * n_s);
  std::ifstream f(sp, std::ios::binary);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  if (!f) throw DataError("failed to read " + sp.string());
  rec.samples.resize(static_cast<Eigen::Index>(n_ch), static_cast<Eigen::Index>(n_s));
  std::size_t k = 0;
  for (std::size_t c = 0; c < n_ch; ++c)
    for (std::size_t t = 0; t < n_s; ++t)
      rec.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) =
          static_cast<double>(std::bit_cast<float>(to_le(buf[k++])));

  validate(rec);
  return rec;
}

}  // namespace ecog
