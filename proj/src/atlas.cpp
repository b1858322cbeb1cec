#include "batlas/atlas.hpp"

#include <zlib.h>

#include <bit>
#include <chrono>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "batlas/error.hpp"

namespace batlas {

namespace {

BarcodeParams canonical(BarcodeParams p) {
  if (p.code == CodeType::kLbp) p.num_angles = 0;
  return p;
}

void check_mask_shapes(const std::string& id, std::span<const BinaryMask> masks,
                       const std::optional<BinaryMask>& gold) {
  const BinaryMask* first = masks.empty() ? (gold ? &*gold : nullptr) : &masks.front();
  if (!first) return;
  for (const auto& m : masks) {
    if (!m.same_shape(*first)) throw BuildError("entry '" + id + "': segment sizes differ");
  }
  if (gold && !gold->same_shape(*first)) {
    throw BuildError("entry '" + id + "': gold size differs from segments");
  }
}

}  // namespace

Atlas::Atlas(BarcodeParams params, int n_users, std::vector<AtlasEntry> entries)
    : params_(canonical(params)),
      bit_len_(barcode_length(params_)),
      n_users_(n_users),
      entries_(std::move(entries)),
      words_per_code_((bit_len_ + 63) / 64) {
  if (n_users < 1 || n_users > std::numeric_limits<std::uint16_t>::max()) {
    throw BuildError("atlas needs between 1 and 65535 users per entry");
  }
  std::unordered_set<std::string> seen;
  packed_.reserve(entries_.size() * words_per_code_);
  for (const auto& e : entries_) {
    if (!seen.insert(e.id).second) throw BuildError("duplicate atlas id '" + e.id + "'");
    if (e.segments.size() != static_cast<std::size_t>(n_users)) {
      throw BuildError("entry '" + e.id + "' has " + std::to_string(e.segments.size()) +
                       " segments, expected " + std::to_string(n_users));
    }
    if (canonical(e.barcode.params()) != params_ || e.barcode.bit_len() != bit_len_) {
      throw BuildError("entry '" + e.id + "' barcode parameters differ from the atlas header");
    }
    check_mask_shapes(e.id, e.segments, e.gold);
    const auto w = e.barcode.words();
    packed_.insert(packed_.end(), w.begin(), w.end());
  }
}

std::optional<std::size_t> Atlas::find(std::string_view id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id == id) return i;
  }
  return std::nullopt;
}

Atlas build_atlas(std::span<const AtlasItem> items, const BarcodeParams& params) {
  if (items.empty()) throw BuildError("no items to build an atlas from");
  const std::size_t n_users = items.front().segments.size();
  if (n_users == 0) throw BuildError("item '" + items.front().id + "' has no user segments");
  std::unordered_set<std::string> seen;
  std::vector<AtlasEntry> entries;
  entries.reserve(items.size());
  for (const auto& item : items) {
    if (item.segments.size() != n_users) {
      throw BuildError("item '" + item.id + "' has " + std::to_string(item.segments.size()) +
                       " segments, expected " + std::to_string(n_users));
    }
    if (!seen.insert(item.id).second) throw BuildError("duplicate atlas id '" + item.id + "'");
    for (const auto& s : item.segments) {
      if (s.width() != item.image.width() || s.height() != item.image.height()) {
        throw BuildError("item '" + item.id + "': segment size differs from its image");
      }
    }
    entries.push_back(AtlasEntry{item.id, compute_barcode(item.image, params), item.segments,
                                 item.gold, item.image_ref});
  }
  return Atlas(params, static_cast<int>(n_users), std::move(entries));
}

namespace {

SearchResult scan(const Atlas& atlas, const Barcode& query, std::optional<std::size_t> skip) {
  if (atlas.empty()) throw EmptyAtlasError("atlas is empty");
  if (canonical(query.params()) != atlas.params() || query.bit_len() != atlas.bit_len()) {
    throw IncompatibleBarcodeError("query barcode " +
                                   std::string(code_type_label(query.code_type())) + "/" +
                                   std::to_string(query.bit_len()) +
                                   " does not match the atlas parameters");
  }
  if (skip && atlas.size() == 1) {
    throw EmptyAtlasError("excluding '" + atlas.entry(*skip).id + "' leaves no candidates");
  }

  const auto start = std::chrono::steady_clock::now();
  const auto q = query.words();
  const std::size_t nw = atlas.words_per_code();
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::size_t best_distance = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < atlas.size(); ++i) {
    if (skip && *skip == i) continue;
    const std::uint64_t* code = atlas.packed_code(i).data();
    std::size_t d = 0;
    for (std::size_t w = 0; w < nw; ++w) d += std::popcount(code[w] ^ q[w]);
    if (d < best_distance) {
      best_distance = d;
      best = i;
    }
  }
  const auto stop = std::chrono::steady_clock::now();

  SearchResult r;
  r.best_index = best;
  r.best_id = atlas.entry(best).id;
  r.similarity = 1.0 - static_cast<double>(best_distance) / static_cast<double>(atlas.bit_len());
  r.elapsed_seconds = std::chrono::duration<double>(stop - start).count();
  return r;
}

}  // namespace

SearchResult search(const Atlas& atlas, const Barcode& query) {
  return scan(atlas, query, std::nullopt);
}

SearchResult search_excluding(const Atlas& atlas, const Barcode& query,
                              std::string_view excluded_id) {
  return scan(atlas, query, atlas.find(excluded_id));
}

// ---------------------------------------------------------------------------
// Binary format (little-endian):
//   "BATL" | version u32 | code u8 | norm u16 | angles u16 | bit_len u32 |
//   n_I u32 | n_U u16 | entries... | crc32 u32
// entry: id_len u16, id bytes, barcode bytes, has_gold u8, masks (gold first)
// mask:  width u16, height u16, u32 run lengths starting with a false run
// ---------------------------------------------------------------------------

namespace {

constexpr std::uint8_t kMagic[4] = {'B', 'A', 'T', 'L'};
constexpr std::size_t kHeaderSize = 4 + 4 + 1 + 2 + 2 + 4 + 4 + 2;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v));
    u16(static_cast<std::uint16_t>(v >> 16));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

struct OutOfData {};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | (static_cast<std::uint32_t>(u16()) << 16);
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw OutOfData{};
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_mask(Writer& w, const BinaryMask& m) {
  if (m.width() > 0xFFFF || m.height() > 0xFFFF) {
    throw InvalidArgument("mask too large for the atlas format");
  }
  w.u16(static_cast<std::uint16_t>(m.width()));
  w.u16(static_cast<std::uint16_t>(m.height()));
  for (auto run : rle_encode(m)) w.u32(run);
}

BinaryMask read_mask(Reader& r) {
  const int width = r.u16();
  const int height = r.u16();
  const std::size_t total = static_cast<std::size_t>(width) * height;
  std::vector<std::uint32_t> runs;
  std::size_t covered = 0;
  do {
    const std::uint32_t run = r.u32();
    if (covered + run > total) throw AtlasFormatError("mask run lengths overflow the mask");
    runs.push_back(run);
    covered += run;
  } while (covered < total);
  return rle_decode(width, height, runs);
}

struct Parsed {
  BarcodeParams params;
  int n_users = 0;
  std::vector<AtlasEntry> entries;
};

// Throws OutOfData (with `ordinal` set) when the input ends early.
Parsed parse_body(std::span<const std::uint8_t> body, std::size_t& ordinal) {
  Reader r(body);
  ordinal = TruncatedFileError::kHeader;
  r.bytes(4);
  r.u32();
  Parsed p;
  const std::uint8_t code = r.u8();
  if (code > static_cast<std::uint8_t>(CodeType::kLbp)) {
    throw AtlasFormatError("unknown code type " + std::to_string(code));
  }
  p.params.code = static_cast<CodeType>(code);
  p.params.norm_size = r.u16();
  p.params.num_angles = r.u16();
  const std::uint32_t bit_len = r.u32();
  const std::uint32_t n_entries = r.u32();
  p.n_users = r.u16();
  if (p.params.norm_size < 3 || (is_radon(p.params.code) && p.params.num_angles < 1) ||
      barcode_length(p.params) != bit_len) {
    throw AtlasFormatError("inconsistent barcode parameters in atlas header");
  }
  const std::size_t code_bytes = (bit_len + 7) / 8;
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    ordinal = i;
    AtlasEntry e;
    const std::uint16_t id_len = r.u16();
    const auto id = r.bytes(id_len);
    e.id.assign(id.begin(), id.end());
    try {
      e.barcode = Barcode::from_bytes(p.params, bit_len, r.bytes(code_bytes));
    } catch (const InvalidArgument& ex) {
      throw AtlasFormatError("entry " + std::to_string(i) + ": " + ex.what());
    }
    const std::uint8_t has_gold = r.u8();
    if (has_gold > 1) throw AtlasFormatError("entry " + std::to_string(i) + ": bad gold flag");
    if (has_gold) e.gold = read_mask(r);
    e.segments.reserve(p.n_users);
    for (int u = 0; u < p.n_users; ++u) e.segments.push_back(read_mask(r));
    p.entries.push_back(std::move(e));
  }
  ordinal = n_entries;
  if (r.remaining() != 0) throw AtlasFormatError("unexpected bytes after the last entry");
  return p;
}

}  // namespace

std::vector<std::uint8_t> serialize_atlas(const Atlas& atlas) {
  if (atlas.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("too many atlas entries");
  }
  Writer w;
  w.bytes(kMagic);
  w.u32(kAtlasFormatVersion);
  w.u8(static_cast<std::uint8_t>(atlas.params().code));
  w.u16(static_cast<std::uint16_t>(atlas.params().norm_size));
  w.u16(static_cast<std::uint16_t>(atlas.params().num_angles));
  w.u32(static_cast<std::uint32_t>(atlas.bit_len()));
  w.u32(static_cast<std::uint32_t>(atlas.size()));
  w.u16(static_cast<std::uint16_t>(atlas.n_users()));
  for (const auto& e : atlas.entries()) {
    if (e.id.size() > 0xFFFF) throw InvalidArgument("atlas id too long: " + e.id.substr(0, 32));
    w.u16(static_cast<std::uint16_t>(e.id.size()));
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(e.id.data()), e.id.size()));
    w.bytes(e.barcode.to_bytes());
    w.u8(e.gold ? 1 : 0);
    if (e.gold) write_mask(w, *e.gold);
    for (const auto& s : e.segments) write_mask(w, s);
  }
  const std::uint32_t crc = crc_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

Atlas deserialize_atlas(std::span<const std::uint8_t> bytes) {
  const std::size_t prefix = std::min<std::size_t>(bytes.size(), 4);
  if (!std::equal(bytes.begin(), bytes.begin() + prefix, kMagic)) {
    throw MagicMismatchError("not an atlas file (bad magic)");
  }
  if (bytes.size() < kHeaderSize + 4) {
    throw TruncatedFileError("atlas file truncated inside the header", TruncatedFileError::kHeader);
  }
  const std::uint32_t version = bytes[4] | (bytes[5] << 8) | (bytes[6] << 16) |
                                (static_cast<std::uint32_t>(bytes[7]) << 24);
  if (version != kAtlasFormatVersion) {
    throw VersionMismatchError("unsupported atlas format version " + std::to_string(version) +
                               " (expected " + std::to_string(kAtlasFormatVersion) + ")");
  }

  const auto body = bytes.first(bytes.size() - 4);
  const auto tail = bytes.last(4);
  const std::uint32_t stored_crc = tail[0] | (tail[1] << 8) | (tail[2] << 16) |
                                   (static_cast<std::uint32_t>(tail[3]) << 24);
  const bool crc_ok = crc_of(body) == stored_crc;

  std::size_t ordinal = TruncatedFileError::kHeader;
  Parsed parsed;
  try {
    parsed = parse_body(body, ordinal);
  } catch (const OutOfData&) {
    if (crc_ok) throw AtlasFormatError("atlas structure ends early despite a valid checksum");
    const std::string where = ordinal == TruncatedFileError::kHeader
                                  ? std::string("header")
                                  : "entry " + std::to_string(ordinal);
    throw TruncatedFileError("atlas file truncated in " + where, ordinal);
  } catch (const AtlasFormatError& ex) {
    if (!crc_ok) throw ChecksumError(std::string("atlas checksum mismatch (") + ex.what() + ")");
    throw;
  }
  if (!crc_ok) throw ChecksumError("atlas checksum mismatch");
  try {
    return Atlas(parsed.params, parsed.n_users, std::move(parsed.entries));
  } catch (const BuildError& ex) {
    throw AtlasFormatError(std::string("invalid atlas contents: ") + ex.what());
  }
}

void save_atlas(const Atlas& atlas, const std::filesystem::path& path) {
  const auto bytes = serialize_atlas(atlas);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write atlas '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for atlas '" + path.string() + "'");
}

Atlas load_atlas(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open atlas '" + path.string() + "'");
  std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return deserialize_atlas(bytes);
}

}  // namespace batlas
