#include "ferkd/store_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>

#include "ferkd/calibrator.hpp"
#include "ferkd/error.hpp"

namespace ferkd {

namespace {

constexpr char magic[4] = {'F', 'E', 'R', 'K'};

std::optional<CropStatus> decode_status(std::uint8_t code, std::size_t offset) {
  switch (code) {
    case 0: return std::nullopt;
    case 1: return CropStatus::UR;
    case 2: return CropStatus::HR;
    case 3: return CropStatus::IR;
    default:
      throw Error::at_offset(ErrorKind::invariant, offset, "unknown status code " + std::to_string(code));
  }
}

}  // namespace

std::uint8_t encode_status(const std::optional<CropStatus>& status) noexcept {
  if (!status) return 0;
  switch (*status) {
    case CropStatus::UR: return 1;
    case CropStatus::HR: return 2;
    case CropStatus::IR: return 3;
  }
  return 0;
}

void encode_crop(ByteWriter& out, const CropRecord& rec) {
  out.f32(rec.bbox.x);
  out.f32(rec.bbox.y);
  out.f32(rec.bbox.w);
  out.f32(rec.bbox.h);
  out.u8(rec.hflip ? 1 : 0);
  out.u8(encode_status(rec.status));
  out.u16(rec.gt_class ? static_cast<std::uint16_t>(rec.gt_class->class_index) : missing_gt_class);
  for (const auto& e : rec.soft_label.entries()) {
    out.u32(e.class_index);
    out.u16(e.qprob);
  }
}

CropRecord decode_crop(ByteReader& in, const StoreHeader& header, std::string image_id) {
  const std::size_t start = in.offset();
  BBox box;
  box.x = in.f32();
  box.y = in.f32();
  box.w = in.f32();
  box.h = in.f32();
  if (!box.valid()) throw Error::at_offset(ErrorKind::invariant, start, "bbox outside the unit square");
  const std::size_t flip_at = in.offset();
  const std::uint8_t flip = in.u8();
  if (flip > 1) throw Error::at_offset(ErrorKind::invariant, flip_at, "flip flag must be 0 or 1");
  const std::size_t status_at = in.offset();
  const auto status = decode_status(in.u8(), status_at);
  const std::size_t gt_at = in.offset();
  const std::uint16_t gt_raw = in.u16();

  std::optional<HardLabel> gt;
  if (gt_raw != missing_gt_class) {
    if (gt_raw >= header.num_classes)
      throw Error::at_offset(ErrorKind::invariant, gt_at, "ground truth class out of range");
    gt = HardLabel{gt_raw, header.num_classes};
  }

  const std::size_t label_at = in.offset();
  std::vector<QuantEntry> entries(header.top_k);
  for (auto& e : entries) {
    e.class_index = in.u32();
    e.qprob = in.u16();
  }

  auto invariant = [&](std::size_t at, const std::string& what) {
    return Error::at_offset(ErrorKind::invariant, at, what);
  };
  try {
    QuantizedSoftLabel label(std::move(entries), header.num_classes, header.bits);
    CropRecord rec{std::move(image_id), box, flip == 1, std::move(label), gt, status, std::nullopt};
    if (status && !header.calibration) throw invariant(status_at, "status set in an uncalibrated store");
    if (!status && header.calibration) throw invariant(status_at, "missing status in a calibrated store");
    if (status == CropStatus::HR) {
      if (!gt) throw invariant(gt_at, "HR record without ground truth");
      rec.calibrated_label = smooth_hard(*gt, header.calibration->epsilon, header.num_classes);
    } else if (status == CropStatus::IR) {
      rec.calibrated_label = recover(rec.soft_label);
    }
    return rec;
  } catch (const Error& e) {
    if (e.offset()) throw;
    throw invariant(label_at, e.what());
  }
}

std::vector<std::uint8_t> serialize_store(const LabelStore& store) {
  store.validate();
  const auto& h = store.header;
  ByteWriter out;
  out.raw(std::string_view(magic, 4));
  out.u16(h.version);
  out.u32(h.num_classes);
  out.u16(h.top_k);
  out.u8(h.bits);
  out.f32(h.crop.scale_min);
  out.f32(h.crop.scale_max);
  out.f32(h.crop.ratio_min);
  out.f32(h.crop.ratio_max);
  const CalibrationConfig cfg = h.calibration.value_or(CalibrationConfig{0.0, 0.0, 0.0, 0.0});
  out.u8(h.calibration ? 1 : 0);
  out.f64(cfg.t_low);
  out.f64(cfg.t_mid);
  out.f64(cfg.t_top);
  out.f64(cfg.epsilon);
  out.u32(static_cast<std::uint32_t>(store.images.size()));
  for (const auto& img : store.images) {
    out.u16(static_cast<std::uint16_t>(img.image_id.size()));
    out.raw(img.image_id);
    out.u32(static_cast<std::uint32_t>(img.crops.size()));
    for (const auto& rec : img.crops) encode_crop(out, rec);
  }
  return out.take();
}

LabelStore parse_store(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4) throw Error::at_offset(ErrorKind::truncated, bytes.size(), "file shorter than magic");
  for (std::size_t i = 0; i < 4; ++i)
    if (bytes[i] != static_cast<std::uint8_t>(magic[i]))
      throw Error::at_offset(ErrorKind::bad_magic, i, "not a FERK label store");
  in.str(4);

  LabelStore store;
  auto& h = store.header;
  const std::size_t version_at = in.offset();
  h.version = in.u16();
  if (h.version != store_format_version)
    throw Error::at_offset(ErrorKind::bad_version, version_at, "unsupported version " + std::to_string(h.version));
  const std::size_t dims_at = in.offset();
  h.num_classes = in.u32();
  h.top_k = in.u16();
  h.bits = in.u8();
  if (h.num_classes == 0 || h.num_classes >= missing_gt_class || h.top_k == 0 || h.top_k > h.num_classes ||
      h.bits < 1 || h.bits > 16)
    throw Error::at_offset(ErrorKind::invariant, dims_at, "header C/K/B out of range");
  h.crop.scale_min = in.f32();
  h.crop.scale_max = in.f32();
  h.crop.ratio_min = in.f32();
  h.crop.ratio_max = in.f32();
  const std::size_t cal_at = in.offset();
  const std::uint8_t calibrated = in.u8();
  CalibrationConfig cfg;
  cfg.t_low = in.f64();
  cfg.t_mid = in.f64();
  cfg.t_top = in.f64();
  cfg.epsilon = in.f64();
  if (calibrated > 1) throw Error::at_offset(ErrorKind::invariant, cal_at, "calibrated flag must be 0 or 1");
  if (calibrated == 1) {
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw Error::at_offset(ErrorKind::invariant, cal_at, e.what());
    }
    h.calibration = cfg;
  }

  const std::uint32_t image_count = in.u32();
  for (std::uint32_t i = 0; i < image_count; ++i) {
    ImageEntry img;
    const std::uint16_t id_len = in.u16();
    img.image_id = in.str(id_len);
    const std::uint32_t crop_count = in.u32();
    // Each crop needs at least 22 bytes; reject absurd counts before reserving.
    if (static_cast<std::uint64_t>(crop_count) * 22 > in.remaining())
      throw Error::at_offset(ErrorKind::truncated, bytes.size(), "crop count exceeds remaining bytes");
    img.crops.reserve(crop_count);
    for (std::uint32_t c = 0; c < crop_count; ++c) img.crops.push_back(decode_crop(in, h, img.image_id));
    store.images.push_back(std::move(img));
  }
  if (!in.done()) throw Error::at_offset(ErrorKind::invariant, in.offset(), "trailing bytes after last image");

  try {
    store.validate();
  } catch (const Error& e) {
    throw Error::at_offset(ErrorKind::invariant, bytes.size(), e.what());
  }
  return store;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + source.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::io, "read failed on '" + source.string() + "'");
  return bytes;
}

std::size_t write_store(const LabelStore& store, const std::filesystem::path& destination) {
  const auto bytes = serialize_store(store);
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + destination.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(ErrorKind::io, "write failed on '" + destination.string() + "'");
  return bytes.size();
}

LabelStore read_store(const std::filesystem::path& source) { return parse_store(read_file_bytes(source)); }

SoftLabel expand_sparse(std::span<const std::pair<ClassIndex, double>> pairs, std::size_t num_classes) {
  if (pairs.empty()) throw Error(ErrorKind::data, "no class probabilities given");
  std::vector<double> p(num_classes, -1.0);
  double listed = 0.0;
  for (const auto& [cls, prob] : pairs) {
    if (cls >= num_classes) throw Error(ErrorKind::data, "class " + std::to_string(cls) + " out of range");
    if (!(prob >= 0.0 && prob <= 1.0)) throw Error(ErrorKind::data, "probability outside [0, 1]");
    if (p[cls] >= 0.0) throw Error(ErrorKind::data, "class " + std::to_string(cls) + " listed twice");
    p[cls] = prob;
    listed += prob;
  }
  if (listed > 1.0 + 1e-3) throw Error(ErrorKind::data, "probabilities sum to " + std::to_string(listed));

  const std::size_t unlisted = num_classes - pairs.size();
  if (unlisted == 0 || listed > 1.0) {
    if (listed <= 0.0) throw Error(ErrorKind::data, "probabilities sum to zero");
    for (double& v : p) v = v < 0.0 ? 0.0 : v / listed;
  } else {
    const double spread = (1.0 - listed) / static_cast<double>(unlisted);
    for (double& v : p)
      if (v < 0.0) v = spread;
  }
  return SoftLabel(std::move(p));
}

namespace {

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

LabelStore ingest_predictions(std::istream& dump, const IngestMeta& meta) {
  if (meta.num_classes < 1 || meta.num_classes >= missing_gt_class)
    throw Error(ErrorKind::parameter, "num_classes must be in [1, 65534]");
  if (meta.top_k < 1 || meta.top_k > meta.num_classes)
    throw Error(ErrorKind::parameter, "top_k must be in [1, C]");
  if (meta.bits < 1 || meta.bits > 16) throw Error(ErrorKind::parameter, "bits must be in [1, 16]");

  LabelStore store;
  store.header.num_classes = static_cast<std::uint32_t>(meta.num_classes);
  store.header.top_k = static_cast<std::uint16_t>(meta.top_k);
  store.header.bits = static_cast<std::uint8_t>(meta.bits);
  store.header.crop = meta.crop;

  std::unordered_map<std::string, std::size_t> image_slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(dump, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty() || fields.front().starts_with('#')) continue;
    auto malformed = [&](const std::string& what) { return Error::at_line(ErrorKind::data, line_no, what); };
    if (fields.size() < 8) throw malformed("expected: image_id x y w h flip gt class:prob ...");

    BBox box;
    if (!parse_number(fields[1], box.x) || !parse_number(fields[2], box.y) || !parse_number(fields[3], box.w) ||
        !parse_number(fields[4], box.h))
      throw malformed("bad bbox");
    if (!box.valid()) throw malformed("bbox outside the unit square");
    if (fields[5] != "0" && fields[5] != "1") throw malformed("flip must be 0 or 1");

    std::optional<HardLabel> gt;
    if (fields[6] != "-") {
      ClassIndex cls = 0;
      if (!parse_number(fields[6], cls) || cls >= meta.num_classes) throw malformed("bad ground truth class");
      gt = HardLabel{cls, meta.num_classes};
    }

    std::vector<std::pair<ClassIndex, double>> pairs;
    for (std::size_t f = 7; f < fields.size(); ++f) {
      const auto colon = fields[f].find(':');
      ClassIndex cls = 0;
      double prob = 0.0;
      if (colon == std::string_view::npos || !parse_number(fields[f].substr(0, colon), cls) ||
          !parse_number(fields[f].substr(colon + 1), prob))
        throw malformed("bad class:prob pair '" + std::string(fields[f]) + "'");
      pairs.emplace_back(cls, prob);
    }

    SoftLabel label = [&] {
      try {
        return expand_sparse(pairs, meta.num_classes);
      } catch (const Error& e) {
        throw Error::at_line(ErrorKind::data, line_no, e.what());
      }
    }();

    const std::string id(fields[0]);
    auto [it, inserted] = image_slot.try_emplace(id, store.images.size());
    if (inserted) store.images.push_back(ImageEntry{id, {}});
    store.images[it->second].crops.push_back(
        CropRecord{id, box, fields[5] == "1", quantize(label, meta.top_k, meta.bits), gt, std::nullopt, std::nullopt});
  }
  if (dump.bad()) throw Error(ErrorKind::io, "failed reading prediction dump");
  store.validate();
  return store;
}

LabelStore ingest_predictions(std::string_view dump, const IngestMeta& meta) {
  std::istringstream in{std::string(dump)};
  return ingest_predictions(in, meta);
}

}  // namespace ferkd
