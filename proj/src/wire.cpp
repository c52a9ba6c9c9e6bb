#include "ferkd/wire.hpp"

#include <algorithm>

#include "ferkd/bytes.hpp"
#include "ferkd/calibrator.hpp"
#include "ferkd/error.hpp"
#include "ferkd/store_io.hpp"

namespace ferkd {

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > max_frame_payload) throw Error(ErrorKind::protocol, "frame payload too large");
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(frame.payload.size()));
  out.u8(frame.opcode);
  out.raw(frame.payload);
  return out.take();
}

Frame make_frame(Opcode op, std::vector<std::uint8_t> payload) {
  return Frame{static_cast<std::uint8_t>(op), std::move(payload)};
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Frame> FrameDecoder::next() {
  if (buffered() < frame_header_size) return std::nullopt;
  ByteReader head(std::span<const std::uint8_t>(buf_).subspan(pos_, frame_header_size));
  const std::uint32_t len = head.u32();
  const std::uint8_t op = head.u8();
  if (len > max_frame_payload)
    throw Error(ErrorKind::protocol, "announced frame length " + std::to_string(len) + " exceeds limit");
  if (buffered() < frame_header_size + len) return std::nullopt;
  const auto begin = buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + frame_header_size);
  Frame f{op, std::vector<std::uint8_t>(begin, begin + len)};
  pos_ += frame_header_size + len;
  if (pos_ > (1u << 20)) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  return f;
}

namespace {

void expect_done(const ByteReader& in) {
  if (!in.done()) throw Error::at_offset(ErrorKind::protocol, in.offset(), "trailing payload bytes");
}

}  // namespace

std::vector<std::uint8_t> encode_hello_reply(const HelloReply& r) {
  ByteWriter out;
  out.u16(r.version);
  out.u32(r.num_classes);
  out.u16(r.top_k);
  out.u8(r.bits);
  out.u8(r.calibration ? 1 : 0);
  const auto cfg = r.calibration.value_or(CalibrationConfig{0.0, 0.0, 0.0, 0.0});
  out.f64(cfg.t_low);
  out.f64(cfg.t_mid);
  out.f64(cfg.t_top);
  out.f64(cfg.epsilon);
  out.u64(r.servable);
  return out.take();
}

HelloReply decode_hello_reply(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  HelloReply r;
  r.version = in.u16();
  r.num_classes = in.u32();
  r.top_k = in.u16();
  r.bits = in.u8();
  const bool calibrated = in.u8() != 0;
  CalibrationConfig cfg;
  cfg.t_low = in.f64();
  cfg.t_mid = in.f64();
  cfg.t_top = in.f64();
  cfg.epsilon = in.f64();
  if (calibrated) r.calibration = cfg;
  r.servable = in.u64();
  expect_done(in);
  return r;
}

std::vector<std::uint8_t> encode_get_batch(const GetBatchRequest& r) {
  ByteWriter out;
  out.u32(r.n);
  out.u64(r.epoch_seed);
  return out.take();
}

GetBatchRequest decode_get_batch(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  GetBatchRequest r;
  r.n = in.u32();
  r.epoch_seed = in.u64();
  expect_done(in);
  return r;
}

std::vector<std::uint8_t> encode_batch(std::uint32_t epoch, std::span<const CropRecord* const> records) {
  ByteWriter out;
  out.u32(epoch);
  out.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto* rec : records) {
    out.u16(static_cast<std::uint16_t>(rec->image_id.size()));
    out.raw(rec->image_id);
    encode_crop(out, *rec);
  }
  return out.take();
}

BatchReply decode_batch(std::span<const std::uint8_t> payload, const HelloReply& hello) {
  StoreHeader header;
  header.num_classes = hello.num_classes;
  header.top_k = hello.top_k;
  header.bits = hello.bits;
  header.calibration = hello.calibration;
  ByteReader in(payload);
  BatchReply r;
  r.epoch = in.u32();
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = in.u16();
    std::string id = in.str(len);
    r.records.push_back(decode_crop(in, header, std::move(id)));
  }
  expect_done(in);
  return r;
}

std::vector<std::uint8_t> encode_stats(const StatsReply& r) {
  ByteWriter out;
  out.u64(r.ur);
  out.u64(r.hr);
  out.u64(r.ir);
  return out.take();
}

StatsReply decode_stats(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  StatsReply r;
  r.ur = in.u64();
  r.hr = in.u64();
  r.ir = in.u64();
  expect_done(in);
  return r;
}

std::vector<std::uint8_t> encode_err(const ErrReply& r) {
  ByteWriter out;
  out.u16(r.code);
  out.raw(r.message);
  return out.take();
}

ErrReply decode_err(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  ErrReply r;
  r.code = in.u16();
  r.message = in.str(in.remaining());
  return r;
}

ServeIndex::ServeIndex(LabelStore store, OrderPolicy policy) : store_(std::move(store)), policy_(policy) {
  if (!store_.header.calibration) throw Error(ErrorKind::state, "only calibrated stores can be served");
  store_.validate();
  for (const auto& img : store_.images)
    for (const auto& rec : img.crops) {
      flat_.push_back(&rec);
      max_probs_.push_back(teacher_max_prob(rec));
      const bool ur = *rec.status == CropStatus::UR;
      discarded_.push_back(ur ? 1 : 0);
      switch (*rec.status) {
        case CropStatus::UR: ++stats_.ur; break;
        case CropStatus::HR: ++stats_.hr; break;
        case CropStatus::IR: ++stats_.ir; break;
      }
    }
  hello_.num_classes = store_.header.num_classes;
  hello_.top_k = store_.header.top_k;
  hello_.bits = store_.header.bits;
  hello_.calibration = store_.header.calibration;
  hello_.servable = stats_.hr + stats_.ir;
}

std::vector<const CropRecord*> ServeIndex::epoch_order(std::uint64_t epoch_seed, std::uint32_t epoch) const {
  std::vector<const CropRecord*> out;
  if (flat_.empty()) return out;
  const auto idx = order_by_difficulty(max_probs_, discarded_, policy_, hash_combine(epoch_seed, epoch));
  out.reserve(hello_.servable);
  for (std::size_t i : idx)
    if (!discarded_[i]) out.push_back(flat_[i]);
  return out;
}

Frame ServeSession::error(WireError code, const std::string& message) const {
  return make_frame(Opcode::err, encode_err(ErrReply{static_cast<std::uint16_t>(code), message}));
}

std::vector<Frame> ServeSession::handle(const Frame& request) {
  if (closed_) return {};
  try {
    switch (static_cast<Opcode>(request.opcode)) {
      case Opcode::hello: {
        if (request.payload.size() >= 2) {
          ByteReader in(request.payload);
          const auto v = in.u16();
          if (v != protocol_version)
            return {error(WireError::bad_request, "unsupported protocol version " + std::to_string(v))};
        } else if (!request.payload.empty()) {
          return {error(WireError::malformed, "HELLO payload must be empty or a u16 version")};
        }
        greeted_ = true;
        return {make_frame(Opcode::hello, encode_hello_reply(index_->hello()))};
      }
      case Opcode::get_batch: {
        if (!greeted_) return {error(WireError::hello_required, "send HELLO first")};
        const auto req = decode_get_batch(request.payload);
        if (req.n == 0) return {error(WireError::bad_request, "batch size must be positive")};
        if (index_->servable() == 0) return {error(WireError::bad_request, "store has no servable records")};
        if (!seed_ || *seed_ != req.epoch_seed) {
          seed_ = req.epoch_seed;
          epoch_ = 0;
          order_ = index_->epoch_order(req.epoch_seed, epoch_);
          cursor_ = 0;
        } else if (cursor_ == order_.size()) {
          ++epoch_;
          order_ = index_->epoch_order(req.epoch_seed, epoch_);
          cursor_ = 0;
        }
        const std::size_t take = std::min<std::size_t>(req.n, order_.size() - cursor_);
        std::span<const CropRecord* const> slice(order_.data() + cursor_, take);
        cursor_ += take;
        return {make_frame(Opcode::batch, encode_batch(epoch_, slice))};
      }
      case Opcode::stats:
        if (!request.payload.empty()) return {error(WireError::malformed, "STATS takes no payload")};
        return {make_frame(Opcode::stats, encode_stats(index_->stats()))};
      case Opcode::bye:
        closed_ = true;
        return {make_frame(Opcode::bye)};
      case Opcode::batch:
      case Opcode::err:
        return {error(WireError::bad_request, "opcode is server-to-client only")};
    }
    return {error(WireError::unknown_opcode, "unknown opcode " + std::to_string(request.opcode))};
  } catch (const Error& e) {
    return {error(WireError::malformed, e.what())};
  }
}

}  // namespace ferkd
