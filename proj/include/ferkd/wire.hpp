#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ferkd/label_store.hpp"
#include "ferkd/region_sampler.hpp"

namespace ferkd {

// Batch-serving protocol. Every frame is
//
//   u32 payload length | u8 opcode | payload
//
// little-endian, length counting the payload only. Payloads:
//
//   HELLO      client: u16 protocol version (optional)
//              server: u16 version | u32 C | u16 K | u8 B | u8 calibrated
//                      | f64 t_low, t_mid, t_top, epsilon | u64 servable records
//   GET_BATCH  u32 n | u64 epoch_seed
//   BATCH      u32 epoch | u32 count | count x (u16 id length | id | crop)
//              where crop uses the label-store crop layout
//   STATS      client: empty;  server: u64 UR | u64 HR | u64 IR
//   ERR        u16 code | UTF-8 message
//   BYE        empty (server echoes, then closes)
enum class Opcode : std::uint8_t {
  hello = 1,
  get_batch = 2,
  batch = 3,
  stats = 4,
  err = 5,
  bye = 6,
};

inline constexpr std::uint16_t protocol_version = 1;
inline constexpr std::uint32_t max_frame_payload = 16u << 20;
inline constexpr std::size_t frame_header_size = 5;

enum class WireError : std::uint16_t {
  unknown_opcode = 1,
  malformed = 2,
  hello_required = 3,
  bad_request = 4,
  oversized = 5,
};

struct Frame {
  std::uint8_t opcode = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame make_frame(Opcode op, std::vector<std::uint8_t> payload = {});

// Incremental decoder for a byte stream. An announced length above
// max_frame_payload throws ErrorKind::protocol.
class FrameDecoder {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<Frame> next();
  std::size_t buffered() const noexcept { return buf_.size() - pos_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

struct HelloReply {
  std::uint16_t version = protocol_version;
  std::uint32_t num_classes = 0;
  std::uint16_t top_k = 0;
  std::uint8_t bits = 0;
  std::optional<CalibrationConfig> calibration;
  std::uint64_t servable = 0;

  bool operator==(const HelloReply&) const = default;
};

struct GetBatchRequest {
  std::uint32_t n = 0;
  std::uint64_t epoch_seed = 0;
};

struct BatchReply {
  std::uint32_t epoch = 0;
  std::vector<CropRecord> records;
};

struct StatsReply {
  std::uint64_t ur = 0, hr = 0, ir = 0;

  bool operator==(const StatsReply&) const = default;
};

struct ErrReply {
  std::uint16_t code = 0;
  std::string message;
};

std::vector<std::uint8_t> encode_hello_reply(const HelloReply& r);
HelloReply decode_hello_reply(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_get_batch(const GetBatchRequest& r);
GetBatchRequest decode_get_batch(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_batch(std::uint32_t epoch, std::span<const CropRecord* const> records);
// Rebuilds calibrated labels from the header announced in HELLO.
BatchReply decode_batch(std::span<const std::uint8_t> payload, const HelloReply& hello);
std::vector<std::uint8_t> encode_stats(const StatsReply& r);
StatsReply decode_stats(std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_err(const ErrReply& r);
ErrReply decode_err(std::span<const std::uint8_t> payload);

// Read-only view of a calibrated store prepared for serving; shared by all
// connections.
class ServeIndex {
 public:
  ServeIndex(LabelStore store, OrderPolicy policy);
  ServeIndex(const ServeIndex&) = delete;
  ServeIndex& operator=(const ServeIndex&) = delete;

  const LabelStore& store() const noexcept { return store_; }
  const HelloReply& hello() const noexcept { return hello_; }
  const StatsReply& stats() const noexcept { return stats_; }
  std::size_t servable() const noexcept { return hello_.servable; }

  // Non-UR records for one epoch in policy order.
  std::vector<const CropRecord*> epoch_order(std::uint64_t epoch_seed, std::uint32_t epoch) const;

 private:
  LabelStore store_;
  OrderPolicy policy_;
  std::vector<const CropRecord*> flat_;
  std::vector<double> max_probs_;
  std::vector<std::uint8_t> discarded_;
  HelloReply hello_;
  StatsReply stats_;
};

// Protocol state of one connection. Cursor state is private to the session;
// a GET_BATCH with a new epoch_seed restarts at epoch 0, and an exhausted
// epoch rolls over to the next one with a fresh order.
class ServeSession {
 public:
  explicit ServeSession(std::shared_ptr<const ServeIndex> index) : index_(std::move(index)) {}

  // Replies to one request frame. Protocol violations produce an ERR frame
  // and leave the session usable.
  std::vector<Frame> handle(const Frame& request);
  bool closed() const noexcept { return closed_; }

 private:
  Frame error(WireError code, const std::string& message) const;

  std::shared_ptr<const ServeIndex> index_;
  bool greeted_ = false;
  bool closed_ = false;
  std::optional<std::uint64_t> seed_;
  std::uint32_t epoch_ = 0;
  std::vector<const CropRecord*> order_;
  std::size_t cursor_ = 0;
};

}  // namespace ferkd
