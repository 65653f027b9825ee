#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mural/loc.hpp"

namespace mural::link {

using Bytes = std::vector<std::uint8_t>;

// Wire format, big-endian:
//   magic u16 | version u8 | seq u32 | timestamp_us u64 | len u16 | payload | tag[16]
inline constexpr std::uint16_t kMagic = 0x4D4C;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 17;
inline constexpr std::size_t kTagSize = 16;
inline constexpr std::size_t kMaxPayload = 0xFFFF;

struct Frame {
  std::uint32_t seq = 0;
  std::uint64_t timestamp_us = 0;
  Bytes payload;
  std::array<std::uint8_t, kTagSize> tag{};
};

/// Tag is HMAC-SHA256 over (seq || timestamp || payload), truncated to 128
/// bits. Throws InvalidArgument for an empty key or oversize payload.
Frame seal_frame(std::span<const std::uint8_t> payload, std::span<const std::uint8_t> key, std::uint32_t seq,
                 std::uint64_t timestamp_us);

/// Constant-time tag check, then seq > last_seq. Throws Tampered, Replayed.
Bytes open_frame(const Frame& frame, std::span<const std::uint8_t> key, std::optional<std::uint32_t> last_seq);

Bytes encode_frame(const Frame& frame);
/// Throws MalformedFrame on bad magic, version, or length.
Frame decode_frame(std::span<const std::uint8_t> wire);

/// Ground-station camera observation carried to the drone.
struct CameraMessage {
  std::uint64_t capture_us = 0;
  std::array<Eigen::Vector2d, 3> centers;
};
Bytes encode_camera(const CameraMessage& m);
/// Throws MalformedFrame.
CameraMessage decode_camera(std::span<const std::uint8_t> payload);
loc::LedTriple to_triple(const CameraMessage& m);

struct Outage {
  std::int64_t start_us = 0;
  std::int64_t end_us = 0;
};

struct ChannelConfig {
  double latency_mean = 0.02;
  /// Delivery delay is latency_mean + U(-jitter, jitter), floored at 0.
  double latency_jitter = 0.0;
  double drop_prob = 0.0;
  /// Messages per second; 0 means uncapped. Frames over the cap are dropped.
  double bandwidth = 0.0;
  /// Frames sent inside [start, end) are lost.
  std::vector<Outage> outages;

  /// Throws InvalidArgument.
  void validate() const;
  double max_delay() const { return latency_mean + latency_jitter; }
};

struct Delivery {
  std::int64_t at_us = 0;
  Bytes wire;
};

/// Simulated one-way channel driven by the simulation clock.
class Channel {
 public:
  Channel(ChannelConfig config, std::uint64_t seed);

  /// Returns the scheduled delivery time, or nothing when the frame is lost.
  std::optional<std::int64_t> transmit(Bytes wire, std::int64_t now_us);
  /// Deliveries due at or before now, in delivery-time order.
  std::vector<Delivery> receive(std::int64_t now_us);
  void reseed(std::uint64_t seed);
  void clear();
  void set_outages(std::vector<Outage> outages);

  const ChannelConfig& config() const { return config_; }
  std::size_t sent() const { return sent_; }
  std::size_t dropped() const { return dropped_; }

 private:
  ChannelConfig config_;
  std::mt19937_64 rng_;
  std::vector<Delivery> pending_;
  std::optional<std::int64_t> last_accept_us_;
  std::size_t sent_ = 0;
  std::size_t dropped_ = 0;
};

struct Received {
  std::uint32_t seq = 0;
  std::uint64_t timestamp_us = 0;
  Bytes payload;
};

struct ReceiverStats {
  std::size_t accepted = 0;
  std::size_t tampered = 0;
  std::size_t replayed = 0;
  std::size_t malformed = 0;
};

/// Drone-side endpoint of one channel: decode, authenticate, replay check.
class Receiver {
 public:
  explicit Receiver(Bytes key);
  /// Rejected frames are counted, never returned.
  std::optional<Received> accept(std::span<const std::uint8_t> wire);
  void reset() { last_seq_.reset(); }

  const ReceiverStats& stats() const { return stats_; }
  std::optional<std::uint32_t> last_seq() const { return last_seq_; }

 private:
  Bytes key_;
  std::optional<std::uint32_t> last_seq_;
  ReceiverStats stats_;
};

enum class Source { primary, backup };

struct Selection {
  Received frame;
  Source source = Source::primary;
  bool stale = false;
  /// Set when this call produced a frame not returned before.
  bool fresh = false;
};

/// Newest-by-timestamp across both channels, deduplicated by seq. The
/// selected timestamp never decreases.
class Failover {
 public:
  void offer(Source source, Received frame);
  /// Nothing until the first frame. Stale when now - timestamp > timeout.
  std::optional<Selection> select(std::int64_t now_us, std::int64_t timeout_us);
  void reset();

 private:
  std::optional<Received> best_;
  Source best_source_ = Source::primary;
  bool unreported_ = false;
  std::optional<std::uint32_t> max_seq_;
};

std::optional<Selection> failover_select(std::span<const Received> primary, std::span<const Received> backup,
                                         std::int64_t now_us, std::int64_t timeout_us);

struct LinkConfig {
  ChannelConfig primary{0.02, 0.005, 0.0, 0.0, {}};
  ChannelConfig backup{0.03, 0.01, 0.0, 10.0, {}};
  /// Ground station sends on the backup every backup_period.
  double backup_period = 0.1;
  double timeout = 0.15;
  Bytes key{'m', 'u', 'r', 'a', 'l', '-', 'l', 'i', 'n', 'k', '-', 'k', 'e', 'y', '-', '0'};

  void validate() const;
};

/// Ground station to drone: one sealed stream fanned out on both channels.
class DualLink {
 public:
  DualLink(LinkConfig config, std::uint64_t seed);

  /// Seals the payload with the next seq and sends it on the primary, and on
  /// the backup when its period has elapsed.
  void send(std::span<const std::uint8_t> payload, std::int64_t now_us);
  /// Delivers due frames into the failover selector.
  std::optional<Selection> poll(std::int64_t now_us);
  void reseed(std::uint64_t seed);
  void set_outages(Source source, std::vector<Outage> outages);

  const LinkConfig& config() const { return config_; }
  const Channel& channel(Source s) const { return s == Source::primary ? primary_ : backup_; }
  const Receiver& receiver(Source s) const { return s == Source::primary ? rx_primary_ : rx_backup_; }
  /// Injects raw bytes as if received on a channel (bench tests).
  void inject(Source source, std::span<const std::uint8_t> wire);

 private:
  LinkConfig config_;
  Channel primary_;
  Channel backup_;
  Receiver rx_primary_;
  Receiver rx_backup_;
  Failover failover_;
  std::uint32_t next_seq_ = 0;
  std::optional<std::int64_t> last_backup_us_;
};

}  // namespace mural::link
