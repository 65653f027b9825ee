#include "mural/link.hpp"

#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "mural/error.hpp"

namespace mural::link {

namespace {

void ensure_sodium() {
  if (sodium_init() < 0) throw Error(ErrorCode::io_error, "libsodium init failed");
}

template <typename T>
void put_be(Bytes& out, T v) {
  for (int s = static_cast<int>(sizeof(T)) * 8 - 8; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

template <typename T>
T get_be(std::span<const std::uint8_t> in, std::size_t at) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v = static_cast<T>((v << 8) | in[at + i]);
  return v;
}

std::array<std::uint8_t, kTagSize> compute_tag(const Frame& f, std::span<const std::uint8_t> key) {
  ensure_sodium();
  Bytes head;
  put_be(head, f.seq);
  put_be(head, f.timestamp_us);
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, head.data(), head.size());
  crypto_auth_hmacsha256_update(&st, f.payload.data(), f.payload.size());
  std::uint8_t full[crypto_auth_hmacsha256_BYTES];
  crypto_auth_hmacsha256_final(&st, full);
  std::array<std::uint8_t, kTagSize> tag;
  std::copy_n(full, kTagSize, tag.begin());
  sodium_memzero(&st, sizeof st);
  return tag;
}

bool in_outage(const std::vector<Outage>& outages, std::int64_t t) {
  return std::any_of(outages.begin(), outages.end(), [&](const Outage& o) { return t >= o.start_us && t < o.end_us; });
}

}  // namespace

Frame seal_frame(std::span<const std::uint8_t> payload, std::span<const std::uint8_t> key, std::uint32_t seq,
                 std::uint64_t timestamp_us) {
  if (key.empty()) throw Error(ErrorCode::invalid_argument, "empty link key");
  if (payload.size() > kMaxPayload) throw Error(ErrorCode::invalid_argument, "payload too large");
  Frame f;
  f.seq = seq;
  f.timestamp_us = timestamp_us;
  f.payload.assign(payload.begin(), payload.end());
  f.tag = compute_tag(f, key);
  return f;
}

Bytes open_frame(const Frame& frame, std::span<const std::uint8_t> key, std::optional<std::uint32_t> last_seq) {
  if (key.empty()) throw Error(ErrorCode::invalid_argument, "empty link key");
  const auto expect = compute_tag(frame, key);
  if (sodium_memcmp(expect.data(), frame.tag.data(), kTagSize) != 0) {
    throw Error(ErrorCode::tampered, "frame tag mismatch");
  }
  if (last_seq && frame.seq <= *last_seq) {
    throw Error(ErrorCode::replayed, "seq " + std::to_string(frame.seq) + " <= " + std::to_string(*last_seq));
  }
  return frame.payload;
}

Bytes encode_frame(const Frame& f) {
  if (f.payload.size() > kMaxPayload) throw Error(ErrorCode::invalid_argument, "payload too large");
  Bytes out;
  out.reserve(kHeaderSize + f.payload.size() + kTagSize);
  put_be(out, kMagic);
  out.push_back(kVersion);
  put_be(out, f.seq);
  put_be(out, f.timestamp_us);
  put_be(out, static_cast<std::uint16_t>(f.payload.size()));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  out.insert(out.end(), f.tag.begin(), f.tag.end());
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> wire) {
  if (wire.size() < kHeaderSize + kTagSize) throw Error(ErrorCode::malformed_frame, "frame too short");
  if (get_be<std::uint16_t>(wire, 0) != kMagic) throw Error(ErrorCode::malformed_frame, "bad magic");
  if (wire[2] != kVersion) throw Error(ErrorCode::malformed_frame, "unsupported version");
  const std::size_t len = get_be<std::uint16_t>(wire, 15);
  if (wire.size() != kHeaderSize + len + kTagSize) throw Error(ErrorCode::malformed_frame, "length mismatch");
  Frame f;
  f.seq = get_be<std::uint32_t>(wire, 3);
  f.timestamp_us = get_be<std::uint64_t>(wire, 7);
  f.payload.assign(wire.begin() + kHeaderSize, wire.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + len));
  std::copy_n(wire.begin() + static_cast<std::ptrdiff_t>(kHeaderSize + len), kTagSize, f.tag.begin());
  return f;
}

Bytes encode_camera(const CameraMessage& m) {
  Bytes out;
  put_be(out, m.capture_us);
  for (const auto& c : m.centers) {
    put_be(out, std::bit_cast<std::uint64_t>(c.x()));
    put_be(out, std::bit_cast<std::uint64_t>(c.y()));
  }
  return out;
}

CameraMessage decode_camera(std::span<const std::uint8_t> payload) {
  if (payload.size() != 8 * 7) throw Error(ErrorCode::malformed_frame, "camera payload size");
  CameraMessage m;
  m.capture_us = get_be<std::uint64_t>(payload, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    const double u = std::bit_cast<double>(get_be<std::uint64_t>(payload, 8 + 16 * i));
    const double v = std::bit_cast<double>(get_be<std::uint64_t>(payload, 16 + 16 * i));
    if (!std::isfinite(u) || !std::isfinite(v)) throw Error(ErrorCode::malformed_frame, "non-finite pixel");
    m.centers[i] = {u, v};
  }
  return m;
}

loc::LedTriple to_triple(const CameraMessage& m) {
  loc::LedTriple t;
  t.centers = m.centers;
  return t;
}

void ChannelConfig::validate() const {
  const auto bad = [](const char* what) { throw Error(ErrorCode::invalid_argument, what); };
  if (!(latency_mean >= 0) || !std::isfinite(latency_mean)) bad("latency_mean must be >= 0");
  if (!(latency_jitter >= 0) || !std::isfinite(latency_jitter)) bad("latency_jitter must be >= 0");
  if (!(drop_prob >= 0 && drop_prob <= 1)) bad("drop_prob must be in [0, 1]");
  if (!(bandwidth >= 0) || !std::isfinite(bandwidth)) bad("bandwidth must be >= 0");
  for (const auto& o : outages) {
    if (o.end_us < o.start_us) bad("outage ends before it starts");
  }
}

Channel::Channel(ChannelConfig config, std::uint64_t seed) : config_(std::move(config)), rng_(seed) {
  config_.validate();
}

std::optional<std::int64_t> Channel::transmit(Bytes wire, std::int64_t now_us) {
  ++sent_;
  // Draws happen for every frame so one channel's stream does not depend on
  // which frames were lost.
  const double u_drop = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  const double u_jit = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
  const bool capped = config_.bandwidth > 0 && last_accept_us_ &&
                      static_cast<double>(now_us - *last_accept_us_) < 1e6 / config_.bandwidth - 0.5;
  if (u_drop < config_.drop_prob || capped || in_outage(config_.outages, now_us)) {
    ++dropped_;
    return std::nullopt;
  }
  last_accept_us_ = now_us;
  const double delay = std::max(0.0, config_.latency_mean + config_.latency_jitter * u_jit);
  const std::int64_t at = now_us + std::llround(delay * 1e6);
  pending_.push_back({at, std::move(wire)});
  return at;
}

std::vector<Delivery> Channel::receive(std::int64_t now_us) {
  std::stable_sort(pending_.begin(), pending_.end(), [](const Delivery& a, const Delivery& b) { return a.at_us < b.at_us; });
  const auto split = std::find_if(pending_.begin(), pending_.end(), [&](const Delivery& d) { return d.at_us > now_us; });
  std::vector<Delivery> out(std::make_move_iterator(pending_.begin()), std::make_move_iterator(split));
  pending_.erase(pending_.begin(), split);
  return out;
}

void Channel::reseed(std::uint64_t seed) {
  rng_.seed(seed);
  clear();
}

void Channel::set_outages(std::vector<Outage> outages) {
  ChannelConfig cfg = config_;
  cfg.outages = std::move(outages);
  cfg.validate();
  config_ = std::move(cfg);
}

void Channel::clear() {
  pending_.clear();
  last_accept_us_.reset();
}

Receiver::Receiver(Bytes key) : key_(std::move(key)) {
  if (key_.empty()) throw Error(ErrorCode::invalid_argument, "empty link key");
}

std::optional<Received> Receiver::accept(std::span<const std::uint8_t> wire) {
  try {
    const Frame f = decode_frame(wire);
    Bytes payload = open_frame(f, key_, last_seq_);
    last_seq_ = f.seq;
    ++stats_.accepted;
    return Received{f.seq, f.timestamp_us, std::move(payload)};
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::tampered: ++stats_.tampered; break;
      case ErrorCode::replayed: ++stats_.replayed; break;
      default: ++stats_.malformed; break;
    }
    return std::nullopt;
  }
}

void Failover::offer(Source source, Received frame) {
  if (max_seq_ && frame.seq <= *max_seq_) return;
  if (best_ && frame.timestamp_us < best_->timestamp_us) return;
  max_seq_ = frame.seq;
  best_ = std::move(frame);
  best_source_ = source;
  unreported_ = true;
}

std::optional<Selection> Failover::select(std::int64_t now_us, std::int64_t timeout_us) {
  if (!best_) return std::nullopt;
  Selection s;
  s.frame = *best_;
  s.source = best_source_;
  s.stale = now_us - static_cast<std::int64_t>(best_->timestamp_us) > timeout_us;
  s.fresh = unreported_;
  unreported_ = false;
  return s;
}

void Failover::reset() {
  best_.reset();
  unreported_ = false;
}

std::optional<Selection> failover_select(std::span<const Received> primary, std::span<const Received> backup,
                                         std::int64_t now_us, std::int64_t timeout_us) {
  std::vector<std::pair<Source, const Received*>> all;
  for (const auto& r : primary) all.emplace_back(Source::primary, &r);
  for (const auto& r : backup) all.emplace_back(Source::backup, &r);
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.second->timestamp_us < b.second->timestamp_us; });
  Failover f;
  for (const auto& [src, r] : all) f.offer(src, *r);
  return f.select(now_us, timeout_us);
}

void LinkConfig::validate() const {
  primary.validate();
  backup.validate();
  if (!(backup_period > 0)) throw Error(ErrorCode::invalid_argument, "backup_period must be > 0");
  if (!(timeout > 0)) throw Error(ErrorCode::invalid_argument, "link timeout must be > 0");
  if (key.empty()) throw Error(ErrorCode::invalid_argument, "empty link key");
}

DualLink::DualLink(LinkConfig config, std::uint64_t seed)
    : config_((config.validate(), std::move(config))),
      primary_(config_.primary, seed),
      backup_(config_.backup, seed ^ 0x9E3779B97F4A7C15ull),
      rx_primary_(config_.key),
      rx_backup_(config_.key) {}

void DualLink::send(std::span<const std::uint8_t> payload, std::int64_t now_us) {
  const Frame f = seal_frame(payload, config_.key, next_seq_++, static_cast<std::uint64_t>(now_us));
  Bytes wire = encode_frame(f);
  const auto period = std::llround(config_.backup_period * 1e6);
  if (!last_backup_us_ || now_us - *last_backup_us_ >= period) {
    last_backup_us_ = now_us;
    backup_.transmit(wire, now_us);
  }
  primary_.transmit(std::move(wire), now_us);
}

std::optional<Selection> DualLink::poll(std::int64_t now_us) {
  for (auto& d : primary_.receive(now_us)) inject(Source::primary, d.wire);
  for (auto& d : backup_.receive(now_us)) inject(Source::backup, d.wire);
  return failover_.select(now_us, std::llround(config_.timeout * 1e6));
}

void DualLink::inject(Source source, std::span<const std::uint8_t> wire) {
  auto& rx = source == Source::primary ? rx_primary_ : rx_backup_;
  if (auto r = rx.accept(wire)) failover_.offer(source, std::move(*r));
}

void DualLink::reseed(std::uint64_t seed) {
  primary_.reseed(seed);
  backup_.reseed(seed ^ 0x9E3779B97F4A7C15ull);
  failover_.reset();
  last_backup_us_.reset();
}

void DualLink::set_outages(Source source, std::vector<Outage> outages) {
  (source == Source::primary ? config_.primary : config_.backup).outages = outages;
  (source == Source::primary ? primary_ : backup_).set_outages(std::move(outages));
}

}  // namespace mural::link
