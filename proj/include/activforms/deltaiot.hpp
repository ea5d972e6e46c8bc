#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "activforms/engine.hpp"
#include "activforms/rng.hpp"
#include "activforms/typecheck.hpp"

namespace activforms::deltaiot {

// ---------------------------------------------------------------------------
// Topology
// ---------------------------------------------------------------------------

struct LinkSpec {
  int source = 0;
  int destination = 0;
  double snr_alpha = -7.29; // SNR = alpha + beta * power, calibrated per link
  double snr_beta = 0.83;
};

struct Topology {
  int gateway_id = 1;
  int mote_count = 0; // including the gateway
  std::vector<LinkSpec> links;

  std::vector<int> mote_ids() const { // non-gateway, ascending
    std::vector<int> ids;
    for (int m = 2; m <= mote_count; ++m) ids.push_back(m);
    return ids;
  }

  std::vector<int> parent_links_of(int mote) const {
    std::vector<int> out;
    for (size_t l = 0; l < links.size(); ++l)
      if (links[l].source == mote) out.push_back(static_cast<int>(l));
    return out;
  }

  std::vector<int> child_links_of(int mote) const {
    std::vector<int> out;
    for (size_t l = 0; l < links.size(); ++l)
      if (links[l].destination == mote) out.push_back(static_cast<int>(l));
    return out;
  }

  int find_link(int source, int destination) const {
    for (size_t l = 0; l < links.size(); ++l)
      if (links[l].source == source && links[l].destination == destination)
        return static_cast<int>(l);
    return -1;
  }

  std::vector<int> multi_parent_motes() const {
    std::vector<int> out;
    for (int m : mote_ids())
      if (parent_links_of(m).size() > 1) out.push_back(m);
    return out;
  }

  /// Child-before-parent mote order for cycle simulation (topological on the
  /// routing DAG, deepest motes first).
  std::vector<int> turn_order() const {
    std::vector<int> order;
    std::map<int, int> depth; // hops to gateway (max over routes)
    std::function<int(int)> hops = [&](int mote) -> int {
      if (mote == gateway_id) return 0;
      auto it = depth.find(mote);
      if (it != depth.end()) return it->second;
      depth[mote] = 0; // cycle guard
      int best = 0;
      for (int l : parent_links_of(mote)) best = std::max(best, 1 + hops(links[l].destination));
      depth[mote] = best;
      return best;
    };
    std::vector<int> ids = mote_ids();
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return hops(a) > hops(b); });
    return ids;
  }
};

/// The deployed 15-mote network: gateway 1, two-parent motes 7, 10, and 12.
inline Topology default_topology() {
  Topology t;
  t.mote_count = 15;
  auto L = [](int s, int d, double alpha, double beta) {
    return LinkSpec{s, d, alpha, beta};
  };
  t.links = {
      L(2, 4, -7.3, 0.83),  L(3, 1, -6.1, 0.78),  L(4, 1, -5.2, 0.72),
      L(5, 9, -8.4, 0.86),  L(6, 4, -6.8, 0.80),  L(7, 2, -4.9, 0.70),
      L(7, 3, -9.8, 0.92),  L(8, 1, -5.6, 0.74),  L(9, 1, -6.4, 0.79),
      L(10, 6, -5.0, 0.71), L(10, 5, -8.9, 0.88), L(11, 7, -7.0, 0.81),
      L(12, 7, -5.3, 0.73), L(12, 3, -9.2, 0.90), L(13, 11, -6.6, 0.80),
      L(14, 12, -7.6, 0.84), L(15, 12, -6.0, 0.77),
  };
  return t;
}

/// Scaled topologies for the adaptation-space sweeps: m total motes (gateway
/// included), one two-parent mote per block of five.
inline Topology scaled_topology(int m) {
  if (m < 5 || m % 5 != 0)
    throw Error(Error::Kind::ConfigError, "scaled topologies need m in {5,10,15,...}");
  Topology t;
  t.mote_count = m;
  int blocks = m / 5;
  auto alpha_of = [](int i) { return -(4.0 + static_cast<double>((i * 3) % 7)); };
  auto beta_of = [](int i) { return 0.70 + 0.04 * static_cast<double>(i % 5); };
  int next = 2;
  int li = 0;
  auto add = [&](int s, int d) {
    t.links.push_back({s, d, alpha_of(li), beta_of(li)});
    ++li;
  };
  // first block: 4 motes
  {
    int w = next++, x = next++, y = next++, z = next++;
    add(x, 1);
    add(y, 1);
    add(w, x);
    add(w, y);
    add(z, x);
  }
  for (int b = 1; b < blocks; ++b) {
    int a = next++, bb = next++, c = next++, d = next++, e = next++;
    add(bb, 1);
    add(c, 1);
    add(a, bb);
    add(a, c);
    add(d, a);
    add(e, d);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Settings, profiles, QoS
// ---------------------------------------------------------------------------

struct LinkSetting {
  int power = 15;        // 0..15
  int distribution = 100; // 0..100 in steps of 20

  bool operator==(const LinkSetting& o) const = default;
};

using Settings = std::vector<LinkSetting>; // indexed like Topology::links

inline Settings reference_settings(const Topology& t) {
  // R4 failsafe: maximum power, duplicate packets to all parents
  return Settings(t.links.size(), LinkSetting{15, 100});
}

struct UncertaintyProfile {
  struct MoteLoad {
    double base = 0.8;      // mean traffic probability
    double amplitude = 0.0; // sinusoidal swing
    double period = 38.0;   // cycles
    double phase = 0.0;
  };
  struct LinkNoise {
    double mean = 0.0;
    double sigma = 2.0; // dB
  };
  std::map<int, MoteLoad> loads;      // keyed by mote id; missing -> default_load
  std::map<int, LinkNoise> noise;     // keyed by link index; missing -> default_noise
  MoteLoad default_load{};
  LinkNoise default_noise{};

  double ptraffic(int mote, int64_t cycle) const {
    auto it = loads.find(mote);
    const MoteLoad& l = it != loads.end() ? it->second : default_load;
    double v = l.base;
    if (l.amplitude != 0 && l.period > 0)
      v += l.amplitude * std::sin(2.0 * M_PI * (static_cast<double>(cycle) + l.phase) / l.period);
    return std::clamp(v, 0.0, 1.0);
  }

  const LinkNoise& link_noise(int link) const {
    auto it = noise.find(link);
    return it != noise.end() ? it->second : default_noise;
  }
};

struct QoSRecord {
  int64_t period = 0;      // index of the aggregation window
  double packet_loss = 0;  // fraction [0,1]
  double energy = 0;       // coulomb
  double latency = 0;      // fraction [0,1]
};

// ---------------------------------------------------------------------------
// Analytic formulas (shared by simulator, quality models, and oracles)
// ---------------------------------------------------------------------------

inline constexpr double kSnrFloor = -50.0;
inline constexpr double kSnrCeiling = 40.0;
inline constexpr double kSfTimeSeconds = 0.258;
inline constexpr int kPacketsPerCycle = 10;
inline constexpr int kSendQueueCapacity = 60;
inline constexpr int kReceiveQueueCapacity = 60;
inline constexpr int kBufferCapacity = 10;
inline constexpr int kSlotsPerLink = 40;
inline constexpr double kDefaultListeningCoulomb = 1.2; // per cycle, whole network

/// Power consumption rate (mA) per transmission power setting 0..15.
inline const std::array<double, 16>& pcr_table() {
  static const std::array<double, 16> pcr = {20.2, 21.2, 22.3, 23.7, 24.7, 26.1, 27.5, 28.8,
                                             30.0, 31.2, 32.4, 33.7, 35.1, 36.5, 38.0, 38.9};
  return pcr;
}

inline double clamp_snr(double snr) { return std::clamp(snr, kSnrFloor, kSnrCeiling); }

/// Per-hop packet failure probability from the link SNR (dB):
/// 0 when snr >= 0, 1 when snr <= -50, otherwise -snr/20 clamped into [0,1].
inline double link_failure_rate(double snr) {
  snr = clamp_snr(snr);
  if (snr >= 0) return 0.0;
  if (snr <= kSnrFloor) return 1.0;
  return std::min(1.0, -snr / 20.0);
}

/// Energy (coulomb) to transmit `packets` at a power setting.
inline double transmission_energy(int64_t packets, int power) {
  if (power < 0 || power > 15)
    throw Error(Error::Kind::RangeError, "power setting outside 0..15");
  if (packets < 0) throw Error(Error::Kind::RangeError, "negative packet count");
  return static_cast<double>(packets) * kSfTimeSeconds * pcr_table()[power] / 1000.0;
}

// Integer quantizations shared bit-for-bit between the runtime quality models
// and the analytic oracle.
inline int64_t quantize_snr_tenths(double snr) {
  return llround(clamp_snr(snr) * 10.0);
}
inline int64_t quantize_permille(double p) {
  return llround(std::clamp(p, 0.0, 1.0) * 1000.0);
}
inline int64_t source_weight_permille(double ptraffic) {
  return quantize_permille(ptraffic);
}
inline int64_t failure_permille_from_tenths(int64_t snr_tenths) {
  if (snr_tenths >= 0) return 0;
  return std::min<int64_t>(1000, -snr_tenths * 5);
}

// ---------------------------------------------------------------------------
// Packet-loss oracle: exact expectation by path enumeration
// ---------------------------------------------------------------------------

struct QualityInputs {
  std::vector<double> link_snr;     // effective SNR per link (dB) at the option's power
  std::vector<double> mote_ptraffic; // indexed by mote id (0..mote_count)
  std::vector<int64_t> mote_queue;  // current queue length per mote id (latency model)
};

/// Exact probability that a transmission initiated by a random traffic-gated
/// mote is lost before reaching the gateway. Sources weighted by pTraffic,
/// routing branches by distribution fractions; survival multiplies per hop.
inline double oracle_expected_packet_loss(const Topology& t, const Settings& settings,
                                          const QualityInputs& inputs) {
  if (t.links.empty() || t.mote_count < 2)
    throw Error(Error::Kind::EmptyTopology, "topology has no links");
  std::vector<double> rate(t.links.size());
  for (size_t l = 0; l < t.links.size(); ++l)
    rate[l] = static_cast<double>(failure_permille_from_tenths(
                  quantize_snr_tenths(inputs.link_snr[l]))) /
              1000.0;

  std::vector<int> mark(static_cast<size_t>(t.mote_count) + 1, 0); // 0 new, 1 visiting, 2 done
  std::vector<double> survival(static_cast<size_t>(t.mote_count) + 1, 0.0);
  std::function<double(int)> surv = [&](int mote) -> double {
    if (mote == t.gateway_id) return 1.0;
    if (mark[mote] == 1) throw Error(Error::Kind::CycleDetected, "routing graph has a cycle");
    if (mark[mote] == 2) return survival[mote];
    mark[mote] = 1;
    auto parents = t.parent_links_of(mote);
    double total_dist = 0;
    for (int l : parents) total_dist += settings[l].distribution;
    double s = 0;
    if (total_dist > 0) {
      for (int l : parents) {
        double frac = settings[l].distribution / total_dist;
        s += frac * (1.0 - rate[l]) * surv(t.links[l].destination);
      }
    }
    mark[mote] = 2;
    survival[mote] = s;
    return s;
  };

  double weight_total = 0, survive_total = 0;
  for (int m : t.mote_ids()) {
    double w = static_cast<double>(source_weight_permille(inputs.mote_ptraffic[m]));
    weight_total += w;
    survive_total += w * surv(m);
  }
  if (weight_total <= 0) return 0.0;
  return 1.0 - survive_total / weight_total;
}

// ---------------------------------------------------------------------------
// Discrete-event simulator of the managed system
// ---------------------------------------------------------------------------

struct SimulatorConfig {
  uint64_t seed = 1;
  double listening_coulomb_per_cycle = kDefaultListeningCoulomb;
  bool exact_fraction_routing = false; // test hook: skip the 20%-step check
};

struct CycleStats {
  int64_t cycle = 0;
  int64_t generated = 0;
  int64_t delivered = 0;
  int64_t delivered_late = 0;
  int64_t lost_air = 0;
  int64_t dropped_queue = 0;
  int64_t pending_start = 0;
  int64_t pending_end = 0;
  double energy = 0;
  double packet_loss = 0;
  double latency = 0;
};

struct MoteDescriptor {
  int id = 0;
  int traffic = 0;        // packets generated last cycle (0..10)
  double ptraffic = 0;    // current traffic probability
  double energy = 0;      // coulomb consumed last cycle
  int64_t queue_length = 0;
  struct LinkView {
    int source, destination;
    int power;
    int distribution;
    double snr;
  };
  std::vector<LinkView> links;
};

class Simulator {
public:
  Simulator(Topology topology, UncertaintyProfile profile, SimulatorConfig cfg = {})
      : t_(std::move(topology)), profile_(std::move(profile)), cfg_(cfg), rng_(cfg.seed) {
    settings_ = reference_settings(t_);
    staged_settings_ = settings_;
    motes_.resize(static_cast<size_t>(t_.mote_count) + 1);
    snr_.resize(t_.links.size());
    resample_snr();
    turn_order_ = t_.turn_order();
  }

  const Topology& topology() const { return t_; }
  const Settings& settings() const { return settings_; }
  int64_t cycle() const { return cycle_; }
  double link_snr(int link) const { return snr_[link]; }
  const std::vector<CycleStats>& history() const { return history_; }
  const UncertaintyProfile& profile() const { return profile_; }
  double current_ptraffic(int mote) const { return profile_.ptraffic(mote, cycle_); }

  // -- probe -------------------------------------------------------------------

  std::vector<MoteDescriptor> get_all_motes() const {
    std::vector<MoteDescriptor> out;
    for (int m : t_.mote_ids()) {
      MoteDescriptor d;
      d.id = m;
      d.traffic = motes_[m].traffic_last;
      d.ptraffic = profile_.ptraffic(m, std::max<int64_t>(cycle_ - 1, 0));
      d.energy = motes_[m].energy_last;
      d.queue_length = static_cast<int64_t>(motes_[m].receive_queue.size() +
                                            motes_[m].send_queue.size() +
                                            motes_[m].buffer.size());
      for (int l : t_.parent_links_of(m))
        d.links.push_back({t_.links[l].source, t_.links[l].destination, settings_[l].power,
                           settings_[l].distribution, snr_[l]});
      out.push_back(std::move(d));
    }
    return out;
  }

  /// Aggregated QoS per completed window of `period_cycles` cycles.
  std::vector<QoSRecord> get_network_qos(int64_t period_cycles) const {
    if (period_cycles <= 0) throw Error(Error::Kind::UnknownPeriod, "period must be positive");
    std::vector<QoSRecord> out;
    int64_t windows = static_cast<int64_t>(history_.size()) / period_cycles;
    for (int64_t w = 0; w < windows; ++w) {
      QoSRecord rec;
      rec.period = w;
      int64_t gen = 0, lost = 0, delivered = 0, late = 0;
      double energy = 0;
      for (int64_t c = w * period_cycles; c < (w + 1) * period_cycles; ++c) {
        const CycleStats& s = history_[static_cast<size_t>(c)];
        gen += s.generated;
        lost += s.lost_air + s.dropped_queue;
        delivered += s.delivered;
        late += s.delivered_late;
        energy += s.energy;
      }
      rec.packet_loss = gen > 0 ? std::min(1.0, static_cast<double>(lost) / gen) : 0.0;
      rec.latency = delivered > 0 ? static_cast<double>(late) / delivered : 0.0;
      rec.energy = energy / static_cast<double>(period_cycles);
      out.push_back(rec);
    }
    return out;
  }

  // -- effector ------------------------------------------------------------------

  void set_mote_settings(int mote_id, const std::vector<std::pair<int, LinkSetting>>& link_settings) {
    if (mote_id <= 1 || mote_id > t_.mote_count)
      throw Error(Error::Kind::UnknownMote, "unknown mote " + std::to_string(mote_id));
    for (const auto& [link, s] : link_settings) {
      if (link < 0 || link >= static_cast<int>(t_.links.size()) || t_.links[link].source != mote_id)
        throw Error(Error::Kind::UnknownMote,
                    "link " + std::to_string(link) + " does not belong to mote " +
                        std::to_string(mote_id));
      if (s.power < 0 || s.power > 15)
        throw Error(Error::Kind::RangeError, "power outside 0..15");
      if (s.distribution < 0 || s.distribution > 100 ||
          (!cfg_.exact_fraction_routing && s.distribution % 20 != 0))
        throw Error(Error::Kind::RangeError, "distribution must be a 20% step in 0..100");
      staged_settings_[link] = s;
    }
  }

  void reset_default_configuration() { staged_settings_ = reference_settings(t_); }

  // -- cycle --------------------------------------------------------------------

  CycleStats simulate_cycle() {
    settings_ = staged_settings_; // settings apply from the next cycle after staging
    CycleStats stats;
    stats.cycle = cycle_;
    stats.pending_start = pending_count();
    for (int m : t_.mote_ids()) {
      motes_[m].energy_last = 0;
      motes_[m].traffic_last = 0;
    }

    // 1. generation: Bernoulli(pTraffic) gates a 10-packet burst per mote
    for (int m : t_.mote_ids()) {
      double p = profile_.ptraffic(m, cycle_);
      if (rng_.bernoulli(p)) {
        for (int k = 0; k < kPacketsPerCycle; ++k) {
          int64_t uid = next_uid_++;
          stats.generated += 1;
          if (motes_[m].buffer.size() >= static_cast<size_t>(kBufferCapacity)) {
            stats.dropped_queue += 1; // sensing continues, storage does not
            continue;
          }
          motes_[m].buffer.push_back({uid, cycle_});
          copy_ledger_[uid] = 1;
        }
        motes_[m].traffic_last = kPacketsPerCycle;
      }
    }

    // 2. transmissions in child-before-parent order
    for (int m : turn_order_) transmit_mote(m, stats);

    // 3. listening energy, evenly attributed to the sending motes
    double listen_share =
        cfg_.listening_coulomb_per_cycle / static_cast<double>(t_.mote_count - 1);
    for (int m : t_.mote_ids()) {
      motes_[m].energy_last += listen_share;
      stats.energy += motes_[m].energy_last;
    }

    // 4. SNR resample for the next cycle
    resample_snr();

    stats.pending_end = pending_count();
    stats.packet_loss =
        stats.generated > 0
            ? std::min(1.0, static_cast<double>(stats.lost_air + stats.dropped_queue) /
                                static_cast<double>(stats.generated))
            : 0.0;
    stats.latency = stats.delivered > 0
                        ? static_cast<double>(stats.delivered_late) /
                              static_cast<double>(stats.delivered)
                        : 0.0;
    history_.push_back(stats);
    ++cycle_;
    return stats;
  }

  int64_t pending_count() const {
    int64_t n = 0;
    for (int m : t_.mote_ids())
      n += static_cast<int64_t>(motes_[m].buffer.size() + motes_[m].receive_queue.size() +
                                motes_[m].send_queue.size());
    return n;
  }

  /// Unique packets neither delivered nor fully lost yet (conservation checks
  /// in duplication mode, where queue entries count copies).
  int64_t unresolved_undelivered_count() const {
    int64_t n = 0;
    for (const auto& [uid, _] : copy_ledger_)
      if (!delivered_uids_.count(uid)) ++n;
    return n;
  }

private:
  struct Packet {
    int64_t uid;
    int64_t gen_cycle;
  };

  struct MoteState {
    std::deque<Packet> buffer;
    std::deque<Packet> receive_queue;
    std::deque<Packet> send_queue;
    int traffic_last = 0;
    double energy_last = 0;
  };

  void resample_snr() {
    for (size_t l = 0; l < t_.links.size(); ++l) {
      const auto& noise = profile_.link_noise(static_cast<int>(l));
      double mean = t_.links[l].snr_alpha +
                    t_.links[l].snr_beta * static_cast<double>(settings_[l].power);
      snr_[l] = clamp_snr(mean + rng_.normal(noise.mean, noise.sigma));
    }
  }

  void transmit_mote(int m, CycleStats& stats) {
    MoteState& mote = motes_[m];
    // fill the send queue: buffer first, then receive queue
    while (!mote.buffer.empty() &&
           mote.send_queue.size() < static_cast<size_t>(kSendQueueCapacity)) {
      mote.send_queue.push_back(mote.buffer.front());
      mote.buffer.pop_front();
    }
    while (!mote.receive_queue.empty() &&
           mote.send_queue.size() < static_cast<size_t>(kSendQueueCapacity)) {
      mote.send_queue.push_back(mote.receive_queue.front());
      mote.receive_queue.pop_front();
    }
    auto parents = t_.parent_links_of(m);
    if (parents.empty()) return;
    int64_t queue_len = static_cast<int64_t>(mote.send_queue.size());
    if (queue_len == 0) return;

    int total_dist = 0;
    for (int l : parents) total_dist += settings_[l].distribution;
    if (total_dist <= 0) return; // nothing routed; packets stay queued

    if (total_dist > 100) {
      // duplication mode (reference configuration): every active link carries
      // a copy of the same leading packets
      std::vector<int> active;
      for (int l : parents)
        if (settings_[l].distribution > 0) active.push_back(l);
      int64_t n = std::min<int64_t>(queue_len, kSlotsPerLink);
      for (int64_t i = 0; i < n; ++i)
        copy_ledger_[mote.send_queue[static_cast<size_t>(i)].uid] +=
            static_cast<int>(active.size()) - 1;
      for (int l : active) {
        for (int64_t i = 0; i < n; ++i)
          send_packet(mote.send_queue[static_cast<size_t>(i)], l, stats);
        mote.energy_last += transmission_energy(n, settings_[l].power);
      }
      for (int64_t i = 0; i < n; ++i) mote.send_queue.pop_front();
      return;
    }

    // partitioned routing: largest-remainder apportionment over the queue
    std::vector<int64_t> share(parents.size(), 0);
    int64_t assigned = 0;
    std::vector<std::pair<double, size_t>> remainders;
    for (size_t i = 0; i < parents.size(); ++i) {
      double exact = static_cast<double>(queue_len) *
                     static_cast<double>(settings_[parents[i]].distribution) /
                     static_cast<double>(total_dist);
      share[i] = static_cast<int64_t>(exact);
      remainders.push_back({exact - static_cast<double>(share[i]), i});
      assigned += share[i];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    int64_t leftover = (total_dist == 100 ? queue_len : (queue_len * total_dist) / 100) - assigned;
    for (size_t i = 0; i < remainders.size() && leftover > 0; ++i, --leftover)
      share[remainders[i].second] += 1;
    for (auto& s : share) s = std::min<int64_t>(s, kSlotsPerLink);

    for (size_t i = 0; i < parents.size(); ++i) {
      int link = parents[i];
      int64_t n = std::min<int64_t>(share[i], static_cast<int64_t>(mote.send_queue.size()));
      for (int64_t k = 0; k < n; ++k) {
        Packet p = mote.send_queue.front();
        mote.send_queue.pop_front();
        send_packet(p, link, stats);
      }
      if (n > 0) mote.energy_last += transmission_energy(n, settings_[link].power);
    }
  }

  void send_packet(const Packet& p, int link, CycleStats& stats) {
    int dst = t_.links[link].destination;
    double rate = link_failure_rate(snr_[link]);
    bool lost = rng_.bernoulli(rate);
    if (lost) {
      resolve_copy(p, stats, /*delivered=*/false, /*queue_drop=*/false);
      return;
    }
    if (dst == t_.gateway_id) {
      resolve_copy(p, stats, /*delivered=*/true, false);
      return;
    }
    MoteState& parent = motes_[dst];
    if (parent.receive_queue.size() >= static_cast<size_t>(kReceiveQueueCapacity)) {
      resolve_copy(p, stats, false, /*queue_drop=*/true);
      return;
    }
    parent.receive_queue.push_back(p); // copy stays outstanding in the ledger
  }

  void resolve_copy(const Packet& p, CycleStats& stats, bool delivered, bool queue_drop) {
    if (delivered && !delivered_uids_.count(p.uid)) {
      delivered_uids_.insert(p.uid);
      stats.delivered += 1;
      if (p.gen_cycle < cycle_) stats.delivered_late += 1;
    }
    auto it = copy_ledger_.find(p.uid);
    int remaining = (it == copy_ledger_.end() ? 1 : it->second) - 1;
    if (remaining <= 0) {
      // the packet is fully resolved: classify it as lost only if no copy
      // ever made it to the gateway
      if (!delivered_uids_.count(p.uid)) {
        if (queue_drop) stats.dropped_queue += 1;
        else stats.lost_air += 1;
      }
      copy_ledger_.erase(p.uid);
      delivered_uids_.erase(p.uid);
    } else {
      copy_ledger_[p.uid] = remaining;
    }
  }

  Topology t_;
  UncertaintyProfile profile_;
  SimulatorConfig cfg_;
  Rng rng_;
  Settings settings_, staged_settings_;
  std::vector<MoteState> motes_;
  std::vector<double> snr_;
  std::vector<int> turn_order_;
  std::vector<CycleStats> history_;
  int64_t cycle_ = 0;
  int64_t next_uid_ = 1;
  std::unordered_map<int64_t, int> copy_ledger_;
  std::unordered_set<int64_t> delivered_uids_;
};

// ---------------------------------------------------------------------------
// Quality model generation (stochastic timed automata over the topology)
// ---------------------------------------------------------------------------

/// Emits the packet-loss quality model: a Topology automaton walking one
/// transmission from a pTraffic-weighted source to the gateway, and a Network
/// automaton deciding per-hop loss from the bound SNR values.
inline std::string packet_loss_model_text(const Topology& t) {
  std::ostringstream o;
  size_t L = t.links.size();
  o << "// packet-loss quality model (generated from the topology)\n";
  o << "const int NLINKS = " << L << ";\n";
  o << "const int GATEWAY = " << t.gateway_id << ";\n";
  auto table = [&](const char* name, auto value) {
    o << "const int " << name << "[" << L << "] = { ";
    for (size_t l = 0; l < L; ++l) o << (l ? ", " : "") << value(l);
    o << " };\n";
  };
  table("linkSrc", [&](size_t l) { return t.links[l].source; });
  table("linkDst", [&](size_t l) { return t.links[l].destination; });
  o << "const int linkSNRt[" << L << "] = { ";
  for (size_t l = 0; l < L; ++l) o << (l ? ", " : "") << 0;
  o << " };\n";
  o << "const int linkDist[" << L << "] = { ";
  for (size_t l = 0; l < L; ++l) o << (l ? ", " : "") << 100;
  o << " };\n";
  o << "const int srcWeight[" << t.mote_count + 1 << "] = { ";
  for (int m = 0; m <= t.mote_count; ++m) o << (m ? ", " : "") << (m >= 2 ? 1 : 0);
  o << " };\n";
  o << "const int srcWeightTotal = 1;\n";
  o << "int sndr = 0;\nint rcvr = 0;\nint hopLink = 0;\n";
  o << "broadcast chan data;\nbroadcast chan done;\n";
  o << "int failRate(int l) {\n"
       "  if (linkSNRt[l] >= 0) {\n    return 0;\n  }\n"
       "  return 1000 <? (0 - linkSNRt[l]) * 5;\n"
       "}\n";
  o << "automaton TopologyWalk {\n";
  o << "  int cur = 0;\n";
  o << "  init committed location Start;\n";
  o << "  committed location Choose;\n";
  o << "  committed location Send;\n";
  o << "  location Wait;\n";
  o << "  committed location Resume;\n";
  o << "  location Delivered;\n";
  // no traffic at all: the walk ends without a transmission
  o << "  edge Start -> Delivered {\n    guard srcWeightTotal == 0;\n    weight 1;\n  }\n";
  for (int m : t.mote_ids())
    o << "  edge Start -> Choose {\n    guard srcWeightTotal > 0;\n    weight srcWeight["
      << m << "];\n    update cur = " << m << ";\n  }\n";
  for (size_t l = 0; l < L; ++l) {
    o << "  edge Choose -> Send {\n    guard cur == " << t.links[l].source
      << ";\n    weight linkDist[" << l << "];\n    update sndr = " << t.links[l].source
      << ", rcvr = " << t.links[l].destination << ", hopLink = " << l << ";\n  }\n";
  }
  o << "  edge Send -> Wait {\n    sync data!;\n  }\n";
  o << "  edge Wait -> Resume {\n    sync done?;\n  }\n";
  o << "  edge Resume -> Delivered {\n    guard rcvr == GATEWAY;\n  }\n";
  o << "  edge Resume -> Choose {\n    guard rcvr != GATEWAY;\n    update cur = rcvr;\n  }\n";
  o << "}\n";
  o << "automaton NetworkHop {\n";
  o << "  int rate = 0;\n";
  o << "  init location Start;\n";
  o << "  committed location PacketLossCalculated;\n";
  o << "  location PacketLoss;\n";
  o << "  committed location MessageReceived;\n";
  o << "  edge Start -> PacketLossCalculated {\n    sync data?;\n    update rate = failRate(hopLink);\n  }\n";
  o << "  edge PacketLossCalculated -> PacketLoss {\n    weight rate;\n  }\n";
  o << "  edge PacketLossCalculated -> MessageReceived {\n    weight 1000 - rate;\n  }\n";
  o << "  edge MessageReceived -> Start {\n    sync done!;\n  }\n";
  o << "}\n";
  o << "system Topology = TopologyWalk(), Network = NetworkHop();\n";
  o << "query loss \"Pr [<=1](<>Network.PacketLoss)\";\n";
  return o.str();
}

/// Emits the energy quality model: Bernoulli generation per mote followed by
/// a deterministic forwarding/energy computation over one cycle.
inline std::string energy_model_text(const Topology& t) {
  std::ostringstream o;
  size_t L = t.links.size();
  int N = t.mote_count;
  o << "// energy quality model (generated from the topology)\n";
  o << "const int NLINKS = " << L << ";\nconst int NMOTES = " << N << ";\n";
  o << "const int GATEWAY = " << t.gateway_id << ";\n";
  auto table = [&](const char* name, size_t n, auto value) {
    o << "const int " << name << "[" << n << "] = { ";
    for (size_t i = 0; i < n; ++i) o << (i ? ", " : "") << value(i);
    o << " };\n";
  };
  table("linkSrc", L, [&](size_t l) { return t.links[l].source; });
  table("linkDst", L, [&](size_t l) { return t.links[l].destination; });
  table("linkPower", L, [&](size_t) { return 15; });
  table("linkDist", L, [&](size_t) { return 100; });
  table("pTraffic", static_cast<size_t>(N) + 1, [&](size_t m) { return m >= 2 ? 1000 : 0; });
  o << "const int PCR10[16] = { 202, 212, 223, 237, 247, 261, 275, 288, 300, 312, 324, 337, "
       "351, 365, 380, 389 };\n";
  o << "const int LISTEN_E7 = " << llround(kDefaultListeningCoulomb * 1e7) << ";\n";
  o << "const int SLOTS = " << kSlotsPerLink << ";\nconst int QCAP = " << kSendQueueCapacity
    << ";\n";
  // turn order table, child before parent
  auto order = t.turn_order();
  table("turnOrder", order.size(), [&](size_t i) { return order[i]; });
  o << R"q(
automaton Gateway {
  int gen[NMOTES + 1];
  int carry[NMOTES + 1];
  int m = 2;
  int avgEnergyConsumption = 0;

  int sendEnergyE7(int packets, int power) {
    return packets * 258 * PCR10[power];
  }

  void runCycle() {
    int i;
    int total = 0;
    for (i = 0; i < NMOTES - 1; i = i + 1) {
      int mote = turnOrder[i];
      int queued = gen[mote] + carry[mote];
      int distTotal = 0;
      int l;
      if (queued > QCAP) {
        queued = QCAP;
      }
      for (l = 0; l < NLINKS; l = l + 1) {
        if (linkSrc[l] == mote) {
          distTotal = distTotal + linkDist[l];
        }
      }
      if (distTotal > 0) {
        int sent = 0;
        for (l = 0; l < NLINKS; l = l + 1) {
          if (linkSrc[l] == mote && linkDist[l] > 0) {
            int n = 0;
            if (distTotal > 100) {
              n = queued;
            } else {
              n = (queued * linkDist[l]) / distTotal;
            }
            if (n > SLOTS) {
              n = SLOTS;
            }
            total = total + sendEnergyE7(n, linkPower[l]);
            if (linkDst[l] != GATEWAY) {
              carry[linkDst[l]] = carry[linkDst[l]] + n;
            }
            if (distTotal <= 100) {
              sent = sent + n;
            } else if (n > sent) {
              sent = n;
            }
          }
        }
        carry[mote] = queued - sent;
        if (carry[mote] < 0) {
          carry[mote] = 0;
        }
      }
    }
    avgEnergyConsumption = total + LISTEN_E7;
  }

  init committed location GenLoop;
  committed location Computing;
  location Done;
  edge GenLoop -> GenLoop {
    guard m <= NMOTES;
    weight pTraffic[m];
    update gen[m] = 10, m = m + 1;
  }
  edge GenLoop -> GenLoop {
    guard m <= NMOTES;
    weight 1000 - pTraffic[m];
    update gen[m] = 0, m = m + 1;
  }
  edge GenLoop -> Computing {
    guard m > NMOTES;
    weight 1;
  }
  edge Computing -> Done {
    update runCycle();
  }
}
system Gateway;
query energy "simulate 1[<=30](Gateway.avgEnergyConsumption)";
)q";
  return o.str();
}

/// Emits the latency quality model: several consecutive cycles of flow under
/// the candidate distribution; the estimate is the end backlog relative to a
/// cycle's deliveries, so marginally diverging options rank visibly worse
/// than stable ones.
inline std::string latency_model_text(const Topology& t) {
  std::ostringstream o;
  size_t L = t.links.size();
  int N = t.mote_count;
  o << "// latency quality model (generated from the topology)\n";
  o << "const int NLINKS = " << L << ";\nconst int NMOTES = " << N << ";\n";
  o << "const int GATEWAY = " << t.gateway_id << ";\n";
  o << "const int CYCLES = 12;\n";
  auto table = [&](const char* name, size_t n, auto value) {
    o << "const int " << name << "[" << n << "] = { ";
    for (size_t i = 0; i < n; ++i) o << (i ? ", " : "") << value(i);
    o << " };\n";
  };
  table("linkSrc", L, [&](size_t l) { return t.links[l].source; });
  table("linkDst", L, [&](size_t l) { return t.links[l].destination; });
  table("linkDist", L, [&](size_t) { return 100; });
  table("pTraffic", static_cast<size_t>(N) + 1, [&](size_t m) { return m >= 2 ? 1000 : 0; });
  table("queueLen", static_cast<size_t>(N) + 1, [&](size_t) { return 0; });
  o << "const int SLOTS = " << kSlotsPerLink << ";\nconst int QCAP = " << kSendQueueCapacity
    << ";\n";
  auto order = t.turn_order();
  table("turnOrder", order.size(), [&](size_t i) { return order[i]; });
  o << R"q(
automaton Gateway {
  int gen[NMOTES + 1];
  int carry[NMOTES + 1];
  int m = 2;
  int k = 1;
  int arrivedTotal = 0;
  int latency = 0;

  void runCycle() {
    int i;
    for (i = 0; i < NMOTES - 1; i = i + 1) {
      int mote = turnOrder[i];
      int queued = gen[mote] + carry[mote];
      int distTotal = 0;
      int l;
      if (queued > QCAP) {
        queued = QCAP;
      }
      carry[mote] = 0;
      for (l = 0; l < NLINKS; l = l + 1) {
        if (linkSrc[l] == mote) {
          distTotal = distTotal + linkDist[l];
        }
      }
      if (distTotal > 0) {
        int sent = 0;
        for (l = 0; l < NLINKS; l = l + 1) {
          if (linkSrc[l] == mote && linkDist[l] > 0) {
            int n = 0;
            if (distTotal > 100) {
              n = queued;
            } else {
              n = (queued * linkDist[l]) / distTotal;
            }
            if (n > SLOTS) {
              n = SLOTS;
            }
            if (linkDst[l] == GATEWAY) {
              arrivedTotal = arrivedTotal + n;
            } else {
              carry[linkDst[l]] = carry[linkDst[l]] + n;
            }
            if (distTotal <= 100) {
              sent = sent + n;
            } else if (n > sent) {
              sent = n;
            }
          }
        }
        carry[mote] = carry[mote] + (queued - sent);
      } else {
        carry[mote] = carry[mote] + queued;
      }
    }
  }

  void finishRun() {
    int i;
    int backlog = 0;
    int perCycle = arrivedTotal / CYCLES;
    // one drain round without fresh traffic clears transient burst residue;
    // only sustained overload leaves a backlog
    for (i = 2; i <= NMOTES; i = i + 1) {
      gen[i] = 0;
    }
    runCycle();
    for (i = 2; i <= NMOTES; i = i + 1) {
      backlog = backlog + carry[i];
    }
    if (perCycle < 1) {
      perCycle = 1;
    }
    latency = (100 * backlog) / perCycle;
    if (latency > 100) {
      latency = 100;
    }
  }

  init committed location GenLoop;
  committed location Computing;
  committed location CycleDone;
  location Done;
  edge GenLoop -> GenLoop {
    guard m <= NMOTES;
    weight pTraffic[m];
    update gen[m] = 10, m = m + 1;
  }
  edge GenLoop -> GenLoop {
    guard m <= NMOTES;
    weight 1000 - pTraffic[m];
    update gen[m] = 0, m = m + 1;
  }
  edge GenLoop -> Computing {
    guard m > NMOTES;
    weight 1;
  }
  edge Computing -> CycleDone {
    update runCycle(), k = k + 1, m = 2;
  }
  edge CycleDone -> GenLoop {
    guard k <= CYCLES;
  }
  edge CycleDone -> Done {
    guard k > CYCLES;
    update finishRun();
  }
}
system Gateway;
query lat "simulate 1[<=30](Gateway.latency)";
)q";
  return o.str();
}

// ---------------------------------------------------------------------------
// Binding uncertainties and settings into quality model templates
// ---------------------------------------------------------------------------

/// Replaces the initializer of a const global array (or scalar) with concrete
/// values; the slot must exist in the template.
inline void substitute_constants(ModelNetwork& net,
                                 const std::map<std::string, std::vector<int64_t>>& values) {
  for (const auto& [name, vals] : values) {
    bool found = false;
    for (auto& g : net.globals) {
      if (g.name != name) continue;
      found = true;
      if (!g.type.is_const)
        throw Error(Error::Kind::UnboundParameter, "slot '" + name + "' is not a constant");
      auto literal = [](int64_t v) {
        auto e = std::make_unique<Expr>();
        if (v < 0) {
          e->kind = Expr::Kind::Unary;
          e->unary_op = UnaryOp::Minus;
          e->a = std::make_unique<Expr>();
          e->a->kind = Expr::Kind::IntLit;
          e->a->int_value = -v;
        } else {
          e->kind = Expr::Kind::IntLit;
          e->int_value = v;
        }
        return e;
      };
      if (vals.size() == 1 && !g.has_init_list && g.type.array_dims.empty()) {
        g.init = literal(vals[0]);
      } else {
        g.init.reset();
        g.has_init_list = true;
        g.init_list.clear();
        for (int64_t v : vals) g.init_list.push_back(literal(v));
      }
    }
    if (!found)
      throw Error(Error::Kind::UnboundParameter, "template has no parameter slot '" + name + "'");
  }
}

enum class QualityKind { PacketLoss, Energy, Latency };

/// A quality model template parsed and checked once; per-option binding then
/// only patches parameter slots in a copy of the initial state.
struct QualityTemplate {
  std::shared_ptr<const CheckedModel> cm;
  MachineState base_initial;
  std::unordered_map<std::string, int> global_slot;

  const Query& query() const { return cm->network->queries.at(0); }
};

inline QualityTemplate prepare_quality_template(const std::string& text) {
  ParseResult pr = parse_model(text);
  if (!pr.ok()) throw Error(Error::Kind::ParseError, join_diagnostics(pr.diagnostics));
  CheckedModel checked = typecheck_model(std::move(pr.network));
  if (!checked.ok())
    throw Error(Error::Kind::ParseError,
                "quality template does not check:\n" + join_diagnostics(checked.diagnostics));
  QualityTemplate t;
  t.cm = std::make_shared<CheckedModel>(std::move(checked));
  for (const auto& leaf : t.cm->global_leaves) t.global_slot[leaf.qualified_name] = leaf.slot;
  EngineInstance probe(t.cm, ExecutionConfig{});
  t.base_initial = probe.state();
  return t;
}

/// Writes bound values over the template's initial state; slot names follow
/// substitute_constants (scalar name or name[i] per array element).
inline MachineState bind_initial_state(const QualityTemplate& t,
                                       const std::map<std::string, std::vector<int64_t>>& values) {
  MachineState st = t.base_initial;
  for (const auto& [name, vals] : values) {
    if (vals.size() == 1 && t.global_slot.count(name)) {
      st.globals[t.global_slot.at(name)] = vals[0];
      continue;
    }
    for (size_t i = 0; i < vals.size(); ++i) {
      auto it = t.global_slot.find(name + "[" + std::to_string(i) + "]");
      if (it == t.global_slot.end())
        throw Error(Error::Kind::UnboundParameter,
                    "template has no parameter slot '" + name + "[" + std::to_string(i) + "]'");
      st.globals[it->second] = vals[i];
    }
  }
  return st;
}

/// Computes the concrete slot values for one adaptation option against the
/// observed uncertainties. The same quantization feeds the analytic oracle.
inline std::map<std::string, std::vector<int64_t>> quality_bindings(
    const Topology& t, QualityKind kind, const QualityInputs& inputs, const Settings& option,
    double listening_coulomb = kDefaultListeningCoulomb) {
  std::map<std::string, std::vector<int64_t>> values;
  std::vector<int64_t> dist, power, snr_t;
  for (size_t l = 0; l < t.links.size(); ++l) {
    dist.push_back(option[l].distribution);
    power.push_back(option[l].power);
    snr_t.push_back(quantize_snr_tenths(inputs.link_snr[l]));
  }
  std::vector<int64_t> ptraffic(static_cast<size_t>(t.mote_count) + 1, 0);
  std::vector<int64_t> src_weight(static_cast<size_t>(t.mote_count) + 1, 0);
  for (int m : t.mote_ids()) {
    ptraffic[m] = quantize_permille(inputs.mote_ptraffic[m]);
    src_weight[m] = source_weight_permille(inputs.mote_ptraffic[m]);
  }
  switch (kind) {
    case QualityKind::PacketLoss: {
      values["linkSNRt"] = snr_t;
      values["linkDist"] = dist;
      values["srcWeight"] = src_weight;
      int64_t total = 0;
      for (int m : t.mote_ids()) total += src_weight[m];
      values["srcWeightTotal"] = {total};
      break;
    }
    case QualityKind::Energy:
      values["linkPower"] = power;
      values["linkDist"] = dist;
      values["pTraffic"] = ptraffic;
      values["LISTEN_E7"] = {llround(listening_coulomb * 1e7)};
      break;
    case QualityKind::Latency: {
      values["linkDist"] = dist;
      values["pTraffic"] = ptraffic;
      std::vector<int64_t> queues(static_cast<size_t>(t.mote_count) + 1, 0);
      for (int m : t.mote_ids())
        if (m < static_cast<int>(inputs.mote_queue.size())) queues[m] = inputs.mote_queue[m];
      values["queueLen"] = queues;
      break;
    }
  }
  return values;
}

/// Closes a quality model template over observed uncertainties and one
/// adaptation option; the result is ready for the statistical checker.
inline CheckedModel bind_uncertainties(const std::string& template_text, const Topology& t,
                                       QualityKind kind, const QualityInputs& inputs,
                                       const Settings& option,
                                       double listening_coulomb = kDefaultListeningCoulomb) {
  ParseResult pr = parse_model(template_text);
  if (!pr.ok()) throw Error(Error::Kind::ParseError, join_diagnostics(pr.diagnostics));
  substitute_constants(pr.network, quality_bindings(t, kind, inputs, option, listening_coulomb));
  CheckedModel cm = typecheck_model(std::move(pr.network));
  if (!cm.ok())
    throw Error(Error::Kind::ParseError,
                "bound quality model does not check:\n" + join_diagnostics(cm.diagnostics));
  return cm;
}

} // namespace activforms::deltaiot
