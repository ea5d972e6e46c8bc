#include <gtest/gtest.h>

#include "activforms/deltaiot.hpp"
#include "activforms/pretty.hpp"
#include "activforms/smc.hpp"

using namespace activforms;
using namespace activforms::deltaiot;

namespace {

TEST(Formulas, LinkFailureRate) {
  EXPECT_DOUBLE_EQ(link_failure_rate(0), 0.0);
  EXPECT_DOUBLE_EQ(link_failure_rate(5), 0.0);
  EXPECT_DOUBLE_EQ(link_failure_rate(-50), 1.0);
  EXPECT_DOUBLE_EQ(link_failure_rate(-60), 1.0); // clamped below the floor
  EXPECT_DOUBLE_EQ(link_failure_rate(-10), 0.5);
  EXPECT_DOUBLE_EQ(link_failure_rate(-25), 1.0); // probability clamped at 1
}

TEST(Formulas, TransmissionEnergyTable) {
  // packets * 0.258 * PCR(power) / 1000
  EXPECT_NEAR(transmission_energy(10, 15), 0.100362, 1e-9);
  EXPECT_NEAR(transmission_energy(10, 0), 0.052116, 1e-9);
  EXPECT_DOUBLE_EQ(transmission_energy(0, 7), 0.0);
  EXPECT_DOUBLE_EQ(pcr_table()[0], 20.2);
  EXPECT_DOUBLE_EQ(pcr_table()[15], 38.9);
  EXPECT_THROW(transmission_energy(1, 16), Error);
  EXPECT_THROW(transmission_energy(1, -1), Error);
}

TEST(Topology, DefaultShape) {
  Topology t = default_topology();
  EXPECT_EQ(t.mote_count, 15);
  EXPECT_EQ(t.links.size(), 17u);
  auto multi = t.multi_parent_motes();
  EXPECT_EQ(multi, (std::vector<int>{7, 10, 12}));
  // child-before-parent: every mote appears after all its children
  auto order = t.turn_order();
  std::map<int, size_t> pos;
  for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const auto& l : t.links) {
    if (l.destination == t.gateway_id) continue;
    EXPECT_LT(pos[l.source], pos[l.destination])
        << l.source << "->" << l.destination << " violates child-before-parent";
  }
}

TEST(Topology, ScaledShapes) {
  for (int m : {5, 10, 15, 20, 25}) {
    Topology t = scaled_topology(m);
    EXPECT_EQ(t.mote_count, m);
    EXPECT_EQ(static_cast<int>(t.multi_parent_motes().size()), m / 5);
  }
}

TEST(Oracle, TrivialAndChainCases) {
  // all links clean -> zero loss
  Topology t = default_topology();
  Settings s = reference_settings(t);
  QualityInputs in;
  in.link_snr.assign(t.links.size(), 10.0);
  in.mote_ptraffic.assign(16, 1.0);
  EXPECT_DOUBLE_EQ(oracle_expected_packet_loss(t, s, in), 0.0);

  // two-hop chain with failure rates 0.5 and 0.5 -> 1 - 0.25 = 0.75
  Topology chain;
  chain.mote_count = 3;
  chain.links = {{3, 2, 0, 0}, {2, 1, 0, 0}};
  Settings cs(2, LinkSetting{15, 100});
  QualityInputs cin;
  cin.link_snr = {-10.0, -10.0};
  cin.mote_ptraffic = {0, 0, 0.0, 1.0}; // only mote 3 generates
  EXPECT_NEAR(oracle_expected_packet_loss(chain, cs, cin), 0.75, 1e-9);
}

TEST(Oracle, WeightedParentSplit) {
  // mote with parents split 60/40, failure rates 0.2 / 0.4:
  // loss = 1 - (0.6*0.8 + 0.4*0.6) = 0.28
  Topology t;
  t.mote_count = 4;
  t.links = {{4, 2, 0, 0}, {4, 3, 0, 0}, {2, 1, 0, 0}, {3, 1, 0, 0}};
  Settings s(4);
  s[0] = {15, 60};
  s[1] = {15, 40};
  s[2] = {15, 100};
  s[3] = {15, 100};
  QualityInputs in;
  in.link_snr = {-4.0, -8.0, 10.0, 10.0}; // rates 0.2, 0.4, 0, 0
  in.mote_ptraffic = {0, 0, 0.0, 0.0, 1.0};
  EXPECT_NEAR(oracle_expected_packet_loss(t, s, in), 0.28, 1e-9);
}

TEST(Oracle, CycleDetected) {
  Topology t;
  t.mote_count = 3;
  t.links = {{2, 3, 0, 0}, {3, 2, 0, 0}};
  Settings s(2, LinkSetting{15, 100});
  QualityInputs in;
  in.link_snr = {0, 0};
  in.mote_ptraffic = {0, 0, 1.0, 1.0};
  EXPECT_THROW(oracle_expected_packet_loss(t, s, in), Error);
}

UncertaintyProfile stationary_profile(double p, double sigma) {
  UncertaintyProfile prof;
  prof.default_load.base = p;
  prof.default_load.amplitude = 0;
  prof.default_noise.sigma = sigma;
  return prof;
}

TEST(Simulator, LosslessRegimeHasZeroLoss) {
  Topology t = default_topology();
  for (auto& l : t.links) l.snr_alpha = 5.0; // clean links at any power
  Simulator sim(t, stationary_profile(1.0, 0.0), {7});
  CycleStats s = sim.simulate_cycle();
  EXPECT_EQ(s.generated, 140);
  EXPECT_DOUBLE_EQ(s.packet_loss, 0.0);
}

TEST(Simulator, ChainLossMatchesBernoulliGroundTruth) {
  // single chain mote -> gateway at SNR -10: per-packet loss 0.5
  Topology chain;
  chain.mote_count = 2;
  chain.links = {{2, 1, -10.0, 0.0}}; // alpha -10, beta 0 -> snr -10 at any power
  Simulator sim(chain, stationary_profile(1.0, 0.0), {99});
  double loss_sum = 0;
  const int cycles = 1000;
  for (int i = 0; i < cycles; ++i) loss_sum += sim.simulate_cycle().packet_loss;
  EXPECT_NEAR(loss_sum / cycles, 0.5, 0.05);
}

TEST(Simulator, ConservationExactInPartitionMode) {
  Topology t = default_topology();
  Simulator sim(t, stationary_profile(0.8, 2.0), {5});
  // move off the duplicating reference configuration
  for (int m : t.multi_parent_motes()) {
    auto links = t.parent_links_of(m);
    std::vector<std::pair<int, LinkSetting>> ls = {{links[0], {10, 60}}, {links[1], {10, 40}}};
    sim.set_mote_settings(m, ls);
  }
  int64_t generated = 0, delivered = 0, lost = 0, dropped = 0;
  for (int i = 0; i < 200; ++i) {
    CycleStats s = sim.simulate_cycle();
    generated += s.generated;
    delivered += s.delivered;
    lost += s.lost_air;
    dropped += s.dropped_queue;
  }
  EXPECT_EQ(generated, delivered + lost + dropped + sim.pending_count());
}

TEST(Simulator, ConservationUniqueInDuplicateMode) {
  Topology t = default_topology();
  Simulator sim(t, stationary_profile(0.8, 2.0), {6}); // reference config duplicates
  int64_t generated = 0, delivered = 0, lost = 0, dropped = 0;
  for (int i = 0; i < 200; ++i) {
    CycleStats s = sim.simulate_cycle();
    generated += s.generated;
    delivered += s.delivered;
    lost += s.lost_air;
    dropped += s.dropped_queue;
  }
  EXPECT_EQ(generated, delivered + lost + dropped + sim.unresolved_undelivered_count());
}

TEST(Simulator, EnergyDeterministicUnderFullLoad) {
  Topology t = default_topology();
  auto run_energy = [&](uint64_t seed) {
    Simulator sim(t, stationary_profile(1.0, 0.0), {seed});
    sim.simulate_cycle();
    return sim.simulate_cycle().energy;
  };
  EXPECT_DOUBLE_EQ(run_energy(1), run_energy(999));
}

TEST(Simulator, DuplicateReferenceCostsMoreEnergyThanAnySplit) {
  Topology t = default_topology();
  auto energy_with = [&](int dist_first) {
    Simulator sim(t, stationary_profile(1.0, 0.0), {3});
    if (dist_first >= 0) {
      for (int m : t.multi_parent_motes()) {
        auto links = t.parent_links_of(m);
        sim.set_mote_settings(m, {{links[0], {15, dist_first}}, {links[1], {15, 100 - dist_first}}});
      }
    }
    double total = 0;
    for (int i = 0; i < 10; ++i) total += sim.simulate_cycle().energy;
    return total;
  };
  double reference = energy_with(-1); // duplicate-to-all default
  for (int d : {0, 20, 40, 60, 80, 100})
    EXPECT_GT(reference, energy_with(d)) << "split " << d;
}

TEST(Simulator, LatencyZeroWithoutQueueing) {
  // small star topology whose per-link load can never exceed the 40-slot
  // capacity: latency must be identically zero
  Topology t;
  t.mote_count = 4;
  t.links = {{2, 3, 5.0, 0}, {2, 4, 5.0, 0}, {3, 1, 5.0, 0}, {4, 1, 5.0, 0}};
  Simulator sim(t, stationary_profile(1.0, 0.0), {8});
  sim.set_mote_settings(2, {{0, {5, 60}}, {1, {5, 40}}});
  sim.set_mote_settings(3, {{2, {5, 100}}});
  sim.set_mote_settings(4, {{3, {5, 100}}});
  for (int i = 0; i < 30; ++i) {
    CycleStats s = sim.simulate_cycle();
    EXPECT_GE(s.latency, 0.0);
    EXPECT_LE(s.latency, 1.0);
    if (i > 0) EXPECT_DOUBLE_EQ(s.latency, 0.0);
  }
}

TEST(Simulator, SaturatedRouteProducesLatency) {
  // funnel everything through one path at full load: queues must form
  Topology t = default_topology();
  for (auto& l : t.links) l.snr_alpha = 5.0; // lossless so queuing dominates
  Simulator sim(t, stationary_profile(1.0, 0.0), {9});
  for (int m : t.multi_parent_motes()) {
    auto links = t.parent_links_of(m);
    sim.set_mote_settings(m, {{links[0], {5, 100}}, {links[1], {5, 0}}});
  }
  double latency_sum = 0;
  for (int i = 0; i < 40; ++i) latency_sum += sim.simulate_cycle().latency;
  EXPECT_GT(latency_sum / 40, 0.05);
}

TEST(Simulator, EmpiricalLossConvergesToOracle) {
  // stationary, exact-split configuration: mote 2 splits 60/40 over two
  // parents, no queue pressure
  Topology t;
  t.mote_count = 4;
  t.links = {{2, 3, -4.0, 0}, {2, 4, -8.0, 0}, {3, 1, -2.0, 0}, {4, 1, -6.0, 0}};
  Settings s(4);
  s[0] = {15, 60};
  s[1] = {15, 40};
  s[2] = {15, 100};
  s[3] = {15, 100};
  QualityInputs in;
  in.link_snr = {-4.0, -8.0, -2.0, -6.0};
  in.mote_ptraffic = {0, 0, 1.0, 1.0, 1.0};
  double expected = oracle_expected_packet_loss(t, s, in);

  SimulatorConfig cfg;
  cfg.seed = 11;
  Simulator sim(t, stationary_profile(1.0, 0.0), cfg);
  sim.set_mote_settings(2, {{0, s[0]}, {1, s[1]}});
  sim.set_mote_settings(3, {{2, s[2]}});
  sim.set_mote_settings(4, {{3, s[3]}});
  const int cycles = 10000;
  std::vector<double> losses;
  for (int i = 0; i < cycles; ++i) losses.push_back(sim.simulate_cycle().packet_loss);
  SampleStats stats = compute_sample_stats(losses);
  EXPECT_NEAR(stats.mean, expected, 3 * stats.sem)
      << "oracle " << expected << " vs empirical " << stats.mean << " sem " << stats.sem;
}

TEST(Probe, DescriptorsAndQoS) {
  Topology t = default_topology();
  Simulator sim(t, stationary_profile(0.8, 2.0), {4});
  EXPECT_EQ(sim.get_all_motes().size(), 14u);
  EXPECT_TRUE(sim.get_network_qos(76).empty()); // no completed window yet
  for (int i = 0; i < 76; ++i) sim.simulate_cycle();
  auto qos = sim.get_network_qos(76);
  ASSERT_EQ(qos.size(), 1u);
  EXPECT_GE(qos[0].packet_loss, 0.0);
  EXPECT_LE(qos[0].packet_loss, 1.0);
  EXPECT_GT(qos[0].energy, 0.0);
  EXPECT_THROW(sim.get_network_qos(0), Error);
}

TEST(Effector, SettingsApplyNextCycle) {
  Topology t = default_topology();
  Simulator sim(t, stationary_profile(1.0, 0.0), {4});
  int link = t.find_link(7, 2);
  ASSERT_GE(link, 0);
  sim.set_mote_settings(7, {{link, {5, 100}}});
  EXPECT_EQ(sim.settings()[link].power, 15); // still the old value
  sim.simulate_cycle();
  EXPECT_EQ(sim.settings()[link].power, 5);
  EXPECT_THROW(sim.set_mote_settings(99, {}), Error);
  EXPECT_THROW(sim.set_mote_settings(7, {{link, {5, 37}}}), Error);
  sim.reset_default_configuration();
  sim.simulate_cycle();
  for (const auto& s : sim.settings()) {
    EXPECT_EQ(s.power, 15);
    EXPECT_EQ(s.distribution, 100);
  }
}

TEST(QualityModels, PacketLossModelParsesAndHasExpectedShape) {
  Topology t = default_topology();
  std::string text = packet_loss_model_text(t);
  ParseResult pr = parse_model(text);
  ASSERT_TRUE(pr.ok()) << join_diagnostics(pr.diagnostics);
  EXPECT_EQ(pr.network.automata.size(), 2u);
  bool has_data_channel = false;
  for (const auto& g : pr.network.globals)
    if (g.name == "data" && g.type.base == "chan" && g.type.broadcast) has_data_channel = true;
  EXPECT_TRUE(has_data_channel);
  CheckedModel cm = typecheck_model(std::move(pr.network));
  EXPECT_TRUE(cm.ok()) << join_diagnostics(cm.diagnostics);
}

TEST(QualityModels, BindingProducesClosedModel) {
  Topology t = default_topology();
  QualityInputs in;
  in.link_snr.assign(t.links.size(), -3.0);
  in.mote_ptraffic.assign(16, 0.8);
  Settings opt = reference_settings(t);
  CheckedModel cm =
      bind_uncertainties(packet_loss_model_text(t), t, QualityKind::PacketLoss, in, opt);
  EXPECT_TRUE(cm.ok());
  // bound constant visible in the checked model
  bool found = false;
  for (const auto& g : cm.network->globals)
    if (g.name == "linkSNRt") {
      ASSERT_TRUE(g.has_init_list);
      found = true;
      EXPECT_EQ(g.init_list.size(), t.links.size());
    }
  EXPECT_TRUE(found);
}

TEST(QualityModels, UnboundParameterRaises) {
  Topology t = default_topology();
  ParseResult pr = parse_model(packet_loss_model_text(t));
  ASSERT_TRUE(pr.ok());
  EXPECT_THROW(substitute_constants(pr.network, {{"noSuchSlot", {1}}}), Error);
}

TEST(QualityModels, TwoOptionsDifferOnlyInSettingsConstants) {
  Topology t = default_topology();
  QualityInputs in;
  in.link_snr.assign(t.links.size(), -3.0);
  in.mote_ptraffic.assign(16, 0.8);
  Settings a = reference_settings(t);
  Settings b = a;
  int link = t.find_link(12, 7);
  b[link].distribution = 60;
  b[t.find_link(12, 3)].distribution = 40;
  std::string text = packet_loss_model_text(t);
  auto bind_print = [&](const Settings& s) {
    ParseResult pr = parse_model(text);
    substitute_constants(pr.network, quality_bindings(t, QualityKind::PacketLoss, in, s));
    return activforms::pretty_print(pr.network);
  };
  std::string pa = bind_print(a), pb = bind_print(b);
  EXPECT_NE(pa, pb);
  // difference confined to the linkDist table line
  std::istringstream sa(pa), sb(pb);
  std::string la, lb;
  int diff_lines = 0;
  while (std::getline(sa, la) && std::getline(sb, lb)) {
    if (la != lb) {
      ++diff_lines;
      EXPECT_NE(la.find("linkDist"), std::string::npos);
    }
  }
  EXPECT_EQ(diff_lines, 1);
}

TEST(QualityModels, SmcEstimateMatchesOracle) {
  Topology t = default_topology();
  QualityInputs in;
  in.link_snr = {-2.0, -4.0, -1.0, -6.0, -3.0, -2.5, -5.0, -1.5, -2.2, -3.3,
                 -4.4, -2.6, -1.8, -5.5, -3.1, -2.9, -4.1};
  in.mote_ptraffic.assign(16, 0.0);
  for (int m = 2; m <= 15; ++m) in.mote_ptraffic[m] = 0.5 + 0.03 * m;
  Settings opt = reference_settings(t);
  int l127 = t.find_link(12, 7), l123 = t.find_link(12, 3);
  opt[l127].distribution = 60;
  opt[l123].distribution = 40;

  double expected = oracle_expected_packet_loss(t, opt, in);
  auto cm = std::make_shared<CheckedModel>(
      bind_uncertainties(packet_loss_model_text(t), t, QualityKind::PacketLoss, in, opt));
  Estimate est = estimate_probability(cm, cm->network->queries.at(0), 0.01, 0.05, 21);
  EXPECT_NEAR(est.point, expected, 0.02);
}

TEST(QualityModels, EnergyModelMatchesClosedFormUnderFullLoad) {
  Topology t = default_topology();
  QualityInputs in;
  in.link_snr.assign(t.links.size(), 5.0);
  in.mote_ptraffic.assign(16, 1.0);
  Settings opt(t.links.size());
  for (size_t l = 0; l < t.links.size(); ++l) opt[l] = {9, 100};
  int l127 = t.find_link(12, 7), l123 = t.find_link(12, 3);
  int l72 = t.find_link(7, 2), l73 = t.find_link(7, 3);
  int l106 = t.find_link(10, 6), l105 = t.find_link(10, 5);
  opt[l127] = {9, 60};
  opt[l123] = {9, 40};
  opt[l72] = {9, 60};
  opt[l73] = {9, 40};
  opt[l106] = {9, 60};
  opt[l105] = {9, 40};

  auto cm = std::make_shared<CheckedModel>(
      bind_uncertainties(energy_model_text(t), t, QualityKind::Energy, in, opt));
  SimStats stats = run_simulation_query(cm, cm->network->queries.at(0), 17, 30);
  double model_energy = stats.per_monitor[0].mean / 1e7;
  EXPECT_DOUBLE_EQ(stats.per_monitor[0].sd, 0.0); // deterministic at full load

  // closed form mirroring the model's arithmetic: per mote, queued packets,
  // floor splits, 40-slot caps
  auto order = t.turn_order();
  std::map<int, int64_t> carry;
  double total = 0;
  for (int m : order) {
    int64_t queued = 10 + carry[m];
    queued = std::min<int64_t>(queued, kSendQueueCapacity);
    auto parents = t.parent_links_of(m);
    int dist_total = 0;
    for (int l : parents) dist_total += opt[l].distribution;
    int64_t sent = 0;
    for (int l : parents) {
      if (opt[l].distribution <= 0) continue;
      int64_t n = dist_total > 100 ? queued : (queued * opt[l].distribution) / dist_total;
      n = std::min<int64_t>(n, kSlotsPerLink);
      total += transmission_energy(n, opt[l].power);
      if (t.links[l].destination != t.gateway_id) carry[t.links[l].destination] += n;
      sent = dist_total > 100 ? std::max(sent, n) : sent + n;
    }
    carry[m] = queued - sent;
  }
  total += kDefaultListeningCoulomb;
  EXPECT_NEAR(model_energy, total, 1e-9);
}

TEST(QualityModels, LatencyModelRanksSaturationCorrectly) {
  Topology t = default_topology();
  QualityInputs in;
  in.link_snr.assign(t.links.size(), 5.0);
  in.mote_ptraffic.assign(16, 1.0);
  in.mote_queue.assign(16, 0);

  auto latency_of = [&](int d127) {
    Settings opt = reference_settings(t);
    for (size_t l = 0; l < t.links.size(); ++l) opt[l] = {9, 100};
    opt[t.find_link(12, 7)].distribution = d127;
    opt[t.find_link(12, 3)].distribution = 100 - d127;
    opt[t.find_link(7, 2)].distribution = d127;
    opt[t.find_link(7, 3)].distribution = 100 - d127;
    opt[t.find_link(10, 6)].distribution = d127;
    opt[t.find_link(10, 5)].distribution = 100 - d127;
    auto cm = std::make_shared<CheckedModel>(
        bind_uncertainties(latency_model_text(t), t, QualityKind::Latency, in, opt));
    SimStats stats = run_simulation_query(cm, cm->network->queries.at(0), 23, 30);
    return stats.per_monitor[0].mean;
  };
  // concentrating all traffic on one parent must look worse than spreading
  EXPECT_GE(latency_of(100), latency_of(60));
}

} // namespace
