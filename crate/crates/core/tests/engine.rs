use fogport::harness::{setup_for, topology_for, Calibration, ConfigPreset, FOG2_NODE, FOG_NODE};
use fogport::simnet::{
    run, EventKind, RequestOutcome, RunOutput, ScheduledChange, SimError, SimSetup, SimTime, TopologyChange,
};
use fogport::workload::{generate_scenario, RequestSpec, Scenario, ScenarioParams};

/// Frozen profile with a 10 ms fog service time.
fn fast_fog() -> Calibration {
    Calibration { fog_service_rate: 100.0, ..Calibration::frozen() }
}

fn quiet_params(travelers: usize, rate: f64, duration_s: f64) -> ScenarioParams {
    ScenarioParams { traveler_count: travelers, request_rate_per_s: rate, duration_s, ..ScenarioParams::default() }
}

fn simulate(preset: ConfigPreset, cal: &Calibration, scenario: &Scenario, tweak: impl FnOnce(&mut SimSetup)) -> RunOutput {
    let topo = topology_for(preset, cal).unwrap();
    let mut setup = setup_for(preset, cal, "proximity").unwrap();
    tweak(&mut setup);
    run(scenario, &topo, &setup, 1).unwrap()
}

fn handmade(requests: &[(u64, f64)]) -> Scenario {
    let mut s = generate_scenario(&quiet_params(1, 1.0, 5.0), 3).unwrap();
    s.requests = requests.iter().map(|&(id, at)| RequestSpec { id, at: SimTime::from_secs_f64(at), traveler: 0 }).collect();
    s
}

#[test]
fn single_request_hand_trace() {
    // 0.8 ms up, 10 ms service, 0.8 ms back.
    let out = simulate(ConfigPreset::Fog1, &fast_fog(), &handmade(&[(0, 0.5)]), |_| {});
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].response_ms, Some(11.6));
    assert_eq!(out.rows[0].target, Some(FOG_NODE));
}

#[test]
fn simultaneous_requests_queue() {
    let out = simulate(ConfigPreset::Fog1, &fast_fog(), &handmade(&[(0, 0.5), (1, 0.5)]), |_| {});
    let r: Vec<f64> = out.rows.iter().map(|r| r.response_ms.unwrap()).collect();
    assert_eq!(r, vec![11.6, 21.6]);
}

#[test]
fn cloud_round_trip() {
    let out = simulate(ConfigPreset::CloudOnly, &fast_fog(), &handmade(&[(0, 0.5)]), |_| {});
    assert_eq!(out.rows[0].response_ms, Some(62.5));
}

#[test]
fn fog_mean_matches_pollaczek_khinchine() {
    // Poisson arrivals, deterministic 30 ms service: Wq = rho s / (2 (1 - rho)).
    let cal = Calibration::frozen();
    let (rate, s) = (10.0, 0.030);
    let scenario = generate_scenario(&quiet_params(20, rate, 1200.0), 11).unwrap();
    let out = simulate(ConfigPreset::Fog1, &cal, &scenario, |_| {});
    let rho = rate * s;
    let expected = 1.6 + 1000.0 * (s + rho * s / (2.0 * (1.0 - rho)));
    let got = out.report.mean_response_ms;
    assert!((got - expected).abs() / expected < 0.03, "mean {got:.2} vs M/D/1 {expected:.2}");
}

#[test]
fn littles_law_at_the_fog() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(20, 20.0, 300.0), 12).unwrap();
    let out = simulate(ConfigPreset::Fog1, &cal, &scenario, |s| s.record_trace = true);

    // Time-average number at the fog from the event trace.
    let mut n: i64 = 0;
    let (mut area, mut last) = (0.0, 0u64);
    for e in &out.trace {
        area += n as f64 * (e.at.0 - last) as f64;
        last = e.at.0;
        match e.kind {
            EventKind::NodeArrival { node, .. } if node == FOG_NODE => n += 1,
            EventKind::ServiceEnd { node, .. } if node == FOG_NODE => n -= 1,
            _ => {}
        }
    }
    let horizon = last as f64;
    let l = area / horizon;
    // Arrival rate times mean sojourn at the node (response minus both links).
    let done: Vec<f64> = out.rows.iter().filter_map(|r| r.response_ms).map(|ms| ms - 1.6).collect();
    let lambda = done.len() as f64 / (horizon / 1e6);
    let w = done.iter().sum::<f64>() / done.len() as f64 / 1000.0;
    assert!((l - lambda * w).abs() / l < 0.10, "L {l:.3} vs lambda W {:.3}", lambda * w);
}

#[test]
fn fifo_server_follows_lindley() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(20, 25.0, 60.0), 13).unwrap();
    let out = simulate(ConfigPreset::Fog1, &cal, &scenario, |_| {});
    let s = 30_000i64;
    let mut jobs: Vec<(i64, i64)> = out
        .rows
        .iter()
        .filter(|r| r.outcome == RequestOutcome::Completed)
        .map(|r| {
            let arrive = r.created_at.0 as i64 + 800;
            let depart = r.created_at.0 as i64 + (r.response_ms.unwrap() * 1000.0).round() as i64 - 800;
            (arrive, depart)
        })
        .collect();
    jobs.sort();
    let mut prev = i64::MIN;
    for (a, d) in jobs {
        let expect = a.max(prev) + s;
        assert_eq!(d, expect, "departure breaks work conservation");
        prev = d;
    }
}

#[test]
fn trace_is_causal_and_ordered() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(50, 20.0, 30.0), 14).unwrap();
    let out = simulate(ConfigPreset::Mf2c2Fog, &cal, &scenario, |s| s.record_trace = true);
    assert!(out.trace.windows(2).all(|w| (w[0].at, w[0].seq) < (w[1].at, w[1].seq)));
    assert!(out.trace.iter().all(|e| e.at >= e.scheduled_at));
    // Every completed request was delivered after it was created.
    for r in &out.rows {
        if let Some(ms) = r.response_ms {
            assert!(ms >= 1.6);
        }
    }
}

#[test]
fn runs_are_reproducible() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(100, 15.0, 30.0), 15).unwrap();
    let a = simulate(ConfigPreset::Mf2c1Fog, &cal, &scenario, |s| s.cluster_eps_m = Some(3.0));
    let b = simulate(ConfigPreset::Mf2c1Fog, &cal, &scenario, |s| s.cluster_eps_m = Some(3.0));
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
}

#[test]
fn capacity_rejections_are_counted() {
    let cal = Calibration { fog_capacity: 2, ..Calibration::frozen() };
    let scenario = generate_scenario(&quiet_params(20, 60.0, 20.0), 16).unwrap();
    let out = simulate(ConfigPreset::Fog1, &cal, &scenario, |_| {});
    let r = &out.report;
    assert!(r.rejections > 0);
    assert_eq!(r.count, scenario.requests.len() as u64);
    assert_eq!(r.count, r.completions + r.rejections);
    // Two units of capacity bound the sojourn at two service times.
    assert!(out.rows.iter().filter_map(|r| r.response_ms).all(|ms| ms <= 1.6 + 60.0 + 1e-9));
}

#[test]
fn removing_the_fog_drops_its_work() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(20, 40.0, 10.0), 17).unwrap();
    let at = SimTime::from_secs_f64(5.0);
    let out = simulate(ConfigPreset::Fog1, &cal, &scenario, |s| {
        s.changes = vec![ScheduledChange { at, change: TopologyChange::Remove { node: FOG_NODE } }];
    });
    let r = &out.report;
    assert!(r.dropped > 0);
    assert_eq!(r.count, r.completions + r.rejections);
    assert!(out.rows.iter().filter(|r| r.created_at >= at).all(|r| r.outcome == RequestOutcome::Rejected));
}

#[test]
fn qos_dispatch_survives_fog_loss() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(20, 20.0, 10.0), 18).unwrap();
    let at = SimTime::from_secs_f64(5.0);
    let out = simulate(ConfigPreset::Mf2c2Fog, &cal, &scenario, |s| {
        s.changes = vec![ScheduledChange { at, change: TopologyChange::Remove { node: FOG2_NODE } }];
    });
    let late: Vec<_> = out.rows.iter().filter(|r| r.created_at > at).collect();
    assert!(!late.is_empty());
    assert!(late.iter().all(|r| r.outcome == RequestOutcome::Completed && r.target != Some(FOG2_NODE)));
    assert!(out.rows.iter().any(|r| r.created_at < at && r.target == Some(FOG2_NODE)));
}

#[test]
fn event_queue_bound() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(5, 10.0, 5.0), 19).unwrap();
    let topo = topology_for(ConfigPreset::Fog1, &cal).unwrap();
    let mut setup = setup_for(ConfigPreset::Fog1, &cal, "proximity").unwrap();
    setup.max_pending_events = 1;
    assert!(matches!(run(&scenario, &topo, &setup, 1), Err(SimError::ScenarioOverflow(1))));
}

#[test]
fn heat_map_counts_every_fix() {
    let cal = Calibration::frozen();
    let scenario = generate_scenario(&quiet_params(30, 5.0, 20.0), 20).unwrap();
    let out = simulate(ConfigPreset::CloudOnly, &cal, &scenario, |_| {});
    assert_eq!(out.heatmap.total(), out.report.position_samples);
    assert_eq!(out.report.position_samples, 30 * 20);
}

#[test]
fn arrivals_are_poisson() {
    // 5 sigma around the expected count for several seeds.
    for seed in 0..5 {
        let p = quiet_params(10, 12.0, 500.0);
        let n = generate_scenario(&p, seed).unwrap().requests.len() as f64;
        let mean = 12.0 * 500.0;
        assert!((n - mean).abs() < 5.0 * mean.sqrt(), "seed {seed}: {n} arrivals");
    }
}

#[test]
fn presets_share_the_workload() {
    let cal = Calibration::frozen();
    let params = cal.scenario_params();
    let a = generate_scenario(&params, 21).unwrap();
    let b = generate_scenario(&params, 21).unwrap();
    assert_eq!(a, b);
    let fog = simulate(ConfigPreset::Fog1, &cal, &a, |_| {});
    let cloud = simulate(ConfigPreset::CloudOnly, &cal, &a, |_| {});
    let stamps = |o: &RunOutput| o.rows.iter().map(|r| (r.id, r.created_at)).collect::<Vec<_>>();
    assert_eq!(stamps(&fog), stamps(&cloud));
    assert_eq!(fog.heatmap, cloud.heatmap);
}
