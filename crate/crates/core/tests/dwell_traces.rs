use dccsim_core::dcc::{DccParamTable, DccState};
use dccsim_core::engine::run_scenario;
use dccsim_core::scenarios::{ScenarioParams, SmoothFlowParams, TwoWayParams};
use dccsim_core::{CbrSample, SimConfig};

const EPS: f64 = 1e-6;

fn up_threshold(from: DccState, table: &DccParamTable) -> Option<f64> {
    match from {
        DccState::Relaxed => Some(table.min_cbr_threshold),
        DccState::Active => Some(table.max_cbr_threshold),
        DccState::Restrictive => None,
    }
}

fn is_up(from: DccState, to: DccState) -> bool {
    matches!((from, to), (DccState::Relaxed, DccState::Active) | (DccState::Active, DccState::Restrictive))
}

/// Checks one vehicle's sampled trace and returns the number of transitions.
fn check_trace(trace: &[CbrSample], initial: DccState, table: &DccParamTable) -> usize {
    let mut transitions = 0;
    let mut state = initial;
    let mut restrictive_since = (initial == DccState::Restrictive).then_some(0.0);
    for (i, s) in trace.iter().enumerate() {
        if s.state == state {
            continue;
        }
        transitions += 1;
        if let Some(since) = restrictive_since.take() {
            assert!(s.time_s - since >= 5.0 - EPS, "restrictive sojourn {since}..{}", s.time_s);
        }
        if is_up(state, s.state) {
            let threshold = up_threshold(state, table).unwrap();
            let window: Vec<&CbrSample> =
                trace[..=i].iter().filter(|w| w.time_s >= s.time_s - 1.0 - EPS).collect();
            assert!(window.first().unwrap().time_s <= s.time_s - 1.0 + EPS, "hold shorter than 1 s at {}", s.time_s);
            assert!(window.iter().all(|w| w.cbr >= threshold), "hold broken before {}", s.time_s);
        }
        if s.state == DccState::Restrictive {
            restrictive_since = Some(s.time_s);
        }
        state = s.state;
    }
    transitions
}

fn check_run(cfg: &SimConfig, stride: usize) -> usize {
    let mut spec = cfg.scenario.build(cfg.seed).unwrap();
    let initial: Vec<DccState> = spec.vehicles.iter().map(|v| v.initial_state).collect();
    spec.observed = spec.vehicles.iter().step_by(stride).map(|v| v.id).collect();
    let observed = spec.observed.clone();
    let ids: Vec<u32> = spec.vehicles.iter().map(|v| v.id).collect();
    let out = run_scenario(cfg, spec).unwrap();
    let mut transitions = 0;
    for id in observed {
        let trace: Vec<CbrSample> = out.cbr_samples.iter().filter(|s| s.vehicle_id == id).copied().collect();
        assert!(!trace.is_empty());
        let idx = ids.iter().position(|&v| v == id).unwrap();
        transitions += check_trace(&trace, initial[idx], &cfg.dcc);
    }
    transitions
}

#[test]
fn two_way_trace_respects_dwell() {
    let cfg = SimConfig {
        duration_s: 20.0,
        scenario: ScenarioParams::TwoWayMultiLane(TwoWayParams { vehicles_per_lane: 200, ..TwoWayParams::default() }),
        ..SimConfig::default()
    };
    assert!(check_run(&cfg, 7) > 20);
}

#[test]
fn smooth_flow_trace_respects_dwell() {
    let cfg = SimConfig {
        duration_s: 20.0,
        scenario: ScenarioParams::SmoothFlow(SmoothFlowParams {
            initial_state: DccState::Restrictive,
            ..SmoothFlowParams::default()
        }),
        ..SimConfig::default()
    };
    assert!(check_run(&cfg, 5) > 20);
}
