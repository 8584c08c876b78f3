use std::collections::BTreeMap;

use proptest::prelude::*;
use stormnet_core::hydro::*;
use stormnet_core::scenario::{run_scenario, RunOptions, Scenario, Simulation};

/// Spec for one randomly generated graph. Routing elements (storages then
/// reaches) are ordered; each drains to a later element or to an outlet, so
/// the graph is acyclic by construction.
#[derive(Debug, Clone)]
struct GraphSpec {
    storages: Vec<(f64, f64, f64, bool, f64)>, // area, diameter, opening, overflow, initial volume
    reaches: Vec<(f64, f64)>,                  // delay min, k hours
    outlets: usize,
    routing_targets: Vec<usize>,
    catchments: Vec<(f64, f64, f64, usize)>, // area, C, k, target
    rain: Vec<Vec<f64>>,                       // per step, per catchment
    dt_min: f64,
}

fn graph_spec() -> impl Strategy<Value = GraphSpec> {
    (0usize..4, 0usize..4, 1usize..3, 1usize..5).prop_flat_map(|(ns, nr, no, nc)| {
        let routing = ns + nr;
        (
            prop::collection::vec((100.0f64..20_000.0, 0.0f64..0.6, 0.0f64..=1.0, any::<bool>(), 0.0f64..5e6), ns),
            prop::collection::vec((0.0f64..90.0, 0.05f64..3.0), nr),
            Just(no),
            (0..routing).map(move |i| i + 1..routing + no).collect::<Vec<_>>(),
            prop::collection::vec((0.01f64..3.0, 0.0f64..=1.0, 0.1f64..4.0, 0..routing + no), nc),
            prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..80.0], nc), 1..120),
            prop_oneof![Just(0.5), Just(1.0), Just(2.0), Just(5.0)],
        )
            .prop_map(|(storages, reaches, outlets, routing_targets, catchments, rain, dt_min)| GraphSpec {
                storages,
                reaches,
                outlets,
                routing_targets,
                catchments,
                rain,
                dt_min,
            })
    })
}

fn element_id(spec: &GraphSpec, i: usize) -> String {
    let (ns, nr) = (spec.storages.len(), spec.reaches.len());
    if i < ns {
        format!("s{i}")
    } else if i < ns + nr {
        format!("r{}", i - ns)
    } else {
        format!("o{}", i - ns - nr)
    }
}

fn build(spec: &GraphSpec) -> Watershed {
    let ns = spec.storages.len();
    let storages = spec
        .storages
        .iter()
        .enumerate()
        .map(|(i, &(area, diameter, opening, overflow, initial))| StorageUnit {
            id: format!("s{i}"),
            kind: StorageKind::Pond,
            stage_storage: StageStorage::prismatic(area).unwrap(),
            capacity_l: None,
            outlet: ValveOutlet {
                diameter_m: diameter,
                discharge_coefficient: 0.6,
                count: 1,
                opening,
                travel_rate_per_min: 0.1,
            },
            overflow: overflow.then_some(OverflowWeir { crest_depth_m: 1.0, coefficient: 1.7, length_m: 3.0 }),
            initial_volume_l: initial,
            downstream: element_id(spec, spec.routing_targets[i]),
        })
        .collect();
    let reaches = spec
        .reaches
        .iter()
        .enumerate()
        .map(|(j, &(delay, k))| Reach {
            id: format!("r{j}"),
            pure_delay_min: delay,
            attenuation_k_hours: k,
            downstream: element_id(spec, spec.routing_targets[ns + j]),
            rating: None,
        })
        .collect();
    let catchments = spec
        .catchments
        .iter()
        .enumerate()
        .map(|(i, &(area, c, k, target))| Catchment {
            id: format!("c{i}"),
            area_km2: area,
            runoff_coefficient: c,
            reservoir_k_hours: k,
            downstream: element_id(spec, target),
        })
        .collect();
    let outlets = (0..spec.outlets).map(|o| Outlet { id: format!("o{o}"), rating: None }).collect();
    Watershed::new(WatershedGraph { catchments, storages, reaches, outlets, sediment: SedimentModel::default() })
        .expect("generated graph is valid")
}

fn rain_at(spec: &GraphSpec, step: usize) -> BTreeMap<String, f64> {
    let row = &spec.rain[step % spec.rain.len()];
    row.iter().enumerate().map(|(i, &v)| (format!("c{i}"), v)).collect()
}

/// Runs the rain script then 60 dry steps so the drain-down is exercised too.
fn simulate(spec: &GraphSpec) -> Vec<HydroState> {
    let ws = build(spec);
    let mut state = HydroState::initial(&ws, 0);
    let mut states = vec![state.clone()];
    for step in 0..spec.rain.len() + 60 {
        let rain = if step < spec.rain.len() { rain_at(spec, step) } else { BTreeMap::new() };
        state = step_watershed(&ws, &state, &rain, spec.dt_min).unwrap().0;
        states.push(state.clone());
    }
    states
}

fn assert_nonnegative(s: &HydroState) -> Result<(), TestCaseError> {
    let f = &s.flows;
    let all = s
        .catchment_storage_l
        .iter()
        .chain(&s.storage_volume_l)
        .chain(s.reaches.iter().flat_map(|r| r.delay_line.iter().chain(std::iter::once(&r.storage_l))))
        .chain(&f.catchment_outflow)
        .chain(&f.storage_inflow)
        .chain(&f.storage_valve)
        .chain(&f.storage_overflow)
        .chain(&f.reach_outflow)
        .chain(&f.outlet_inflow);
    for v in all {
        prop_assert!(*v >= 0.0 && v.is_finite(), "negative or non-finite quantity {v}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn mass_is_conserved_on_random_graphs(spec in graph_spec()) {
        for s in simulate(&spec) {
            let scale = (s.ledger.runoff_in_l + s.ledger.initial_storage_l).max(1.0);
            prop_assert!(s.mass_imbalance_l().abs() <= 1e-6 * scale,
                "imbalance {} L against {} L", s.mass_imbalance_l(), scale);
        }
    }

    #[test]
    fn every_quantity_stays_nonnegative(spec in graph_spec()) {
        let ws = build(&spec);
        for s in simulate(&spec) {
            assert_nonnegative(&s)?;
            for i in 0..spec.storages.len() {
                prop_assert!(s.storage_depth(&ws, i) >= 0.0);
            }
        }
    }

    #[test]
    fn trajectories_are_bit_identical(spec in graph_spec()) {
        let a = simulate(&spec);
        let b = simulate(&spec);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn closed_valve_without_overflow_retains_everything(
        area in 100.0f64..10_000.0,
        rain in prop::collection::vec(0.0f64..50.0, 1..200),
    ) {
        let graph = WatershedGraph {
            catchments: vec![Catchment { id: "c".into(), area_km2: 0.5, runoff_coefficient: 0.6, reservoir_k_hours: 1.0, downstream: "pond".into() }],
            storages: vec![StorageUnit {
                id: "pond".into(),
                kind: StorageKind::Pond,
                stage_storage: StageStorage::prismatic(area).unwrap(),
                capacity_l: None,
                outlet: ValveOutlet { diameter_m: 0.5, discharge_coefficient: 0.6, count: 2, opening: 0.0, travel_rate_per_min: 0.1 },
                overflow: None,
                initial_volume_l: 0.0,
                downstream: "out".into(),
            }],
            outlets: vec![Outlet { id: "out".into(), rating: None }],
            ..Default::default()
        };
        let ws = Watershed::new(graph).unwrap();
        let mut s = HydroState::initial(&ws, 0);
        for r in rain {
            let prev = s.storage_volume_l[0];
            s = step_watershed(&ws, &s, &BTreeMap::from([("c".to_owned(), r)]), 1.0).unwrap().0;
            prop_assert_eq!(s.flows.storage_valve[0], 0.0);
            prop_assert_eq!(s.ledger.outlet_out_l, 0.0);
            prop_assert!(s.storage_volume_l[0] >= prev);
        }
    }

    #[test]
    fn valve_discharge_is_monotone(
        a in 0.0f64..=1.0, b in 0.0f64..=1.0,
        h1 in 0.0f64..20.0, h2 in 0.0f64..20.0,
        d1 in 0.0f64..2.0, d2 in 0.0f64..2.0,
        cd in 0.0f64..1.0,
    ) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (hl, hh) = (h1.min(h2), h1.max(h2));
        let (dl, dh) = (d1.min(d2), d1.max(d2));
        let q = |o, h, d| valve_discharge(o, h, d, cd).unwrap();
        prop_assert!(q(lo, hl, dl) <= q(hi, hl, dl));
        prop_assert!(q(lo, hl, dl) <= q(lo, hh, dl));
        prop_assert!(q(lo, hl, dl) <= q(lo, hl, dh));
    }

    #[test]
    fn stage_storage_inverts(
        steps in prop::collection::vec((0.01f64..2.0, 1.0f64..1e6), 1..8),
        depth in 0.0f64..20.0,
    ) {
        let mut knots = vec![(0.0, 0.0)];
        for (dd, dv) in steps {
            let (d, v) = *knots.last().unwrap();
            knots.push((d + dd, v + dv));
        }
        let curve = StageStorage::new(knots).unwrap();
        let v = curve.volume_at(depth);
        prop_assert!((curve.depth_at(v) - depth).abs() <= 1e-9 * depth.max(1.0));
    }
}

/// A single catchment under constant rain approaches `C·i·A`, and an open
/// pond below it passes that flow through once its depth settles.
#[test]
fn constant_rain_reaches_steady_state() {
    let graph = WatershedGraph {
        catchments: vec![Catchment {
            id: "c".into(),
            area_km2: 1.0,
            runoff_coefficient: 0.5,
            reservoir_k_hours: 1.0,
            downstream: "pond".into(),
        }],
        storages: vec![StorageUnit {
            id: "pond".into(),
            kind: StorageKind::Pond,
            stage_storage: StageStorage::prismatic(200.0).unwrap(),
            capacity_l: None,
            outlet: ValveOutlet {
                diameter_m: 0.4,
                discharge_coefficient: 0.6,
                count: 1,
                opening: 1.0,
                travel_rate_per_min: 0.1,
            },
            overflow: None,
            initial_volume_l: 0.0,
            downstream: "out".into(),
        }],
        outlets: vec![Outlet { id: "out".into(), rating: None }],
        ..Default::default()
    };
    let ws = Watershed::new(graph).unwrap();
    let rain = BTreeMap::from([("c".to_owned(), 10.0)]);
    let mut s = HydroState::initial(&ws, 0);
    for _ in 0..(48 * 60) {
        s = step_watershed(&ws, &s, &rain, 1.0).unwrap().0;
    }
    // 0.5 · 10 mm/h · 1 km² = 5000 m³/h
    let expected = 0.5 * 10.0e-3 * 1.0e6 / 3600.0;
    assert!((s.flows.catchment_outflow[0] - expected).abs() < 1e-6 * expected);
    assert!((s.flows.outlet_inflow[0] - expected).abs() < 1e-6 * expected);
    // orifice head at equilibrium: Q = cd·A·sqrt(2gh)
    let area = std::f64::consts::PI * 0.4 * 0.4 / 4.0;
    let head = (expected / (0.6 * area)).powi(2) / (2.0 * GRAVITY);
    assert!((s.storage_depth(&ws, 0) - head).abs() < 1e-4, "depth {} vs {head}", s.storage_depth(&ws, 0));
}

fn outlet_volume(scenario: &Scenario) -> f64 {
    Simulation::new(scenario, RunOptions::default()).unwrap().run().unwrap().trace.ledger.outlet_out_l
}

#[test]
fn halving_dt_changes_outlet_volume_by_less_than_one_percent() {
    for base in [Scenario::builtin("malletts-hold-release").unwrap().uncontrolled(), Scenario::builtin("malletts-hold-release").unwrap()] {
        let coarse = outlet_volume(&base);
        let mut fine = base.clone();
        fine.hydro_dt_min = base.hydro_dt_min / 2.0;
        let fine = outlet_volume(&fine);
        let change = (coarse - fine).abs() / fine;
        assert!(change < 0.01, "{}: {coarse} L vs {fine} L ({:.4}%)", base.name, change * 100.0);
    }
}

#[test]
fn every_builtin_scenario_conserves_mass() {
    for name in Scenario::builtin_names() {
        let report = run_scenario(&Scenario::builtin(name).unwrap(), RunOptions::default()).unwrap();
        assert!(report.controlled.trace.max_mass_imbalance_rel <= 1e-6, "{name}");
        if let Some(u) = &report.uncontrolled {
            assert!(u.trace.max_mass_imbalance_rel <= 1e-6, "{name} uncontrolled");
        }
    }
}
