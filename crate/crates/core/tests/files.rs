use std::fs;

use storage_fleet::engine::simulate_values;
use storage_fleet::engine::SimTable;
use storage_fleet::traces::{
    load_csv, synthesize, synthetic_trace, SynthParams, TraceError, TraceOrigin,
};
use storage_fleet::{FleetState, PolicyKind, StoreSpec};

#[test]
fn saved_trace_loads_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let params = SynthParams {
        years: 0.1,
        seed: 4,
        ..SynthParams::default()
    };
    let t = synthetic_trace(&params, 0.25).unwrap();
    t.save_csv(&path).unwrap();
    let back = load_csv(&path).unwrap();
    assert_eq!(back.values(), t.values());
    assert_eq!(back.origin, TraceOrigin::Csv(path.clone()));
}

#[test]
fn component_file_yields_generation_minus_demand() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("components.csv");
    let c = synthesize(&SynthParams {
        years: 0.05,
        ..SynthParams::default()
    })
    .unwrap();
    c.write_csv(fs::File::create(&path).unwrap()).unwrap();
    let t = load_csv(&path).unwrap();
    assert_eq!(t.values(), c.residual().as_slice());
}

#[test]
fn bad_files_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "residual_mw\n1.0\n2.0\nabc\n").unwrap();
    assert!(matches!(
        load_csv(&path),
        Err(TraceError::Parse { line: 4, .. })
    ));
    fs::write(&path, "load\n1.0\n").unwrap();
    assert!(matches!(load_csv(&path), Err(TraceError::Schema(_))));
    assert!(matches!(
        load_csv(&dir.path().join("missing.csv")),
        Err(TraceError::Io(_))
    ));
}

#[test]
fn simulation_table_round_trips_through_a_file() {
    let fleet = [
        StoreSpec::new("long", 50.0, 5.0, 4.0, 0.4),
        StoreSpec::new("short", 8.0, 10.0, 10.0, 0.9),
    ];
    let trace = [3.0, -7.0, 12.0, -1.5, 0.0, -20.0];
    let r = simulate_values(
        &fleet,
        &FleetState::full(&fleet),
        &trace,
        &PolicyKind::Grtef,
    )
    .unwrap();
    let table = SimTable::from_result(&fleet, &trace, &r, &[1.0, 1.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    table.write_csv(fs::File::create(&path).unwrap()).unwrap();
    let back = SimTable::read_csv(fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, table);
}
