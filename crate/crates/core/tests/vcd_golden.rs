// SPDX-License-Identifier: Apache-2.0

use blade_dlt_core::model::scan_load_direct;
use blade_dlt_core::sim::{emit_vcd, simulate};
use blade_dlt_core::{PipelineSpec, ScanVector, StageSpec, Time};

fn e3() -> PipelineSpec {
    PipelineSpec::from_delays(&[(60, 100), (70, 150), (50, 120)]).unwrap()
}

fn step1_vcd(p: &PipelineSpec) -> Vec<u8> {
    let scan = scan_load_direct(p.len(), &ScanVector::all_err0(p.len())).unwrap();
    emit_vcd(&simulate(p, &scan, Time::ZERO), p)
}

#[test]
fn e3_step1_matches_golden() {
    let golden = include_bytes!("fixtures/e3_step1.vcd");
    assert_eq!(step1_vcd(&e3()), golden.as_slice());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let p = e3();
    assert_eq!(step1_vcd(&p), step1_vcd(&p));
}

#[test]
fn stage_names_become_scopes() {
    let p = PipelineSpec::new(vec![
        StageSpec::new("fetch unit", 5, 10),
        StageSpec::new("alu", 5, 10),
    ])
    .unwrap();
    let text = String::from_utf8(step1_vcd(&p)).unwrap();
    assert!(text.contains("$scope module fetch_unit $end"));
    assert!(text.contains("$scope module alu $end"));
    assert!(text.contains("#20\n1\"\n1#\n"));
}
