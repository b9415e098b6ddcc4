// SPDX-License-Identifier: Apache-2.0

use blade_dlt_core::analysis::{
    error_bounds, inject_fault, monte_carlo_sweep, FaultKind, FaultSpec, Rounding, TesterModel,
};
use blade_dlt_core::model::{
    closed_form_schedule, scan_load_direct, scan_load_serial, LineKind, Schedule,
};
use blade_dlt_core::orchestrator::{extract_all, judge, SimulatedDevice, TimingSpec, Verdict};
use blade_dlt_core::sim::{simulate, Pin, SignalId, StageNet};
use blade_dlt_core::{ForcedError, PipelineSpec, ScanVector, Time};
use proptest::prelude::*;

/// Random pipeline with every Δⱼ at most its downstream δ sum.
fn p1_pipeline(max_n: usize, max_delay: u64) -> impl Strategy<Value = PipelineSpec> {
    (2..=max_n)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(10..=max_delay, n),
                prop::collection::vec(0.0f64..=1.0, n),
            )
        })
        .prop_map(|(small, frac)| {
            let n = small.len();
            let delays: Vec<(u64, u64)> = (0..n)
                .map(|j| {
                    let tail: u64 = small[j..].iter().sum();
                    let big = 1 + ((tail - 1) as f64 * frac[j]) as u64;
                    (big, small[j])
                })
                .collect();
            PipelineSpec::from_delays(&delays).unwrap()
        })
}

fn any_pipeline() -> impl Strategy<Value = PipelineSpec> {
    (2usize..=16)
        .prop_flat_map(|n| prop::collection::vec((1u64..=1_000_000, 1u64..=1_000_000), n))
        .prop_map(|d| PipelineSpec::from_delays(&d).unwrap())
}

fn fields(s: &Schedule) -> Vec<Option<Time>> {
    s.arrival
        .iter()
        .chain(&s.sample_rise)
        .chain(&s.err_rise)
        .chain(&s.extension_end)
        .chain([&s.rreq_out, &s.reack_out])
        .copied()
        .map(Some)
        .chain([s.error1_rise])
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn schedule_monotone_in_every_delay(
        p in any_pipeline(),
        mask in any::<u64>(),
        which in any::<prop::sample::Index>(),
        big in any::<bool>(),
        bump in 1u64..1000,
    ) {
        let n = p.len();
        let scan = ScanVector::from_mask(n, mask);
        let stage = which.index(n);
        let line = if big { LineKind::DeltaBig } else { LineKind::DeltaSmall };
        let fault = FaultSpec { line, stage, kind: FaultKind::Offset(bump as i64) };
        let slower = inject_fault(&p, &fault).unwrap();
        let a = closed_form_schedule(&p, &scan, Time::ZERO).unwrap();
        let b = closed_form_schedule(&slower, &scan, Time::ZERO).unwrap();
        for (x, y) in fields(&a).into_iter().zip(fields(&b)) {
            prop_assert!(y >= x);
        }
    }

    #[test]
    fn single_extension_adds_exactly_delta_big(p in p1_pipeline(16, 1_000_000), t0 in 0u64..10_000) {
        let n = p.len();
        let t0 = Time::from_ps(t0);
        let base = closed_form_schedule(&p, &ScanVector::all_err0(n), t0).unwrap();
        prop_assert_eq!(base.rreq_out.signed() - t0.signed(), p.total_delta_small().signed());
        for i in 0..n {
            let ext = closed_form_schedule(&p, &ScanVector::single_err1(n, i), t0).unwrap();
            prop_assert_eq!(ext.reack_out.signed() - base.reack_out.signed(), p.delta_big(i).signed());
        }
    }

    #[test]
    fn rreq_is_total_delta_small_without_p1(p in any_pipeline()) {
        let s = closed_form_schedule(&p, &ScanVector::all_err0(p.len()), Time::from_ps(5)).unwrap();
        prop_assert_eq!(s.rreq_out.as_ps() - 5, p.total_delta_small().as_ps());
    }

    #[test]
    fn round_trip_is_exact(p in p1_pipeline(16, 1_000_000)) {
        let r = extract_all(&SimulatedDevice::new(p.clone()));
        prop_assert!(r.matches(&p));
        prop_assert_eq!(r.residual, Some(0));
        prop_assert!(r.warnings.is_empty());
        // independently measured δ̂ never exceed T_Sum
        let measured: i64 = r.delta_small_hat[..p.len() - 1].iter().map(|v| v.unwrap()).sum();
        prop_assert!(measured <= r.t_sum.unwrap());
    }

    #[test]
    fn delta_small_fault_does_not_touch_delta_big(
        p in p1_pipeline(8, 10_000),
        which in any::<prop::sample::Index>(),
        grow in 1u64..500,
    ) {
        // growing a δ keeps P1 intact
        let j = which.index(p.len());
        let fault = FaultSpec { line: LineKind::DeltaSmall, stage: j, kind: FaultKind::Offset(grow as i64) };
        let faulty = inject_fault(&p, &fault).unwrap();
        let r = extract_all(&SimulatedDevice::new(faulty.clone()));
        for i in 0..p.len() {
            prop_assert_eq!(r.delta_big_hat[i], Some(p.delta_big(i).signed()));
            let expected = faulty.delta_small(i).signed();
            prop_assert_eq!(r.delta_small_hat[i], Some(expected));
        }
        prop_assert_eq!(r.t_sum, Some(faulty.total_delta_small().signed()));
    }

    #[test]
    fn large_fault_flags_exactly_its_line(
        p in p1_pipeline(6, 10_000),
        which in any::<prop::sample::Index>(),
        big in any::<bool>(),
    ) {
        // +30% on a P1 pipeline keeps P1 for δ faults; Δ faults need headroom
        let n = p.len();
        let j = which.index(n);
        let line = if big { LineKind::DeltaBig } else { LineKind::DeltaSmall };
        let faulty = inject_fault(&p, &FaultSpec { line, stage: j, kind: FaultKind::Scale(1.3) }).unwrap();
        prop_assume!(faulty.validate().is_ok());
        let spec = TimingSpec::new(p.clone(), 0.05).unwrap();
        let verdicts = judge(&extract_all(&SimulatedDevice::new(faulty)), &spec);
        for v in verdicts {
            let is_target = v.line == blade_dlt_core::orchestrator::Quantity::Line(line, j);
            let nominal = p.line(line, j).as_ps();
            // rounding can keep very short lines inside the band
            if is_target && nominal >= 20 {
                prop_assert_eq!(v.verdict, Verdict::TooSlow);
            } else if !is_target {
                prop_assert_eq!(v.verdict, Verdict::Ok);
            }
        }
    }
}

#[test]
fn event_trace_matches_closed_form_on_random_pairs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..1000 {
        let n = rng.random_range(2..=16);
        let delays: Vec<(u64, u64)> = (0..n)
            .map(|_| {
                (
                    rng.random_range(1..=1_000_000),
                    rng.random_range(1..=1_000_000),
                )
            })
            .collect();
        let p = PipelineSpec::from_delays(&delays).unwrap();
        let v = ScanVector::from_mask(n, rng.random());
        let t0 = Time::from_ps(rng.random_range(0..1000));
        let sched = closed_form_schedule(&p, &v, t0).unwrap();
        let trace = simulate(&p, &scan_load_direct(n, &v).unwrap(), t0);
        assert_eq!(trace.pin(Pin::Rreq), Some(sched.rreq_out));
        assert_eq!(trace.pin(Pin::REack), Some(sched.reack_out));
        assert_eq!(trace.pin(Pin::Error1), sched.error1_rise);
        for i in 0..n {
            let err_net = match v.bits()[i] {
                ForcedError::Err0 => StageNet::Err0,
                ForcedError::Err1 => StageNet::Err1,
            };
            assert_eq!(
                trace.first_rise(SignalId::Stage(i, StageNet::Clk)),
                Some(sched.clk_rise[i])
            );
            assert_eq!(
                trace.first_rise(SignalId::Stage(i, StageNet::Sample)),
                Some(sched.sample_rise[i])
            );
            assert_eq!(
                trace.first_rise(SignalId::Stage(i, err_net)),
                Some(sched.err_rise[i])
            );
        }
    }
}

#[test]
fn serial_and_direct_scan_agree_exhaustively() {
    for n in 2..=10 {
        for mask in 0..(1u64 << n) {
            let v = ScanVector::from_mask(n, mask);
            let direct = scan_load_direct(n, &v).unwrap();
            let serial = scan_load_serial(n, &v.shift_sequence()).unwrap();
            assert_eq!(direct, serial, "n={n} mask={mask:#b}");
        }
    }
}

#[test]
fn sweep_errors_stay_inside_bounds() {
    let p = PipelineSpec::from_delays(&[(60, 100), (70, 150), (50, 120)]).unwrap();
    let dev = SimulatedDevice::new(p.clone());
    for rounding in [Rounding::Nearest, Rounding::Floor] {
        for r in [3, 8, 13] {
            let tester = TesterModel::new(r, rounding).unwrap();
            let s = monte_carlo_sweep(&dev, &tester, 300, r).unwrap();
            assert!(s.all_within_bounds(), "{rounding:?} r={r}: {s:?}");
            let b = error_bounds(&p, &tester);
            for row in &s.rows {
                assert_eq!(Some(row.bound), b.get(row.quantity).map(|q| q.error));
            }
        }
    }
}
