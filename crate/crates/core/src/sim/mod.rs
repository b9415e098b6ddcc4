// SPDX-License-Identifier: Apache-2.0

//! Discrete-event simulation of the pipeline under test.
//!
//! Every controller is a small state machine and every delay line is a
//! scheduled future action. The kernel runs one request from `Lreq` through
//! an empty pipeline until the event queue drains, recording rising edges
//! on the pins and on each stage's `CLK`, `Sample`, `err0` and `err1` nets.
//!
//! Nothing here consults the analytic schedule in [`crate::model`]; the two
//! are kept independent so each can check the other.

mod vcd;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::ParasiticModel;
use crate::model::{ForcedError, PipelineSpec, ScanState, Time};

pub use vcd::{emit_vcd, write_vcd};

/// Primary pins observed by the tester.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pin {
    Lreq,
    Rreq,
    REack,
    Error1,
}

impl Pin {
    pub const ALL: [Pin; 4] = [Pin::Lreq, Pin::Rreq, Pin::REack, Pin::Error1];

    pub fn name(self) -> &'static str {
        match self {
            Pin::Lreq => "Lreq",
            Pin::Rreq => "Rreq",
            Pin::REack => "REack",
            Pin::Error1 => "Error1",
        }
    }
}

/// Per-controller internal nets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageNet {
    Clk,
    Sample,
    Err0,
    Err1,
}

impl StageNet {
    pub const ALL: [StageNet; 4] = [
        StageNet::Clk,
        StageNet::Sample,
        StageNet::Err0,
        StageNet::Err1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageNet::Clk => "CLK",
            StageNet::Sample => "Sample",
            StageNet::Err0 => "err0",
            StageNet::Err1 => "err1",
        }
    }
}

/// A traced signal. The derived order (stage nets by index, pins last) is
/// the trace's tie-break order for simultaneous edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignalId {
    Stage(usize, StageNet),
    Pin(Pin),
}

impl fmt::Display for SignalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalId::Stage(i, net) => write!(f, "C{i}.{}", net.name()),
            SignalId::Pin(p) => f.write_str(p.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Rise,
    Fall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub time: Time,
    pub signal: SignalId,
    pub edge: Edge,
    pub seq: u64,
}

/// Recorded edges, sorted by `(time, signal, seq)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    events: Vec<Event>,
}

impl EventTrace {
    /// Wraps externally produced events, restoring trace order.
    pub fn from_events(mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| (e.time, e.signal, e.seq));
        EventTrace { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_rise(&self, signal: SignalId) -> Option<Time> {
        self.events
            .iter()
            .find(|e| e.signal == signal && e.edge == Edge::Rise)
            .map(|e| e.time)
    }

    pub fn pin(&self, pin: Pin) -> Option<Time> {
        self.first_rise(SignalId::Pin(pin))
    }

    pub fn rise_count(&self, signal: SignalId) -> usize {
        self.events
            .iter()
            .filter(|e| e.signal == signal && e.edge == Edge::Rise)
            .count()
    }
}

/// Free function form of [`EventTrace::first_rise`].
pub fn first_rise(trace: &EventTrace, signal: SignalId) -> Option<Time> {
    trace.first_rise(signal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerState {
    Idle,
    ClkHigh,
    Extending,
    Resolved,
}

/// Order among actions scheduled for the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieOrder {
    /// Stage index ascending, pin actions last, then insertion order.
    #[default]
    Canonical,
    /// Exact reverse of [`TieOrder::Canonical`]; used to show that
    /// outcomes do not depend on tie-breaking.
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Stimulus,
    ClkRise(usize),
    SampleRise(usize),
    ForwardArrive(usize),
    ForwardRelease(usize),
    ExtensionDone(usize),
    RreqPin,
    Error1Pin,
    REackPin,
}

impl Action {
    fn rank(self) -> usize {
        match self {
            Action::ClkRise(i)
            | Action::SampleRise(i)
            | Action::ForwardArrive(i)
            | Action::ForwardRelease(i)
            | Action::ExtensionDone(i) => i,
            Action::Stimulus | Action::RreqPin | Action::Error1Pin | Action::REackPin => usize::MAX,
        }
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord)]
struct QueueKey {
    time: Time,
    rank: i128,
    seq: i128,
}

/// One reset-to-quiescence run of the pipeline.
pub struct Simulator<'a> {
    pipeline: &'a PipelineSpec,
    scan: &'a ScanState,
    parasitics: &'a ParasiticModel,
    tie_order: TieOrder,
    queue: BinaryHeap<Reverse<(QueueKey, usize)>>,
    actions: Vec<Action>,
    states: Vec<ControllerState>,
    pending_completions: usize,
    error1_high: bool,
    next_seq: u64,
    recorded: Vec<Event>,
}

impl<'a> Simulator<'a> {
    pub fn new(
        pipeline: &'a PipelineSpec,
        scan: &'a ScanState,
        parasitics: &'a ParasiticModel,
    ) -> Self {
        assert_eq!(
            scan.len(),
            pipeline.len(),
            "scan state does not match pipeline"
        );
        parasitics
            .check(pipeline.len())
            .expect("parasitic model does not match pipeline");
        Simulator {
            pipeline,
            scan,
            parasitics,
            tie_order: TieOrder::Canonical,
            queue: BinaryHeap::new(),
            actions: Vec::new(),
            states: vec![ControllerState::Idle; pipeline.len()],
            // every controller resolves, plus the output request
            pending_completions: pipeline.len() + 1,
            error1_high: false,
            next_seq: 0,
            recorded: Vec::new(),
        }
    }

    pub fn with_tie_order(mut self, order: TieOrder) -> Self {
        self.tie_order = order;
        self
    }

    pub fn controller_states(&self) -> &[ControllerState] {
        &self.states
    }

    /// Raises `Lreq` at `t0` and runs until the queue is empty.
    pub fn run(&mut self, t0: Time) -> EventTrace {
        self.schedule(t0, Action::Stimulus);
        while let Some(Reverse((key, slot))) = self.queue.pop() {
            let action = self.actions[slot];
            self.dispatch(key.time, action);
        }
        let mut events = std::mem::take(&mut self.recorded);
        events.sort_by_key(|e| (e.time, e.signal, e.seq));
        EventTrace { events }
    }

    fn schedule(&mut self, time: Time, action: Action) {
        let slot = self.actions.len();
        self.actions.push(action);
        let (rank, seq) = (action.rank() as i128, slot as i128);
        let key = match self.tie_order {
            TieOrder::Canonical => QueueKey { time, rank, seq },
            TieOrder::Reversed => QueueKey {
                time,
                rank: -rank,
                seq: -seq,
            },
        };
        self.queue.push(Reverse((key, slot)));
    }

    fn record(&mut self, time: Time, signal: SignalId) {
        self.recorded.push(Event {
            time,
            signal,
            edge: Edge::Rise,
            seq: self.next_seq,
        });
        self.next_seq += 1;
    }

    fn transition(&mut self, stage: usize, to: ControllerState) {
        use ControllerState::*;
        let from = self.states[stage];
        let legal = matches!(
            (from, to),
            (Idle, ClkHigh) | (ClkHigh, Extending) | (ClkHigh, Resolved) | (Extending, Resolved)
        );
        assert!(
            legal,
            "controller {stage}: illegal transition {from:?} -> {to:?}"
        );
        self.states[stage] = to;
    }

    fn complete_one(&mut self, now: Time) {
        self.pending_completions -= 1;
        if self.pending_completions == 0 {
            self.schedule(now + self.parasitics.reack, Action::REackPin);
        }
    }

    fn dispatch(&mut self, now: Time, action: Action) {
        let p = self.pipeline;
        match action {
            Action::Stimulus => {
                self.record(now, SignalId::Pin(Pin::Lreq));
                self.schedule(now, Action::ClkRise(0));
            }
            Action::ClkRise(i) => {
                self.transition(i, ControllerState::ClkHigh);
                self.record(now, SignalId::Stage(i, StageNet::Clk));
                self.schedule(
                    now + p.delta_big(i) + self.parasitics.sampling[i],
                    Action::SampleRise(i),
                );
                self.schedule(
                    now + p.delta_small(i) + self.parasitics.forwarding[i],
                    Action::ForwardArrive(i),
                );
            }
            Action::SampleRise(i) => {
                self.record(now, SignalId::Stage(i, StageNet::Sample));
                // the SQF drives its forced outcome with no resolution delay
                match self.scan.forced(i) {
                    ForcedError::Err0 => {
                        self.record(now, SignalId::Stage(i, StageNet::Err0));
                        self.transition(i, ControllerState::Resolved);
                        self.complete_one(now);
                    }
                    ForcedError::Err1 => {
                        self.record(now, SignalId::Stage(i, StageNet::Err1));
                        self.transition(i, ControllerState::Extending);
                        self.schedule(now + p.delta_big(i), Action::ExtensionDone(i));
                        if !self.error1_high {
                            self.error1_high = true;
                            self.schedule(now + self.parasitics.observation, Action::Error1Pin);
                        }
                    }
                }
            }
            Action::ForwardArrive(i) => {
                let hold = match self.scan.forced(i) {
                    ForcedError::Err1 => p.delta_big(i),
                    ForcedError::Err0 => Time::ZERO,
                };
                self.schedule(now + hold, Action::ForwardRelease(i));
            }
            Action::ForwardRelease(i) => {
                if i + 1 < p.len() {
                    self.schedule(now, Action::ClkRise(i + 1));
                } else {
                    self.schedule(now, Action::RreqPin);
                }
            }
            Action::ExtensionDone(i) => {
                self.transition(i, ControllerState::Resolved);
                self.complete_one(now);
            }
            Action::RreqPin => {
                self.record(now, SignalId::Pin(Pin::Rreq));
                self.complete_one(now);
            }
            Action::Error1Pin => self.record(now, SignalId::Pin(Pin::Error1)),
            Action::REackPin => self.record(now, SignalId::Pin(Pin::REack)),
        }
    }
}

/// Simulates the ideal (parasitic-free) pipeline.
pub fn simulate(pipeline: &PipelineSpec, scan: &ScanState, t0: Time) -> EventTrace {
    simulate_with(pipeline, scan, t0, &ParasiticModel::zero(pipeline.len()))
}

pub fn simulate_with(
    pipeline: &PipelineSpec,
    scan: &ScanState,
    t0: Time,
    parasitics: &ParasiticModel,
) -> EventTrace {
    Simulator::new(pipeline, scan, parasitics).run(t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        closed_form_schedule, closed_form_schedule_with, scan_load_direct, ScanVector,
    };
    use proptest::prelude::*;

    fn e3() -> PipelineSpec {
        PipelineSpec::from_delays(&[(60, 100), (70, 150), (50, 120)]).unwrap()
    }

    fn run(p: &PipelineSpec, v: &ScanVector) -> EventTrace {
        let s = scan_load_direct(p.len(), v).unwrap();
        simulate(p, &s, Time::ZERO)
    }

    #[test]
    fn e3_all_err0_pins() {
        let t = run(&e3(), &ScanVector::all_err0(3));
        assert_eq!(t.pin(Pin::Lreq), Some(Time::ZERO));
        assert_eq!(t.pin(Pin::Rreq), Some(Time::from_ps(370)));
        assert_eq!(t.pin(Pin::REack), Some(Time::from_ps(370)));
        assert_eq!(t.pin(Pin::Error1), None);
    }

    #[test]
    fn e3_extension_on_stage0() {
        let t = run(&e3(), &ScanVector::single_err1(3, 0));
        assert_eq!(t.pin(Pin::REack), Some(Time::from_ps(430)));
    }

    #[test]
    fn e3_error1_from_stage1() {
        let t = run(&e3(), &ScanVector::single_err1(3, 1));
        assert_eq!(
            first_rise(&t, SignalId::Pin(Pin::Error1)),
            Some(Time::from_ps(170))
        );
    }

    #[test]
    fn two_stage_trivial() {
        let p = PipelineSpec::from_delays(&[(1, 5), (1, 5)]).unwrap();
        let t = run(&p, &ScanVector::all_err0(2));
        assert_eq!(t.pin(Pin::Rreq), Some(Time::from_ps(10)));
        assert_eq!(t.pin(Pin::REack), Some(Time::from_ps(10)));
    }

    #[test]
    fn controllers_end_resolved() {
        let p = e3();
        let s = scan_load_direct(p.len(), &ScanVector::from_mask(3, 0b101)).unwrap();
        let z = ParasiticModel::zero(3);
        let mut sim = Simulator::new(&p, &s, &z);
        sim.run(Time::from_ps(7));
        assert!(sim
            .controller_states()
            .iter()
            .all(|&c| c == ControllerState::Resolved));
    }

    #[test]
    fn trace_is_sorted_and_has_one_edge_per_net() {
        let p = e3();
        let t = run(&p, &ScanVector::from_mask(3, 0b110));
        let keys: Vec<_> = t
            .events()
            .iter()
            .map(|e| (e.time, e.signal, e.seq))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for i in 0..3 {
            assert_eq!(t.rise_count(SignalId::Stage(i, StageNet::Clk)), 1);
            assert_eq!(t.rise_count(SignalId::Stage(i, StageNet::Sample)), 1);
            let errs = t.rise_count(SignalId::Stage(i, StageNet::Err0))
                + t.rise_count(SignalId::Stage(i, StageNet::Err1));
            assert_eq!(errs, 1);
        }
        // OR output rises once even with two err1 stages
        assert_eq!(t.rise_count(SignalId::Pin(Pin::Error1)), 1);
        assert!(t.events().iter().all(|e| e.edge == Edge::Rise));
    }

    fn pipeline_and_scan() -> impl Strategy<Value = (PipelineSpec, ScanVector)> {
        (2usize..=16)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec((1u64..=1_000_000, 1u64..=1_000_000), n),
                    any::<u64>(),
                )
            })
            .prop_map(|(d, mask)| {
                let n = d.len();
                (
                    PipelineSpec::from_delays(&d).unwrap(),
                    ScanVector::from_mask(n, mask),
                )
            })
    }

    fn parasitics(n: usize) -> impl Strategy<Value = ParasiticModel> {
        (
            prop::collection::vec(0u64..50, n),
            prop::collection::vec(0u64..50, n),
            0u64..50,
            0u64..50,
        )
            .prop_map(|(w, u, v, rho)| ParasiticModel {
                forwarding: w.into_iter().map(Time::from_ps).collect(),
                sampling: u.into_iter().map(Time::from_ps).collect(),
                observation: Time::from_ps(v),
                reack: Time::from_ps(rho),
            })
    }

    fn assert_matches_schedule(trace: &EventTrace, sched: &crate::model::Schedule, n: usize) {
        assert_eq!(trace.pin(Pin::Lreq), Some(sched.arrival[0]));
        assert_eq!(trace.pin(Pin::Rreq), Some(sched.rreq_out));
        assert_eq!(trace.pin(Pin::REack), Some(sched.reack_out));
        assert_eq!(trace.pin(Pin::Error1), sched.error1_rise);
        for i in 0..n {
            assert_eq!(
                trace.first_rise(SignalId::Stage(i, StageNet::Clk)),
                Some(sched.clk_rise[i])
            );
            assert_eq!(
                trace.first_rise(SignalId::Stage(i, StageNet::Sample)),
                Some(sched.sample_rise[i])
            );
            let err = trace
                .first_rise(SignalId::Stage(i, StageNet::Err0))
                .or(trace.first_rise(SignalId::Stage(i, StageNet::Err1)));
            assert_eq!(err, Some(sched.err_rise[i]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn tie_order_does_not_change_first_rises((p, v) in pipeline_and_scan(), t0 in 0u64..1000) {
            let s = scan_load_direct(p.len(), &v).unwrap();
            let z = ParasiticModel::zero(p.len());
            let a = Simulator::new(&p, &s, &z).run(Time::from_ps(t0));
            let b = Simulator::new(&p, &s, &z).with_tie_order(TieOrder::Reversed).run(Time::from_ps(t0));
            let times = |t: &EventTrace| t.events().iter().map(|e| (e.time, e.signal)).collect::<Vec<_>>();
            prop_assert_eq!(times(&a), times(&b));
        }

        #[test]
        fn matches_closed_form_with_parasitics(
            (p, v, par) in pipeline_and_scan().prop_flat_map(|(p, v)| {
                let n = p.len();
                (Just(p), Just(v), parasitics(n))
            }),
            t0 in 0u64..1000,
        ) {
            let s = scan_load_direct(p.len(), &v).unwrap();
            let trace = simulate_with(&p, &s, Time::from_ps(t0), &par);
            let sched = closed_form_schedule_with(&p, &v, Time::from_ps(t0), &par).unwrap();
            assert_matches_schedule(&trace, &sched, p.len());
        }

        #[test]
        fn deterministic((p, v) in pipeline_and_scan()) {
            prop_assert_eq!(run(&p, &v), run(&p, &v));
        }
    }

    #[test]
    fn matches_closed_form_on_e3_vectors() {
        let p = e3();
        for mask in 0..8 {
            let v = ScanVector::from_mask(3, mask);
            let sched = closed_form_schedule(&p, &v, Time::ZERO).unwrap();
            assert_matches_schedule(&run(&p, &v), &sched, 3);
        }
    }
}
