// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{build, max_path_time_oracle, random_add_dag, random_mixed_design, Built};
use fragsynth::cost::{bind_lanes, cost_report, mux_counts, original_costs, register_bits, StoredSignal};
use fragsynth::dfg::{DataFlowGraph, OpKind};
use fragsynth::dsl::parse;
use fragsynth::fixtures;
use fragsynth::fragment::{Fragmentation, FragmentKind};
use fragsynth::schedule::{verify_schedule, Schedule};
use fragsynth::sim::{check_equiv, EquivTarget, Strategy};
use fragsynth::timing::{bit_arrivals, critical_path, estimate_cycle};

const SEED: u64 = 0x5eed;

fn fixture(text: &str) -> DataFlowGraph {
    parse(text).expect("fixture parses")
}

fn check_equivalent(g: &DataFlowGraph, b: &Built, strategy: Strategy) {
    let target = EquivTarget::schedule(&b.schedule, &b.fragmentation.design);
    let r = check_equiv(g, &target, strategy).expect("simulation runs");
    assert!(r.passed(), "{}: counterexample {:?}", g.name, r.counterexample);
}

/// Widths of every fragment of `parent`, LSB first, plus tiling.
fn assert_tiles(f: &Fragmentation, parent: &str, width: u32) -> Vec<u32> {
    let mut next = 0;
    let mut widths = Vec::new();
    for fr in f.of_parent(parent) {
        assert_eq!(fr.lo, next, "{parent}: gap or overlap at bit {next}");
        next = fr.hi + 1;
        widths.push(fr.width());
    }
    assert_eq!(next, width, "{parent}: fragments do not cover the op");
    widths
}

fn parent_bit(f: &Fragmentation, sig: &StoredSignal) -> String {
    let fr = |id: &str| f.fragments.iter().find(|x| x.id == id).unwrap().clone();
    match sig {
        StoredSignal::Bit { op, bit } => {
            let x = fr(op);
            format!("{}{}", x.parent, x.lo + bit)
        }
        StoredSignal::Carry { op } => format!("carry {}", fr(op).parent),
    }
}

fn criterion_1() {
    let start = Instant::now();
    let g = fixture(fixtures::MOTIVATIONAL);
    let cp = critical_path(&g);
    assert_eq!(cp.time, 18);
    assert_eq!(cp.ops, ["C", "E", "G"]);
    assert_eq!(estimate_cycle(&g, 3).unwrap(), 6);
    assert!(start.elapsed() < Duration::from_secs(1), "took {:?}", start.elapsed());
}

fn criterion_2() {
    let b = build(&fixture(fixtures::MOTIVATIONAL), 3);
    let f = &b.fragmentation;
    let c: Vec<(u32, u32)> = f.of_parent("C").map(|x| (x.hi, x.lo)).collect();
    assert_eq!(c, [(5, 0), (11, 6), (15, 12)]);
    for op in ["C", "E", "G"] {
        assert_tiles(f, op, 16);
    }
}

fn criterion_3() {
    let g = fixture(fixtures::MOTIVATIONAL);
    let b = build(&g, 3);
    let design = &b.fragmentation.design;
    let binding = bind_lanes(&b.schedule);
    let widths: Vec<u32> = binding.adders().map(|l| l.width).collect();
    assert_eq!(widths, [6, 6, 6]);

    let sets = register_bits(&b.schedule, design);
    assert_eq!(sets.max(), 5);
    let first = &sets.boundaries[0];
    let mut names: Vec<String> = first.data.iter().chain(&first.carries).map(|s| parent_bit(&b.fragmentation, s)).collect();
    names.sort();
    assert_eq!(names, ["C5", "E4", "carry C", "carry E", "carry G"]);

    let muxes = mux_counts(&b.schedule, design, &binding);
    assert_eq!(muxes.ports.len(), 6);
    assert!(muxes.ports.iter().all(|p| p.fan_in == 3 && p.width == 6), "{:?}", muxes.ports);
    let data: Vec<u32> = muxes.registers.iter().filter(|r| !r.carry).map(|r| r.fan_in).collect();
    assert_eq!(data, [2, 2]);
    assert!(muxes.registers.iter().all(|r| r.width == 1));

    let o = original_costs(&g);
    assert_eq!((o.adders, o.adder_width), (1, 16));
    assert_eq!(o.port_fan_in, [3, 3]);
    assert_eq!(o.registers.len(), 1);
    assert_eq!((o.registers[0].width, o.registers[0].fan_in()), (16, 2));

    let report = cost_report(&b.schedule, design, &b.kernel);
    assert_eq!(report.registers.max, 5);
}

fn criterion_4() {
    let g = fixture(fixtures::FIG3);
    let cp = critical_path(&g);
    assert_eq!(cp.time, 9);
    assert!(cp.ops == ["F", "H"] || cp.ops == ["G", "H"], "{:?}", cp.ops);
    assert_eq!(estimate_cycle(&g, 3).unwrap(), 3);
    let b = build(&g, 3);
    let f = &b.fragmentation;
    assert_eq!(f.ranges("F"), [(0, 2, 1, 1), (3, 5, 2, 2), (6, 7, 3, 3)]);
    assert_eq!(f.ranges("B"), [(0, 1, 1, 1), (2, 2, 1, 2), (3, 4, 2, 2), (5, 5, 2, 3)]);
    let cycles: Vec<u32> = f.of_parent("F").map(|x| b.schedule.cycle_of(&x.id).unwrap()).collect();
    assert_eq!(cycles, [1, 2, 3]);
}

fn criterion_5() {
    let start = Instant::now();
    for seed in 0..100 {
        let g = random_add_dag(SEED + seed, 12);
        assert_eq!(bit_arrivals(&g).max(), max_path_time_oracle(&g), "seed {}", SEED + seed);
    }
    assert!(start.elapsed() < Duration::from_secs(10), "took {:?}", start.elapsed());
}

/// Designs exercising each lowering rule at every operand width up to 4.
fn lowering_designs() -> Vec<String> {
    let mut out = Vec::new();
    for m in 1..=4u32 {
        for n in 1..=4u32 {
            for s in ['u', 's'] {
                let w = m.max(n);
                let mut ops = vec![
                    format!("d: sub {s}{w} = a - b;"),
                    format!("l: lt {s}1 = a < b;"),
                    format!("x: max {s}{w} = a, b;"),
                    format!("y: min {s}{w} = a, b;"),
                ];
                if s == 'u' || (m >= 2 && n >= 2) {
                    ops.push(format!("p: mult {s}{} = a * b;", m + n));
                }
                let outs: String = ops.iter().map(|o| format!("output {};", &o[..1])).collect();
                out.push(format!("design low; input a: {s}{m}; input b: {s}{n}; {} {outs}", ops.join(" ")));
            }
        }
    }
    out
}

fn criterion_6() {
    for text in lowering_designs() {
        let g = parse(&text).unwrap();
        let (k, _) = fragsynth::kernel::extract_kernel(&g).unwrap();
        assert!(k.ops.iter().all(|o| o.kind.is_kernel()));
        let r = check_equiv(&g, &EquivTarget::Design(&k), Strategy::Exhaustive).unwrap();
        assert!(r.passed(), "{text}: {:?}", r.counterexample);
    }
    for text in [fixtures::MOTIVATIONAL, fixtures::FIG3] {
        let g = fixture(text);
        let b = build(&g, 3);
        check_equivalent(&g, &b, Strategy::Random { vectors: 1000, seed: SEED });
    }
    for seed in 0..50 {
        let g = random_mixed_design(SEED + seed, 10);
        let b = build(&g, 1 + (seed as u32 % 4));
        check_equivalent(&g, &b, Strategy::auto(&g, seed));
    }
}

fn assert_legal(s: &Schedule, b: &Built) {
    let design = &b.fragmentation.design;
    if let Err(v) = verify_schedule(s, design) {
        panic!("{}: {v:?}", design.name);
    }
    for (f, &c) in s.fragments.iter().zip(&s.assignment) {
        assert!(f.asap <= c && c <= f.alap, "{} at {c} outside [{}, {}]", f.id, f.asap, f.alap);
        if let fragsynth::fragment::CarryPred::Op(p) = &f.carry_pred {
            assert!(s.cycle_of(p).unwrap() <= c, "{} before its carry source {p}", f.id);
        }
    }
    for row in &s.placement {
        assert!(row.iter().all(|p| p.depth <= s.n_bits));
    }
}

fn criterion_7() {
    let mut count = 0;
    for (_, text) in fixtures::ALL {
        let g = fixture(text);
        for latency in [1, 2, 3, 4, 6, 11] {
            let b = build(&g, latency);
            assert_legal(&b.schedule, &b);
            count += 1;
        }
    }
    for seed in 0..50 {
        let g = random_mixed_design(SEED + seed, 10);
        let b = build(&g, 1 + (seed as u32 % 4));
        assert_legal(&b.schedule, &b);
        count += 1;
    }
    assert!(count > 0);
}

fn criterion_8() {
    let b = build(&fixture(fixtures::SATURATION), 3);
    let s = &b.schedule;
    let x: Vec<u32> = b.fragmentation.of_parent("X").map(|f| s.cycle_of(&f.id).unwrap()).collect();
    assert_eq!(x, [1, 3]);
    let middle: Vec<&str> =
        s.fragments.iter().zip(&s.assignment).filter(|(_, &c)| c == 2).map(|(f, _)| f.parent.as_str()).collect();
    assert!(!middle.is_empty() && !middle.contains(&"X"), "{middle:?}");
}

fn criterion_9() {
    for text in [fixtures::ELLIPTIC, fixtures::DIFFEQ] {
        let g = fixture(text);
        for latency in [4, 6, 11] {
            let b = build(&g, latency);
            let time = critical_path(&b.kernel).time;
            assert_eq!(b.schedule.n_bits, time.div_ceil(latency));
            assert_legal(&b.schedule, &b);
            let widest = b.kernel.ops.iter().filter(|o| o.kind == OpKind::Add).map(|o| o.width).max().unwrap();
            assert!(b.schedule.n_bits < widest, "{}: λ={latency} cycle {} ≥ {widest}", g.name, b.schedule.n_bits);
            assert!(b.fragmentation.fragments.iter().any(|f| f.kind == FragmentKind::Add));
        }
    }
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        ("1 chain critical path and cycle estimate", criterion_1),
        ("2 chain fragmentation", criterion_2),
        ("3 chain lanes, registers, muxes, original column", criterion_3),
        ("4 fig3 fixture timing and fragments", criterion_4),
        ("5 timing oracle on 100 random add DAGs", criterion_5),
        ("6 semantic preservation", criterion_6),
        ("7 schedule legality", criterion_7),
        ("8 unconsecutive-cycle execution", criterion_8),
        ("9 benchmark cycle independent of op width", criterion_9),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        match catch_unwind(AssertUnwindSafe(f)) {
            Ok(()) => println!("PASS criterion {name} ({:.2?})", start.elapsed()),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL criterion {name}: {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
