// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use fragsynth::dfg::{validate, DataFlowGraph, OpKind, Operand, Operation, Output, Signedness};
use fragsynth::timing::path_time;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick_source(g: &DataFlowGraph, rng: &mut impl Rng) -> (Operand, u32) {
    let n_in = g.inputs.len();
    let k = rng.gen_range(0..n_in + g.ops.len());
    if k < n_in {
        (Operand::input(&g.inputs[k].name), g.inputs[k].width)
    } else {
        let op = &g.ops[k - n_in];
        (Operand::result(&op.id), op.width)
    }
}

/// All-ADD DAG with up to `max_ops` ops of widths 1..=32. A slice drops low
/// bits only when the consumer is narrower than the producer, the case the
/// path formula charges for truncation.
pub fn random_add_dag(seed: u64, max_ops: usize) -> DataFlowGraph {
    let mut r = rng(seed);
    let mut g = DataFlowGraph::new(format!("adds{seed}"));
    for i in 0..r.gen_range(1..=3) {
        let w = r.gen_range(1..=32);
        g.add_input(format!("i{i}"), w, Signedness::Unsigned);
    }
    for k in 0..r.gen_range(1..=max_ops) {
        let w = r.gen_range(1..=32);
        let mut operands = Vec::new();
        for _ in 0..2 {
            let (o, sw) = pick_source(&g, &mut r);
            let o = if sw > w && r.gen_bool(0.6) {
                let lo = r.gen_range(1..=sw - w);
                let hi = r.gen_range(lo..sw);
                o.sliced(hi, lo)
            } else if sw > 1 && r.gen_bool(0.2) {
                o.sliced(r.gen_range(0..sw), 0)
            } else {
                o
            };
            operands.push(o);
        }
        g.ops.push(Operation::new(format!("n{k}"), OpKind::Add, w, operands));
    }
    for op in &g.ops {
        g.outputs.push(Output::named(op.id.clone()));
    }
    validate(&g).expect("generator builds valid graphs");
    g
}

/// Maximum `path_time` over every dependency path of an all-ADD graph,
/// found by enumerating paths explicitly.
pub fn max_path_time_oracle(g: &DataFlowGraph) -> u32 {
    let names = g.name_table();
    let preds: Vec<Vec<usize>> =
        (0..g.ops.len()).map(|i| g.op_dependencies(i, &names).into_iter().collect()).collect();
    let mut best = 0;
    fn walk(g: &DataFlowGraph, preds: &[Vec<usize>], path: &mut Vec<usize>, best: &mut u32) {
        let ids: Vec<&str> = path.iter().rev().map(|&i| g.ops[i].id.as_str()).collect();
        *best = (*best).max(path_time(g, &ids).expect("connected path"));
        let head = *path.last().unwrap();
        for &p in &preds[head] {
            path.push(p);
            walk(g, preds, path, best);
            path.pop();
        }
    }
    for end in 0..g.ops.len() {
        walk(g, &preds, &mut vec![end], &mut best);
    }
    best
}

/// Mixed design over every operation kind with at most `max_input_bits`
/// of primary inputs. Multiplies read primary inputs only.
pub fn random_mixed_design(seed: u64, max_input_bits: u32) -> DataFlowGraph {
    let mut r = rng(seed);
    let mut g = DataFlowGraph::new(format!("mixed{seed}"));
    let mut budget = max_input_bits;
    let n_inputs = r.gen_range(2..=3);
    for i in 0..n_inputs {
        let left = n_inputs - i - 1;
        let w = r.gen_range(2..=(budget - 2 * left).min(5));
        budget -= w;
        let s = if r.gen_bool(0.4) { Signedness::Signed } else { Signedness::Unsigned };
        g.add_input(format!("i{i}"), w, s);
    }
    let kinds = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mult,
        OpKind::Lt,
        OpKind::Max,
        OpKind::Min,
        OpKind::Not,
        OpKind::Select,
        OpKind::Add,
    ];
    for k in 0..r.gen_range(1..=6) {
        let kind = kinds[r.gen_range(0..kinds.len())];
        let signed = r.gen_bool(0.4);
        let id = format!("n{k}");
        let op = match kind {
            OpKind::Mult => {
                let a = &g.inputs[r.gen_range(0..g.inputs.len())];
                let b = &g.inputs[r.gen_range(0..g.inputs.len())];
                let w = r.gen_range(2..=a.width + b.width);
                Operation::new(id, kind, w, vec![Operand::input(&a.name), Operand::input(&b.name)])
            }
            OpKind::Lt => {
                let operands = (0..2).map(|_| pick_source(&g, &mut r).0).collect();
                Operation::new(id, kind, 1, operands)
            }
            OpKind::Not => Operation::new(id, kind, r.gen_range(1..=6), vec![pick_source(&g, &mut r).0]),
            OpKind::Select => {
                let (c, cw) = pick_source(&g, &mut r);
                let bit = r.gen_range(0..cw);
                let cond = if cw == 1 { c } else { c.sliced(bit, bit) };
                let a = pick_source(&g, &mut r).0;
                let b = pick_source(&g, &mut r).0;
                Operation::new(id, kind, r.gen_range(1..=6), vec![cond, a, b])
            }
            _ => {
                let mut operands = Vec::new();
                for _ in 0..2 {
                    let (o, sw) = pick_source(&g, &mut r);
                    let o = if sw > 2 && r.gen_bool(0.25) {
                        let lo = r.gen_range(0..sw - 1);
                        o.sliced(r.gen_range(lo + 1..sw), lo)
                    } else {
                        o
                    };
                    operands.push(o);
                }
                Operation::new(id, kind, r.gen_range(1..=6), operands)
            }
        };
        // Inputs are at least 2 bits wide, so signed multiplies always lower.
        g.ops.push(if signed { op.signed() } else { op });
    }
    for op in &g.ops {
        g.outputs.push(Output::named(op.id.clone()));
    }
    validate(&g).expect("generator builds valid graphs");
    g
}

pub struct Built {
    pub kernel: DataFlowGraph,
    pub fragmentation: fragsynth::fragment::Fragmentation,
    pub schedule: fragsynth::schedule::Schedule,
}

/// Kernel extraction, fragmentation at `n_bits = ⌈T/λ⌉`, and scheduling.
pub fn build(g: &DataFlowGraph, latency: u32) -> Built {
    let (kernel, _) = fragsynth::kernel::extract_kernel(g).expect("kernel extraction");
    let n_bits = fragsynth::timing::estimate_cycle(&kernel, latency).unwrap();
    let m = fragsynth::fragment::mobility(&kernel, n_bits, latency).expect("mobility");
    let fragmentation = fragsynth::fragment::fragment(&kernel, &m);
    let schedule = fragsynth::schedule::schedule(&fragmentation, latency, n_bits).expect("schedule");
    Built { kernel, fragmentation, schedule }
}
