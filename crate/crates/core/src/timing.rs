// SPDX-License-Identifier: Apache-2.0

//! Ripple-carry timing in units of δ, the delay of one 1-bit adder.

use serde::Serialize;
use thiserror::Error;

use crate::dfg::{bit_deps, topo_indices, BitSource, CarryIn, DataFlowGraph, OpKind, Operand, Signal, Source};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimingError {
    #[error("path is empty")]
    EmptyPath,
    #[error("no op named `{0}`")]
    UnknownOp(String),
    #[error("`{0}` is not an additive op")]
    NonAdditive(String),
    #[error("`{to}` does not depend on `{from}`")]
    Disconnected { from: String, to: String },
    #[error("latency must be at least 1")]
    ZeroLatency,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimingConfig {
    /// Delay charged to an opaque multiplier core.
    pub mult_delay: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArrivalRow {
    pub op: String,
    pub bit: u32,
    pub arrival: u32,
}

/// Arrival time of every op result bit, indexed `[op][bit]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalTable {
    pub arrivals: Vec<Vec<u32>>,
}

impl ArrivalTable {
    pub fn get(&self, op: usize, bit: u32) -> u32 {
        self.arrivals[op][bit as usize]
    }

    pub fn source(&self, s: BitSource) -> u32 {
        match s {
            BitSource::Input { .. } => 0,
            BitSource::Op { op, bit } => self.get(op, bit),
            BitSource::Carry { op } => *self.arrivals[op].last().unwrap(),
        }
    }

    pub fn max(&self) -> u32 {
        self.arrivals.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn rows(&self, g: &DataFlowGraph) -> Vec<ArrivalRow> {
        g.ops
            .iter()
            .zip(&self.arrivals)
            .flat_map(|(op, bits)| {
                bits.iter().enumerate().map(|(bit, &arrival)| ArrivalRow { op: op.id.clone(), bit: bit as u32, arrival })
            })
            .collect()
    }
}

fn cost(kind: OpKind, cfg: &TimingConfig) -> u32 {
    match kind {
        OpKind::Not | OpKind::Select => 0,
        OpKind::MultCore | OpKind::Mult => cfg.mult_delay,
        _ => 1,
    }
}

pub fn bit_arrivals(g: &DataFlowGraph) -> ArrivalTable {
    bit_arrivals_with(g, &TimingConfig::default())
}

pub fn bit_arrivals_with(g: &DataFlowGraph, cfg: &TimingConfig) -> ArrivalTable {
    let deps = bit_deps(g);
    let mut table = ArrivalTable { arrivals: g.ops.iter().map(|o| vec![0; o.width as usize]).collect() };
    for idx in topo_indices(g) {
        let op = &g.ops[idx];
        let c = cost(op.kind, cfg);
        for bit in 0..op.width {
            let ready = deps.of(idx, bit).iter().map(|&s| table.source(s)).max().unwrap_or(0);
            table.arrivals[idx][bit as usize] = ready + c;
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriticalPath {
    pub ops: Vec<String>,
    pub time: u32,
}

/// Longest bit-level chain, recovered at op granularity by walking back
/// from the latest bit through producers that determine its arrival.
pub fn critical_path(g: &DataFlowGraph) -> CriticalPath {
    let table = bit_arrivals(g);
    let deps = bit_deps(g);
    let time = table.max();
    let mut best: Option<(usize, u32)> = None;
    for (op, bits) in table.arrivals.iter().enumerate() {
        if g.ops[op].kind != OpKind::Add {
            continue;
        }
        for (bit, &a) in bits.iter().enumerate().rev() {
            if a == time && best.is_none() {
                best = Some((op, bit as u32));
            }
        }
    }
    let Some((mut op, mut bit)) = best else {
        return CriticalPath { ops: Vec::new(), time };
    };
    let mut ops = vec![op];
    loop {
        let here = table.get(op, bit);
        let need = here.saturating_sub(cost(g.ops[op].kind, &TimingConfig::default()));
        if here == 0 {
            break;
        }
        let producers = deps.of(op, bit);
        let own = producers.iter().find(|s| matches!(s, BitSource::Op { op: o, .. } if *o == op));
        let pick = match own {
            Some(s) if table.source(*s) == need => Some(*s),
            _ => producers
                .iter()
                .copied()
                .filter(|s| !matches!(s, BitSource::Input { .. }))
                .find(|&s| table.source(s) == need),
        };
        let next = match pick {
            Some(BitSource::Op { op, bit }) => (op, bit),
            Some(BitSource::Carry { op }) => (op, g.ops[op].width - 1),
            _ => break,
        };
        if g.ops[next.0].kind == OpKind::MultCore {
            break;
        }
        if next.0 != op && g.ops[next.0].kind == OpKind::Add {
            ops.push(next.0);
        }
        (op, bit) = next;
    }
    ops.reverse();
    CriticalPath { ops: ops.into_iter().map(|i| g.ops[i].id.clone()).collect(), time }
}

/// Largest `lo` over the edges through which `consumer` reads `producer`,
/// looking through glue ops. `None` if there is no such edge.
fn edge_truncation(g: &DataFlowGraph, consumer: usize, producer: usize) -> Option<u32> {
    let names = g.name_table();
    let op = &g.ops[consumer];
    if let CarryIn::CarryOf(c) = &op.carry_in {
        if names.op(c) == Some(producer) {
            return Some(0);
        }
    }
    let mut best = None;
    fn visit(g: &DataFlowGraph, names: &crate::dfg::NameTable, o: &Operand, producer: usize, best: &mut Option<u32>) {
        match &o.source {
            Source::Concat(parts) => parts.iter().for_each(|p| visit(g, names, p, producer, best)),
            Source::Result(n) | Source::Carry(n) => {
                let Some(Signal::Op(j)) = names.get(n) else { return };
                let lo = if matches!(o.source, Source::Carry(_)) { 0 } else { o.truncated_right() };
                if j == producer {
                    *best = Some(best.map_or(lo, |b: u32| b.max(lo)));
                } else if g.ops[j].kind.is_glue() {
                    for inner in &g.ops[j].operands {
                        let mut sub = None;
                        visit(g, names, inner, producer, &mut sub);
                        if let Some(s) = sub {
                            *best = Some(best.map_or(s + lo, |b: u32| b.max(s + lo)));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    for o in &op.operands {
        visit(g, &names, o, producer, &mut best);
    }
    best
}

/// Execution time of an op path: the width of the last op, plus one per op
/// crossed walking backwards, plus the bits a wider op loses to truncation
/// on its way into the next one. Glue ops on the path are skipped.
pub fn path_time(g: &DataFlowGraph, path: &[&str]) -> Result<u32, TimingError> {
    let mut idx = Vec::new();
    for id in path {
        let i = g.op_index(id).ok_or_else(|| TimingError::UnknownOp(id.to_string()))?;
        match g.ops[i].kind {
            OpKind::Add => idx.push(i),
            k if k.is_glue() => {}
            _ => return Err(TimingError::NonAdditive(id.to_string())),
        }
    }
    let last = *idx.last().ok_or(TimingError::EmptyPath)?;
    let mut time = g.ops[last].width;
    for w in idx.windows(2).rev() {
        let (p, c) = (w[0], w[1]);
        let lo = edge_truncation(g, c, p)
            .ok_or_else(|| TimingError::Disconnected { from: g.ops[p].id.clone(), to: g.ops[c].id.clone() })?;
        time += 1;
        if g.ops[p].width > g.ops[c].width {
            time += lo;
        }
    }
    Ok(time)
}

/// Chained bits per cycle for a given execution time and latency.
pub fn cycle_bits(time: u32, lambda: u32) -> Result<u32, TimingError> {
    if lambda == 0 {
        return Err(TimingError::ZeroLatency);
    }
    Ok(time.div_ceil(lambda).max(1))
}

/// `⌈critical time / λ⌉`, the number of chained 1-bit additions per cycle.
pub fn estimate_cycle(g: &DataFlowGraph, lambda: u32) -> Result<u32, TimingError> {
    cycle_bits(bit_arrivals(g).max(), lambda)
}
