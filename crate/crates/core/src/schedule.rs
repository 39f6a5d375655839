// SPDX-License-Identifier: Apache-2.0

//! Time-constrained list scheduling of fragments.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::dfg::{bit_deps, topo_indices, BitOrigin, BitSource, DataFlowGraph, OpKind};
use crate::fragment::{resolve_through_glue, Fragment, FragmentKind, Fragmentation, SlotPlacement};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("fragment `{fragment}` fits in no cycle of its window [{asap}, {alap}]")]
    Infeasible { fragment: String, asap: u32, alap: u32 },
    #[error("fragmentation does not match the design: no op `{0}`")]
    MissingOp(String),
}

/// A fragment-to-cycle assignment and the bit placement it realizes. Op
/// indices refer to the fragmented design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub latency: u32,
    pub n_bits: u32,
    pub fragments: Vec<Fragment>,
    /// Cycle of each fragment, parallel to `fragments`.
    pub assignment: Vec<u32>,
    /// Realized slot of every bit, `[op][bit]`. Glue bits carry the slot of
    /// their latest input.
    pub placement: Vec<Vec<SlotPlacement>>,
    /// Fragment index of each op, `None` for glue.
    pub op_fragment: Vec<Option<usize>>,
}

impl Schedule {
    /// Slot of a scheduled (non-glue) bit.
    pub fn slot(&self, op: usize, bit: u32) -> Option<SlotPlacement> {
        self.op_fragment[op]?;
        self.placement[op].get(bit as usize).copied()
    }

    pub fn op_cycle(&self, op: usize) -> Option<u32> {
        self.op_fragment[op].map(|f| self.assignment[f])
    }

    pub fn cycle_of(&self, fragment_id: &str) -> Option<u32> {
        self.fragments.iter().position(|f| f.id == fragment_id).map(|i| self.assignment[i])
    }

    /// Adder result bits executed in each cycle, index `cycle - 1`.
    pub fn bits_per_cycle(&self) -> Vec<u32> {
        let mut load = vec![0; self.latency as usize];
        for (f, &c) in self.fragments.iter().zip(&self.assignment) {
            if f.kind == FragmentKind::Add {
                load[(c - 1) as usize] += f.width();
            }
        }
        load
    }

    pub fn ops_per_cycle(&self) -> Vec<u32> {
        let mut count = vec![0; self.latency as usize];
        for &c in &self.assignment {
            count[(c - 1) as usize] += 1;
        }
        count
    }

    /// Total execution time in δ: latency times chained bits per cycle.
    pub fn execution_time(&self) -> u32 {
        self.latency * self.n_bits
    }
}

fn op_fragments(frag: &Fragmentation) -> Result<Vec<Option<usize>>, ScheduleError> {
    let mut map = vec![None; frag.design.ops.len()];
    for (i, f) in frag.fragments.iter().enumerate() {
        let idx = frag.design.op_index(&f.id).ok_or_else(|| ScheduleError::MissingOp(f.id.clone()))?;
        map[idx] = Some(i);
    }
    Ok(map)
}

/// Places every op as early as possible, each fragment whole inside one
/// cycle within `bounds[fragment]`. Returns the blocking fragment on failure.
fn realize(
    g: &DataFlowGraph,
    op_fragment: &[Option<usize>],
    bounds: &[(u32, u32)],
    n_bits: u32,
) -> Result<Vec<Vec<SlotPlacement>>, usize> {
    let deps = bit_deps(g);
    let mut slots: Vec<Vec<SlotPlacement>> = g.ops.iter().map(|o| vec![SlotPlacement::INPUT; o.width as usize]).collect();
    let source = |slots: &Vec<Vec<SlotPlacement>>, s: BitSource| match s {
        BitSource::Input { .. } => SlotPlacement::INPUT,
        BitSource::Op { op, bit } => slots[op][bit as usize],
        BitSource::Carry { op } => *slots[op].last().unwrap(),
    };
    for idx in topo_indices(g) {
        let op = &g.ops[idx];
        let Some(f) = op_fragment[idx] else {
            for bit in 0..op.width {
                let latest = deps.of(idx, bit).iter().map(|&s| source(&slots, s)).max();
                slots[idx][bit as usize] = latest.unwrap_or(SlotPlacement::INPUT);
            }
            continue;
        };
        let (lo, hi) = bounds[f];
        let external = |slots: &Vec<Vec<SlotPlacement>>, bit: u32| {
            deps.of(idx, bit)
                .iter()
                .filter(|s| !matches!(s, BitSource::Op { op, .. } if *op == idx))
                .map(|&s| source(slots, s))
                .collect::<Vec<_>>()
        };
        if op.kind == OpKind::MultCore {
            let ready = (0..op.width).flat_map(|b| external(&slots, b)).map(|s| s.cycle).max().unwrap_or(0);
            let c = (ready + 1).max(lo);
            if c > hi {
                return Err(f);
            }
            slots[idx] = vec![SlotPlacement::new(c, 0); op.width as usize];
            continue;
        }
        let ready = (0..op.width).flat_map(|b| external(&slots, b)).map(|s| s.cycle).max().unwrap_or(0);
        let mut c = ready.max(lo).max(1);
        'cycle: loop {
            if c > hi {
                return Err(f);
            }
            let mut prev = 0;
            for bit in 0..op.width {
                let d = 1 + external(&slots, bit)
                    .iter()
                    .filter(|s| s.cycle == c)
                    .map(|s| s.depth)
                    .max()
                    .unwrap_or(0)
                    .max(prev);
                if d > n_bits {
                    c += 1;
                    continue 'cycle;
                }
                slots[idx][bit as usize] = SlotPlacement::new(c, d);
                prev = d;
            }
            break;
        }
    }
    Ok(slots)
}

/// Balance score of putting `width` more bits into `cycle`: the resulting
/// peak load, then the load of that cycle, then the cycle itself.
fn score(load: &[u32], cycle: u32, width: u32) -> (u32, u32, u32) {
    let after = load[(cycle - 1) as usize] + width;
    let peak = load.iter().copied().max().unwrap_or(0).max(after);
    (peak, after, cycle)
}

/// Fixes fragments whose window is one cycle, then places the rest in order
/// of (window width, ASAP, parent, lo), each in the cycle that keeps the
/// per-cycle bit load flattest and still admits a legal placement.
pub fn schedule(frag: &Fragmentation, latency: u32, n_bits: u32) -> Result<Schedule, ScheduleError> {
    let g = &frag.design;
    let op_fragment = op_fragments(frag)?;
    let frs = &frag.fragments;
    let mut bounds: Vec<(u32, u32)> = frs.iter().map(|f| (f.asap, f.alap)).collect();
    let mut load = vec![0u32; latency as usize];
    let mut placed = vec![false; frs.len()];
    for (i, f) in frs.iter().enumerate() {
        if f.is_fixed() || f.kind == FragmentKind::MultCore {
            placed[i] = true;
            if f.kind == FragmentKind::Add && f.asap >= 1 && f.asap <= latency {
                load[(f.asap - 1) as usize] += f.width();
            }
        }
    }
    if let Err(f) = realize(g, &op_fragment, &bounds, n_bits) {
        let b = &frs[f];
        return Err(ScheduleError::Infeasible { fragment: b.id.clone(), asap: b.asap, alap: b.alap });
    }
    let mut order: Vec<usize> = (0..frs.len()).filter(|&i| !placed[i]).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (&frs[a], &frs[b]);
        (fa.alap - fa.asap, fa.asap, &fa.parent, fa.lo).cmp(&(fb.alap - fb.asap, fb.asap, &fb.parent, fb.lo))
    });
    for i in order {
        let f = &frs[i];
        let mut candidates: Vec<u32> = (f.asap..=f.alap.min(latency)).collect();
        candidates.sort_by_key(|&c| score(&load, c, f.width()));
        let window = bounds[i];
        let chosen = candidates.into_iter().find(|&c| {
            bounds[i] = (c, c);
            realize(g, &op_fragment, &bounds, n_bits).is_ok()
        });
        match chosen {
            Some(c) => {
                bounds[i] = (c, c);
                load[(c - 1) as usize] += f.width();
            }
            None => {
                bounds[i] = window;
                return Err(ScheduleError::Infeasible { fragment: f.id.clone(), asap: f.asap, alap: f.alap });
            }
        }
    }
    let placement = realize(g, &op_fragment, &bounds, n_bits).map_err(|f| ScheduleError::Infeasible {
        fragment: frs[f].id.clone(),
        asap: frs[f].asap,
        alap: frs[f].alap,
    })?;
    let assignment = frs
        .iter()
        .map(|f| {
            let idx = g.op_index(&f.id).unwrap();
            placement[idx][0].cycle
        })
        .collect();
    Ok(Schedule { latency, n_bits, fragments: frs.clone(), assignment, placement, op_fragment })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    OutsideMobility { fragment: String, cycle: u32, asap: u32, alap: u32 },
    OutsideLatency { fragment: String, cycle: u32 },
    CarryOrder { earlier: String, later: String },
    SplitFragment { fragment: String, bit: u32, cycle: u32 },
    DepthExceeded { op: String, bit: u32, depth: u32 },
    Dependency { op: String, bit: u32, producer: String },
    Unplaced { op: String },
}

/// Re-checks a schedule against the fragmented design from scratch.
pub fn verify_schedule(s: &Schedule, g: &DataFlowGraph) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let mut by_parent: HashMap<&str, Vec<(u32, u32, &str)>> = HashMap::new();
    for (f, &c) in s.fragments.iter().zip(&s.assignment) {
        if c < f.asap || c > f.alap {
            v.push(Violation::OutsideMobility { fragment: f.id.clone(), cycle: c, asap: f.asap, alap: f.alap });
        }
        if c < 1 || c > s.latency {
            v.push(Violation::OutsideLatency { fragment: f.id.clone(), cycle: c });
        }
        by_parent.entry(&f.parent).or_default().push((f.index, c, &f.id));
        let Some(idx) = g.op_index(&f.id) else {
            v.push(Violation::Unplaced { op: f.id.clone() });
            continue;
        };
        for bit in 0..g.ops[idx].width {
            let slot = s.placement.get(idx).and_then(|p| p.get(bit as usize));
            match slot {
                Some(slot) if slot.cycle != c => {
                    v.push(Violation::SplitFragment { fragment: f.id.clone(), bit, cycle: slot.cycle })
                }
                None => v.push(Violation::Unplaced { op: f.id.clone() }),
                _ => {}
            }
        }
    }
    let mut parents: Vec<_> = by_parent.into_iter().collect();
    parents.sort();
    for (_, mut frs) in parents {
        frs.sort();
        for w in frs.windows(2) {
            if w[0].1 > w[1].1 {
                v.push(Violation::CarryOrder { earlier: w[0].2.to_string(), later: w[1].2.to_string() });
            }
        }
    }
    for op in &g.ops {
        if !op.kind.is_glue() && s.fragments.iter().all(|f| f.id != op.id) {
            v.push(Violation::Unplaced { op: op.id.clone() });
        }
    }
    if !v.is_empty() {
        return Err(v);
    }

    let deps = bit_deps(g);
    let slot_of = |src: BitSource| match src {
        BitSource::Input { .. } => SlotPlacement::INPUT,
        BitSource::Op { op, bit } => s.placement[op][bit as usize],
        BitSource::Carry { op } => *s.placement[op].last().unwrap(),
    };
    let name = |src: BitSource| match src {
        BitSource::Input { input, bit } => format!("{}[{bit}]", g.inputs[input].name),
        BitSource::Op { op, bit } => format!("{}[{bit}]", g.ops[op].id),
        BitSource::Carry { op } => format!("carry({})", g.ops[op].id),
    };
    for (idx, op) in g.ops.iter().enumerate() {
        if op.kind.is_glue() {
            continue;
        }
        for bit in 0..op.width {
            let here = s.placement[idx][bit as usize];
            if here.depth > s.n_bits || (op.kind == OpKind::Add && here.depth < 1) {
                v.push(Violation::DepthExceeded { op: op.id.clone(), bit, depth: here.depth });
            }
            for &p in deps.of(idx, bit) {
                let origin = match p {
                    BitSource::Input { input, bit } => BitOrigin::Input { input, bit },
                    BitSource::Op { op, bit } => BitOrigin::Op { op, bit },
                    BitSource::Carry { op } => BitOrigin::Carry { op },
                };
                let mut leaves = Vec::new();
                resolve_through_glue(g, origin, &mut leaves);
                for leaf in leaves {
                    if slot_of(leaf) >= here {
                        v.push(Violation::Dependency { op: op.id.clone(), bit, producer: name(leaf) });
                    }
                }
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleRow {
    pub fragment: String,
    pub parent: String,
    pub lo: u32,
    pub hi: u32,
    pub cycle: u32,
    pub depth_first: u32,
    pub depth_last: u32,
}

pub fn rows(s: &Schedule, g: &DataFlowGraph) -> Vec<ScheduleRow> {
    let mut rows: Vec<ScheduleRow> = s
        .fragments
        .iter()
        .zip(&s.assignment)
        .map(|(f, &cycle)| {
            let idx = g.op_index(&f.id).unwrap();
            let p = &s.placement[idx];
            ScheduleRow {
                fragment: f.id.clone(),
                parent: f.parent.clone(),
                lo: f.lo,
                hi: f.hi,
                cycle,
                depth_first: p.iter().map(|x| x.depth).min().unwrap_or(0),
                depth_last: p.iter().map(|x| x.depth).max().unwrap_or(0),
            }
        })
        .collect();
    rows.sort_by(|a, b| (a.cycle, a.depth_first, &a.parent, a.lo).cmp(&(b.cycle, b.depth_first, &b.parent, b.lo)));
    rows
}

/// One line per cycle listing the fragments it executes with their depth
/// slots.
pub fn render_text(s: &Schedule, g: &DataFlowGraph) -> String {
    let rows = rows(s, g);
    let loads = s.bits_per_cycle();
    let mut out = format!("schedule {}: latency {}, {} chained bits per cycle\n", g.name, s.latency, s.n_bits);
    for cycle in 1..=s.latency {
        let _ = write!(out, "cycle {cycle:>2} [{:>3} bits] |", loads[(cycle - 1) as usize]);
        for r in rows.iter().filter(|r| r.cycle == cycle) {
            let range = if r.lo == r.hi { format!("{}", r.lo) } else { format!("{}:{}", r.hi, r.lo) };
            let depth = if r.depth_first == r.depth_last {
                format!("{}", r.depth_first)
            } else {
                format!("{}-{}", r.depth_first, r.depth_last)
            };
            let _ = write!(out, " {}[{range}]@{depth}", r.parent);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;
    use crate::fixtures;
    use crate::fragment::{fragment, mobility};

    fn run(text: &str, latency: u32, n: u32) -> (Fragmentation, Schedule) {
        let g = parse(text).unwrap();
        let f = fragment(&g, &mobility(&g, n, latency).unwrap());
        let s = schedule(&f, latency, n).unwrap();
        (f, s)
    }

    #[test]
    fn motivational_one_fragment_per_op_per_cycle() {
        let (f, s) = run(fixtures::MOTIVATIONAL, 3, 6);
        verify_schedule(&s, &f.design).unwrap();
        for cycle in 1..=3 {
            let mut parents: Vec<&str> = s
                .fragments
                .iter()
                .zip(&s.assignment)
                .filter(|(_, &c)| c == cycle)
                .map(|(f, _)| f.parent.as_str())
                .collect();
            parents.sort();
            assert_eq!(parents, ["C", "E", "G"]);
        }
        assert_eq!(s.execution_time(), 18);
        assert_eq!(s.bits_per_cycle(), [15, 18, 15]);
    }

    #[test]
    fn fig3_fits_three_cycles() {
        let (f, s) = run(fixtures::FIG3, 3, 3);
        verify_schedule(&s, &f.design).unwrap();
        let fc: Vec<u32> = f.of_parent("F").map(|x| s.cycle_of(&x.id).unwrap()).collect();
        assert_eq!(fc, [1, 2, 3]);
    }

    #[test]
    fn saturated_middle_cycle_splits_an_op() {
        let (f, s) = run(fixtures::SATURATION, 3, 6);
        verify_schedule(&s, &f.design).unwrap();
        let x: Vec<u32> = f.of_parent("X").map(|x| s.cycle_of(&x.id).unwrap()).collect();
        assert_eq!(x, [1, 3]);
    }

    #[test]
    fn deterministic() {
        let (_, a) = run(fixtures::FIG3, 4, 3);
        let (_, b) = run(fixtures::FIG3, 4, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn tampered_schedules_are_caught() {
        let (f, s) = run(fixtures::FIG3, 3, 3);
        let mut bad = s.clone();
        let i = bad.fragments.iter().position(|x| x.parent == "F" && x.index == 0).unwrap();
        bad.assignment[i] = 2;
        let v = verify_schedule(&bad, &f.design).unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::OutsideMobility { .. })));

        let mut deep = s.clone();
        let h = f.design.op_index(&s.fragments.iter().find(|x| x.parent == "H").unwrap().id).unwrap();
        deep.placement[h][0].depth = 4;
        let v = verify_schedule(&deep, &f.design).unwrap_err();
        assert!(v.iter().any(|x| matches!(x, Violation::DepthExceeded { depth: 4, .. })));
    }

    #[test]
    fn text_table_lists_every_cycle() {
        let (f, s) = run(fixtures::MOTIVATIONAL, 3, 6);
        let t = render_text(&s, &f.design);
        assert_eq!(t.lines().count(), 4);
        assert!(t.contains("C[5:0]@1-6"), "{t}");
        assert!(t.contains("G[15:10]@1-6"), "{t}");
    }
}
