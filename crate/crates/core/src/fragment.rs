// SPDX-License-Identifier: Apache-2.0

//! Per-bit mobility and fragmentation.
//!
//! Every result bit gets an earliest and a latest (cycle, depth) slot, where
//! depth counts chained 1-bit additions inside a cycle of `n_bits` slots.
//! Maximal runs of bits sharing an (ASAP cycle, ALAP cycle) pair become
//! fragments; each fragment after the first takes its carry-in from the
//! previous one.

use std::collections::HashMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::dfg::{
    bit_deps, slice_operand, substitute, topo_indices, BitOrigin, BitSource, CarryIn, DataFlowGraph, NameGen,
    OpKind, Operand, Operation, Output, Source,
};

/// A (cycle, depth) position. Inputs sit at (0, 0); multiplier cores use
/// depth 0 of their cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SlotPlacement {
    pub cycle: u32,
    pub depth: u32,
}

impl SlotPlacement {
    pub const INPUT: SlotPlacement = SlotPlacement { cycle: 0, depth: 0 };

    pub fn new(cycle: u32, depth: u32) -> Self {
        SlotPlacement { cycle, depth }
    }
}

impl fmt::Display for SlotPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.cycle, self.depth)
    }
}

/// One slot per result bit, indexed `[op][bit]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementTable {
    pub slots: Vec<Vec<SlotPlacement>>,
}

impl PlacementTable {
    pub fn get(&self, op: usize, bit: u32) -> SlotPlacement {
        self.slots[op][bit as usize]
    }

    pub fn source(&self, s: BitSource) -> SlotPlacement {
        match s {
            BitSource::Input { .. } => SlotPlacement::INPUT,
            BitSource::Op { op, bit } => self.get(op, bit),
            BitSource::Carry { op } => *self.slots[op].last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMobility {
    pub n_bits: u32,
    pub latency: u32,
    pub asap: PlacementTable,
    pub alap: PlacementTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FragmentError {
    #[error("chained bits per cycle must be at least 1")]
    ZeroBits,
    #[error("latency must be at least 1")]
    ZeroLatency,
    #[error("{op}[{bit}] cannot finish within {latency} cycles of {n_bits} chained bits")]
    Infeasible { op: String, bit: u32, latency: u32, n_bits: u32 },
}

fn empty_table(g: &DataFlowGraph) -> PlacementTable {
    PlacementTable { slots: g.ops.iter().map(|o| vec![SlotPlacement::INPUT; o.width as usize]).collect() }
}

/// Earliest slot of every bit.
pub fn bit_asap(g: &DataFlowGraph, n_bits: u32) -> Result<PlacementTable, FragmentError> {
    if n_bits == 0 {
        return Err(FragmentError::ZeroBits);
    }
    let deps = bit_deps(g);
    let mut t = empty_table(g);
    for idx in topo_indices(g) {
        let op = &g.ops[idx];
        for bit in 0..op.width {
            let producers: Vec<SlotPlacement> = deps.of(idx, bit).iter().map(|&s| t.source(s)).collect();
            let latest = producers.iter().copied().max().unwrap_or(SlotPlacement::INPUT);
            let slot = match op.kind {
                OpKind::Not | OpKind::Select => latest,
                OpKind::MultCore | OpKind::Mult => SlotPlacement::new(latest.cycle + 1, 0),
                _ => {
                    let c = latest.cycle.max(1);
                    let d = 1 + producers.iter().filter(|p| p.cycle == c).map(|p| p.depth).max().unwrap_or(0);
                    if d > n_bits {
                        SlotPlacement::new(c + 1, 1)
                    } else {
                        SlotPlacement::new(c, d)
                    }
                }
            };
            t.slots[idx][bit as usize] = slot;
        }
    }
    Ok(t)
}

/// For each `[op][bit]`, the bits that read it; `true` in `to_output` when a
/// design output reads it.
struct Consumers {
    readers: Vec<Vec<Vec<(usize, u32)>>>,
    to_output: Vec<Vec<bool>>,
}

fn consumers(g: &DataFlowGraph) -> Consumers {
    let deps = bit_deps(g);
    let mut readers: Vec<Vec<Vec<(usize, u32)>>> = g.ops.iter().map(|o| vec![Vec::new(); o.width as usize]).collect();
    let mut to_output: Vec<Vec<bool>> = g.ops.iter().map(|o| vec![false; o.width as usize]).collect();
    let target = |s: BitSource| match s {
        BitSource::Op { op, bit } => Some((op, bit)),
        BitSource::Carry { op } => Some((op, g.ops[op].width - 1)),
        BitSource::Input { .. } => None,
    };
    for (idx, op) in g.ops.iter().enumerate() {
        for bit in 0..op.width {
            for &s in deps.of(idx, bit) {
                if let Some((p, pb)) = target(s) {
                    readers[p][pb as usize].push((idx, bit));
                }
            }
        }
    }
    let names = g.name_table();
    for out in &g.outputs {
        let operand = g.output_operand(out);
        let w = names.operand_width(g, &operand).unwrap_or(0);
        for i in 0..w {
            if let Some((p, pb)) = names.operand_bit(g, &operand, i).source().and_then(target) {
                to_output[p][pb as usize] = true;
            }
        }
    }
    Consumers { readers, to_output }
}

/// Latest slot of every bit within `latency` cycles.
pub fn bit_alap(g: &DataFlowGraph, n_bits: u32, latency: u32) -> Result<PlacementTable, FragmentError> {
    if n_bits == 0 {
        return Err(FragmentError::ZeroBits);
    }
    if latency == 0 {
        return Err(FragmentError::ZeroLatency);
    }
    let sentinel = SlotPlacement::new(latency + 1, 1);
    let cons = consumers(g);
    let mut t = empty_table(g);
    let infeasible = |op: &Operation, bit: u32| FragmentError::Infeasible {
        op: op.id.clone(),
        bit,
        latency,
        n_bits,
    };
    for idx in topo_indices(g).into_iter().rev() {
        let op = &g.ops[idx];
        let reader_slots = |t: &PlacementTable, bit: u32| -> Vec<SlotPlacement> {
            let mut v: Vec<SlotPlacement> = cons.readers[idx][bit as usize].iter().map(|&(q, qb)| t.get(q, qb)).collect();
            if v.is_empty() || cons.to_output[idx][bit as usize] {
                v.push(sentinel);
            }
            v
        };
        match op.kind {
            OpKind::Not | OpKind::Select => {
                for bit in (0..op.width).rev() {
                    t.slots[idx][bit as usize] = reader_slots(&t, bit).into_iter().min().unwrap();
                }
            }
            OpKind::MultCore | OpKind::Mult => {
                let mut cycle = latency;
                for bit in 0..op.width {
                    for q in reader_slots(&t, bit) {
                        let allowed = if q.cycle > latency {
                            latency
                        } else if q.depth >= 1 {
                            q.cycle
                        } else {
                            q.cycle.saturating_sub(1)
                        };
                        cycle = cycle.min(allowed);
                    }
                }
                if cycle < 1 {
                    return Err(infeasible(op, 0));
                }
                t.slots[idx] = vec![SlotPlacement::new(cycle, 0); op.width as usize];
            }
            _ => {
                for bit in (0..op.width).rev() {
                    let readers = reader_slots(&t, bit);
                    let c = readers.iter().map(|q| q.cycle).min().unwrap();
                    let d = readers.iter().filter(|q| q.cycle == c).map(|q| q.depth).min().unwrap();
                    let slot = if d <= 1 {
                        if c <= 1 {
                            return Err(infeasible(op, bit));
                        }
                        SlotPlacement::new(c - 1, n_bits)
                    } else {
                        SlotPlacement::new(c, d - 1)
                    };
                    t.slots[idx][bit as usize] = slot;
                }
            }
        }
    }
    Ok(t)
}

/// Both placements, checked for `asap ≤ alap` on every scheduled bit.
pub fn mobility(g: &DataFlowGraph, n_bits: u32, latency: u32) -> Result<BitMobility, FragmentError> {
    let asap = bit_asap(g, n_bits)?;
    let alap = bit_alap(g, n_bits, latency)?;
    for (idx, op) in g.ops.iter().enumerate() {
        if op.kind.is_glue() {
            continue;
        }
        for bit in 0..op.width {
            if asap.get(idx, bit).cycle > alap.get(idx, bit).cycle {
                return Err(FragmentError::Infeasible { op: op.id.clone(), bit, latency, n_bits });
            }
        }
    }
    Ok(BitMobility { n_bits, latency, asap, alap })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CarryPred {
    None,
    Constant(bool),
    /// Carry-out of another op (the previous fragment of the same parent,
    /// or a carry link present in the source design).
    Op(String),
}

impl Serialize for CarryPred {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CarryPred::None => s.serialize_none(),
            CarryPred::Constant(b) => s.serialize_str(if *b { "1" } else { "0" }),
            CarryPred::Op(id) => s.serialize_str(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentKind {
    Add,
    MultCore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fragment {
    /// Op id in the fragmented design.
    pub id: String,
    pub parent: String,
    #[serde(rename = "k")]
    pub index: u32,
    pub lo: u32,
    pub hi: u32,
    pub asap: u32,
    pub alap: u32,
    pub kind: FragmentKind,
    pub carry_pred: CarryPred,
}

impl Fragment {
    pub fn width(&self) -> u32 {
        self.hi - self.lo + 1
    }

    /// Mobility window of a single cycle.
    pub fn is_fixed(&self) -> bool {
        self.asap == self.alap
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragmentation {
    pub fragments: Vec<Fragment>,
    /// The transformed design; one op per fragment plus the glue ops.
    pub design: DataFlowGraph,
}

impl Fragmentation {
    pub fn of_parent<'a>(&'a self, parent: &'a str) -> impl Iterator<Item = &'a Fragment> + 'a {
        self.fragments.iter().filter(move |f| f.parent == parent)
    }

    /// `(lo, hi, asap, alap)` of each fragment of `parent`, LSB first.
    pub fn ranges(&self, parent: &str) -> Vec<(u32, u32, u32, u32)> {
        self.of_parent(parent).map(|f| (f.lo, f.hi, f.asap, f.alap)).collect()
    }
}

/// Planned pieces of one op: `(lo, hi, asap, alap)`, LSB first.
type Plan = Vec<(u32, u32, u32, u32)>;

/// Splits every addition into runs of equal (ASAP cycle, ALAP cycle).
pub fn fragment(g: &DataFlowGraph, m: &BitMobility) -> Fragmentation {
    let plans = g
        .ops
        .iter()
        .enumerate()
        .map(|(idx, op)| {
            let mut plan: Plan = Vec::new();
            for bit in 0..op.width {
                let key = (m.asap.get(idx, bit).cycle, m.alap.get(idx, bit).cycle);
                match plan.last_mut() {
                    Some(last) if op.kind == OpKind::MultCore || (last.2, last.3) == key => last.1 = bit,
                    _ => plan.push((bit, bit, key.0, key.1)),
                }
            }
            plan
        })
        .collect();
    build(g, plans)
}

/// Reference fragmentation that fills `n_bits`-sized buckets forward from
/// each op's ASAP cycle and backward from its ALAP cycle, then pairs them.
/// Ignores chaining offsets between ops.
pub fn bucket_fill(g: &DataFlowGraph, m: &BitMobility) -> Fragmentation {
    let n = m.n_bits;
    let plans = g
        .ops
        .iter()
        .enumerate()
        .map(|(idx, op)| {
            let w = op.width;
            let op_asap = m.asap.get(idx, 0).cycle;
            let op_alap = m.alap.get(idx, w - 1).cycle;
            if op.kind != OpKind::Add {
                return vec![(0, w - 1, op_asap, op_alap)];
            }
            let count = w.div_ceil(n);
            let asap_buckets: Vec<(u32, u32)> =
                (0..count).map(|k| (op_asap + k, n.min(w - k * n))).collect();
            let rem = w - (count - 1) * n;
            let alap_buckets: Vec<(u32, u32)> = (0..count)
                .map(|k| {
                    let cycle = (op_alap + k + 1).saturating_sub(count);
                    (cycle, if k == 0 { rem } else { n })
                })
                .collect();
            let (mut i, mut j) = (0, 0);
            let (mut ra, mut rb) = (asap_buckets[0].1, alap_buckets[0].1);
            let mut lo = 0;
            let mut plan: Plan = Vec::new();
            while lo < w {
                let take = ra.min(rb);
                plan.push((lo, lo + take - 1, asap_buckets[i].0, alap_buckets[j].0));
                lo += take;
                ra -= take;
                rb -= take;
                if ra == 0 && i + 1 < asap_buckets.len() {
                    i += 1;
                    ra = asap_buckets[i].1;
                }
                if rb == 0 && j + 1 < alap_buckets.len() {
                    j += 1;
                    rb = alap_buckets[j].1;
                }
            }
            plan
        })
        .collect();
    build(g, plans)
}

fn build(g: &DataFlowGraph, plans: Vec<Plan>) -> Fragmentation {
    let mut names = NameGen::for_graph(g);
    let mut out = DataFlowGraph::new(g.name.clone());
    out.inputs = g.inputs.clone();
    let mut subst: HashMap<String, Operand> = HashMap::new();
    let mut carry_map: HashMap<String, String> = HashMap::new();
    let mut fragments = Vec::new();

    let rewrite = |out: &DataFlowGraph, subst: &HashMap<String, Operand>, carry_map: &HashMap<String, String>, o: &Operand| {
        let mut o = o.clone();
        o.visit_leaves_mut(&mut |leaf| {
            if let Source::Carry(n) = &leaf.source {
                if let Some(to) = carry_map.get(n) {
                    leaf.source = Source::Carry(to.clone());
                }
            }
        });
        substitute(out, &out.name_table(), &o, subst)
    };

    for (op, plan) in g.ops.iter().zip(plans) {
        let operands: Vec<Operand> = op.operands.iter().map(|o| rewrite(&out, &subst, &carry_map, o)).collect();
        let carry_in = match &op.carry_in {
            CarryIn::CarryOf(c) => CarryIn::CarryOf(carry_map.get(c).cloned().unwrap_or_else(|| c.clone())),
            other => other.clone(),
        };
        let base_pred = match &carry_in {
            CarryIn::None => CarryPred::None,
            CarryIn::Constant(b) => CarryPred::Constant(*b),
            CarryIn::CarryOf(c) => CarryPred::Op(c.clone()),
        };
        match op.kind {
            OpKind::Add if plan.len() > 1 => {
                let mut ids: Vec<String> = Vec::new();
                for (k, &(lo, hi, asap, alap)) in plan.iter().enumerate() {
                    let id = names.fresh(&format!("{}_{}", op.id, k));
                    let names_now = out.name_table();
                    let ops = operands.iter().map(|o| slice_operand(&out, &names_now, o, hi, lo)).collect();
                    let (cin, pred) = match ids.last() {
                        None => (carry_in.clone(), base_pred.clone()),
                        Some(prev) => (CarryIn::CarryOf(prev.clone()), CarryPred::Op(prev.clone())),
                    };
                    out.ops.push(Operation::new(id.clone(), OpKind::Add, hi - lo + 1, ops).with_carry_in(cin));
                    fragments.push(Fragment {
                        id: id.clone(),
                        parent: op.id.clone(),
                        index: k as u32,
                        lo,
                        hi,
                        asap,
                        alap,
                        kind: FragmentKind::Add,
                        carry_pred: pred,
                    });
                    ids.push(id);
                }
                let concat = Operand::concat(ids.iter().rev().map(Operand::result).collect());
                carry_map.insert(op.id.clone(), ids.last().unwrap().clone());
                subst.insert(op.id.clone(), concat);
            }
            OpKind::Add | OpKind::MultCore => {
                let &(lo, hi, asap, alap) = plan.first().unwrap();
                let kind = if op.kind == OpKind::Add { FragmentKind::Add } else { FragmentKind::MultCore };
                fragments.push(Fragment {
                    id: op.id.clone(),
                    parent: op.id.clone(),
                    index: 0,
                    lo,
                    hi: hi.max(op.width - 1),
                    asap,
                    alap,
                    kind,
                    carry_pred: base_pred,
                });
                let mut copy = op.clone();
                copy.operands = operands;
                copy.carry_in = carry_in;
                out.ops.push(copy);
            }
            _ => {
                let mut copy = op.clone();
                copy.operands = operands;
                out.ops.push(copy);
            }
        }
    }
    out.outputs = g
        .outputs
        .iter()
        .map(|o| match &o.value {
            Some(v) => Output::expr(o.name.clone(), rewrite(&out, &subst, &carry_map, v)),
            None => match subst.get(&o.name) {
                Some(e) => Output::expr(o.name.clone(), e.clone()),
                None => o.clone(),
            },
        })
        .collect();
    Fragmentation { fragments, design: out }
}

/// Resolves a bit through glue ops down to the adder, multiplier or input
/// bits that determine it.
pub fn resolve_through_glue(g: &DataFlowGraph, origin: BitOrigin, out: &mut Vec<BitSource>) {
    let names = g.name_table();
    resolve_inner(g, &names, origin, out);
}

fn resolve_inner(g: &DataFlowGraph, names: &crate::dfg::NameTable, origin: BitOrigin, out: &mut Vec<BitSource>) {
    match origin {
        BitOrigin::Op { op, bit } if g.ops[op].kind.is_glue() => {
            let o = &g.ops[op];
            if o.kind == OpKind::Select {
                resolve_inner(g, names, names.operand_bit(g, &o.operands[0], 0), out);
                for branch in &o.operands[1..] {
                    resolve_inner(g, names, names.operand_bit(g, branch, bit), out);
                }
            } else {
                resolve_inner(g, names, names.operand_bit(g, &o.operands[0], bit), out);
            }
        }
        other => out.extend(other.source()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::validate;
    use crate::dsl::parse;
    use crate::fixtures;
    use crate::sim::{check_equiv, EquivTarget, Strategy};

    fn cycles(t: &PlacementTable, g: &DataFlowGraph, op: &str) -> Vec<u32> {
        let i = g.op_index(op).unwrap();
        t.slots[i].iter().map(|s| s.cycle).collect()
    }

    /// Every producer of a scheduled bit sits at a strictly earlier slot.
    fn assert_legal(g: &DataFlowGraph, t: &PlacementTable, n: u32) {
        let deps = bit_deps(g);
        for (idx, op) in g.ops.iter().enumerate() {
            if op.kind.is_glue() {
                continue;
            }
            for bit in 0..op.width {
                let here = t.get(idx, bit);
                assert!(here.depth <= n);
                for &p in deps.of(idx, bit) {
                    let mut leaves = Vec::new();
                    let origin = match p {
                        BitSource::Input { input, bit } => BitOrigin::Input { input, bit },
                        BitSource::Op { op, bit } => BitOrigin::Op { op, bit },
                        BitSource::Carry { op } => BitOrigin::Carry { op },
                    };
                    resolve_through_glue(g, origin, &mut leaves);
                    for leaf in leaves {
                        assert!(t.source(leaf) < here, "{}[{bit}] at {here} after {:?}", op.id, leaf);
                    }
                }
            }
        }
    }

    #[test]
    fn motivational_asap() {
        let g = parse(fixtures::MOTIVATIONAL).unwrap();
        let t = bit_asap(&g, 6).unwrap();
        let c = cycles(&t, &g, "C");
        assert_eq!(c, [1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3]);
        for i in 0..6 {
            assert_eq!(t.get(0, i).depth, i + 1);
        }
        assert_legal(&g, &t, 6);
    }

    #[test]
    fn motivational_alap_and_fragments() {
        let g = parse(fixtures::MOTIVATIONAL).unwrap();
        let alap = bit_alap(&g, 6, 3).unwrap();
        assert!(cycles(&alap, &g, "G")[10..].iter().all(|&c| c == 3));
        assert_eq!(alap.get(2, 15), SlotPlacement::new(3, 6));
        assert_legal(&g, &alap, 6);
        let m = mobility(&g, 6, 3).unwrap();
        let f = fragment(&g, &m);
        assert_eq!(f.ranges("C"), [(0, 5, 1, 1), (6, 11, 2, 2), (12, 15, 3, 3)]);
        let widths = |p: &str| f.of_parent(p).map(|x| x.width()).collect::<Vec<_>>();
        assert_eq!(widths("E"), [5, 6, 5]);
        assert_eq!(widths("G"), [4, 6, 6]);
        assert!(f.fragments.iter().all(|x| x.is_fixed()));
        validate(&f.design).unwrap();
        let r = check_equiv(&g, &EquivTarget::Design(&f.design), Strategy::Random { vectors: 300, seed: 9 }).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn fig3_fragments() {
        let g = parse(fixtures::FIG3).unwrap();
        let m = mobility(&g, 3, 3).unwrap();
        assert_eq!(cycles(&m.asap, &g, "B"), [1, 1, 1, 2, 2, 2]);
        assert_eq!(cycles(&m.alap, &g, "B"), [1, 1, 2, 2, 2, 3]);
        let f = fragment(&g, &m);
        assert_eq!(f.ranges("F"), [(0, 2, 1, 1), (3, 5, 2, 2), (6, 7, 3, 3)]);
        assert_eq!(f.ranges("B"), [(0, 1, 1, 1), (2, 2, 1, 2), (3, 4, 2, 2), (5, 5, 2, 3)]);
        for p in ["F", "G", "H"] {
            assert!(f.of_parent(p).all(|x| x.is_fixed()));
        }
        assert_legal(&g, &m.asap, 3);
        assert_legal(&g, &m.alap, 3);
    }

    #[test]
    fn carry_links_follow_fragments() {
        let g = parse(fixtures::FIG3).unwrap();
        let f = fragment(&g, &mobility(&g, 3, 3).unwrap());
        let b: Vec<_> = f.of_parent("B").collect();
        assert_eq!(b[0].carry_pred, CarryPred::None);
        for k in 1..b.len() {
            assert_eq!(b[k].carry_pred, CarryPred::Op(b[k - 1].id.clone()));
            assert_eq!(f.design.op(&b[k].id).unwrap().carry_in, CarryIn::CarryOf(b[k - 1].id.clone()));
        }
        let text = crate::dsl::emit(&f.design);
        assert!(text.contains("carry(B_0)"), "{text}");
        assert_eq!(parse(&text).unwrap(), f.design);
    }

    #[test]
    fn small_add_stays_whole() {
        let g = parse("design s; input a: u3; input b: u3; x: add u3 = a + b; output x;").unwrap();
        let f = fragment(&g, &mobility(&g, 8, 1).unwrap());
        assert_eq!(f.fragments.len(), 1);
        assert_eq!(f.design, g);
        let t = bit_asap(&g, 8).unwrap();
        assert_eq!(t.slots[0], [SlotPlacement::new(1, 1), SlotPlacement::new(1, 2), SlotPlacement::new(1, 3)]);
    }

    #[test]
    fn too_short_latency_is_infeasible() {
        let g = parse(fixtures::MOTIVATIONAL).unwrap();
        assert!(matches!(mobility(&g, 6, 2), Err(FragmentError::Infeasible { .. })));
        assert!(matches!(mobility(&g, 5, 3), Err(FragmentError::Infeasible { .. })));
        assert_eq!(bit_asap(&g, 0), Err(FragmentError::ZeroBits));
    }

    #[test]
    fn multiplier_cores_are_atomic() {
        let g = parse(
            "design m; input a: u4; input b: u4; input c: u8;
s: add u4 = a + b; p: multcore u8 = s * b; t: add u8 = p + c; output t;",
        )
        .unwrap();
        let m = mobility(&g, 4, 4).unwrap();
        assert!(m.asap.slots[1].iter().all(|&s| s == SlotPlacement::new(2, 0)));
        assert_eq!(m.asap.get(2, 0), SlotPlacement::new(2, 1));
        assert!(m.alap.slots[1].iter().all(|&s| s.cycle == 3 && s.depth == 0));
        assert_eq!(m.alap.get(0, 3), SlotPlacement::new(2, 4));
        assert_legal(&g, &m.asap, 4);
        assert_legal(&g, &m.alap, 4);
        let f = fragment(&g, &m);
        let p: Vec<_> = f.of_parent("p").collect();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].lo, p[0].hi, p[0].kind), (0, 7, FragmentKind::MultCore));
    }

    #[test]
    fn bucket_fill_motivational() {
        let g = parse(fixtures::MOTIVATIONAL).unwrap();
        let m = mobility(&g, 6, 3).unwrap();
        let f = bucket_fill(&g, &m);
        assert_eq!(
            f.ranges("C"),
            [(0, 3, 1, 1), (4, 5, 1, 2), (6, 9, 2, 2), (10, 11, 2, 3), (12, 15, 3, 3)]
        );
        validate(&f.design).unwrap();
        let r = check_equiv(&g, &EquivTarget::Design(&f.design), Strategy::Random { vectors: 200, seed: 1 }).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn output_expressions_are_rewritten() {
        let g = parse(
            "design o; input a: u8; input b: u8; x: add u8 = a + b; y: add u8 = x + b;
output x; output z = {x[1:0], carry(y)};",
        )
        .unwrap();
        let m = mobility(&g, 3, 4).unwrap();
        let f = fragment(&g, &m);
        validate(&f.design).unwrap();
        let r = check_equiv(&g, &EquivTarget::Design(&f.design), Strategy::Random { vectors: 500, seed: 2 }).unwrap();
        assert!(r.passed());
    }
}
