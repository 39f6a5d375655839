// SPDX-License-Identifier: Apache-2.0

//! Structural datapath costs: adder lanes, inter-cycle registers and
//! multiplexer fan-ins, for the fragmented schedule and for a conventional
//! one-op-per-cycle schedule of the same design.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::dfg::{bit_deps, topo_indices, BitOrigin, BitSource, DataFlowGraph, NameTable, OpKind, Operand};
use crate::dsl::operand_text;
use crate::fragment::{resolve_through_glue, FragmentKind};
use crate::schedule::Schedule;

/// A value held in a register across a cycle boundary.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoredSignal {
    Bit { op: String, bit: u32 },
    Carry { op: String },
}

impl StoredSignal {
    pub fn op(&self) -> &str {
        match self {
            StoredSignal::Bit { op, .. } | StoredSignal::Carry { op } => op,
        }
    }
}

impl fmt::Display for StoredSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoredSignal::Bit { op, bit } => write!(f, "{op}[{bit}]"),
            StoredSignal::Carry { op } => write!(f, "carry({op})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Adder,
    MultCore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lane {
    /// The original op this unit is dedicated to.
    pub id: String,
    pub kind: UnitKind,
    pub width: u32,
    pub fragments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LaneBinding {
    pub lanes: Vec<Lane>,
}

impl LaneBinding {
    pub fn adders(&self) -> impl Iterator<Item = &Lane> {
        self.lanes.iter().filter(|l| l.kind == UnitKind::Adder)
    }

    fn lane_of(&self, fragment: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.fragments.iter().any(|f| f == fragment))
    }
}

/// One dedicated unit per original op. An adder lane is as wide as the most
/// bits its op executes in any single cycle.
pub fn bind_lanes(s: &Schedule) -> LaneBinding {
    let mut lanes: Vec<Lane> = Vec::new();
    let mut per_cycle: BTreeMap<(String, u32), u32> = BTreeMap::new();
    for (f, &c) in s.fragments.iter().zip(&s.assignment) {
        let kind = match f.kind {
            FragmentKind::Add => UnitKind::Adder,
            FragmentKind::MultCore => UnitKind::MultCore,
        };
        match lanes.iter_mut().find(|l| l.id == f.parent) {
            Some(l) => l.fragments.push(f.id.clone()),
            None => lanes.push(Lane { id: f.parent.clone(), kind, width: 0, fragments: vec![f.id.clone()] }),
        }
        *per_cycle.entry((f.parent.clone(), c)).or_default() += f.width();
    }
    for l in &mut lanes {
        l.width = per_cycle.iter().filter(|((p, _), _)| *p == l.id).map(|(_, &w)| w).max().unwrap_or(0);
    }
    LaneBinding { lanes }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BoundarySet {
    pub data: BTreeSet<StoredSignal>,
    pub carries: BTreeSet<StoredSignal>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.data.len() + self.carries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stored signals at each boundary `c → c+1`, index `c - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterSets {
    pub boundaries: Vec<BoundarySet>,
}

impl RegisterSets {
    pub fn per_boundary(&self) -> Vec<u32> {
        self.boundaries.iter().map(|b| b.len() as u32).collect()
    }

    pub fn max(&self) -> u32 {
        self.per_boundary().into_iter().max().unwrap_or(0)
    }
}

fn origin_of(s: BitSource) -> BitOrigin {
    match s {
        BitSource::Input { input, bit } => BitOrigin::Input { input, bit },
        BitSource::Op { op, bit } => BitOrigin::Op { op, bit },
        BitSource::Carry { op } => BitOrigin::Carry { op },
    }
}

fn stored(g: &DataFlowGraph, s: BitSource) -> Option<StoredSignal> {
    match s {
        BitSource::Input { .. } => None,
        BitSource::Op { op, bit } => Some(StoredSignal::Bit { op: g.ops[op].id.clone(), bit }),
        BitSource::Carry { op } => Some(StoredSignal::Carry { op: g.ops[op].id.clone() }),
    }
}

/// Every (producer, consumer cycle) use edge between scheduled bits, seen
/// through glue.
fn uses(s: &Schedule, g: &DataFlowGraph) -> Vec<(BitSource, u32)> {
    let deps = bit_deps(g);
    let mut out = Vec::new();
    for (idx, op) in g.ops.iter().enumerate() {
        if op.kind.is_glue() {
            continue;
        }
        let Some(cycle) = s.op_cycle(idx) else { continue };
        for bit in 0..op.width {
            for &p in deps.of(idx, bit) {
                let mut leaves = Vec::new();
                resolve_through_glue(g, origin_of(p), &mut leaves);
                out.extend(leaves.into_iter().map(|l| (l, cycle)));
            }
        }
    }
    out
}

fn producer_cycle(s: &Schedule, src: BitSource) -> Option<u32> {
    match src {
        BitSource::Input { .. } => None,
        BitSource::Op { op, .. } | BitSource::Carry { op } => s.op_cycle(op),
    }
}

fn insert(sets: &mut [BoundarySet], b: u32, sig: StoredSignal) {
    let set = &mut sets[(b - 1) as usize];
    match sig {
        StoredSignal::Carry { .. } => set.carries.insert(sig),
        StoredSignal::Bit { .. } => set.data.insert(sig),
    };
}

/// Marks every boundary crossed by each individual use.
pub fn register_bits(s: &Schedule, g: &DataFlowGraph) -> RegisterSets {
    let mut sets = vec![BoundarySet::default(); s.latency.saturating_sub(1) as usize];
    for (src, consumer) in uses(s, g) {
        let Some(pc) = producer_cycle(s, src) else { continue };
        for b in pc..consumer {
            insert(&mut sets, b, stored(g, src).unwrap());
        }
    }
    RegisterSets { boundaries: sets }
}

/// Same sets, computed per boundary from each producer's last consumer.
pub fn register_bits_by_boundary(s: &Schedule, g: &DataFlowGraph) -> RegisterSets {
    let mut last_use: BTreeMap<StoredSignal, (u32, u32)> = BTreeMap::new();
    for (src, consumer) in uses(s, g) {
        let Some(pc) = producer_cycle(s, src) else { continue };
        let e = last_use.entry(stored(g, src).unwrap()).or_insert((pc, consumer));
        e.1 = e.1.max(consumer);
    }
    let mut sets = vec![BoundarySet::default(); s.latency.saturating_sub(1) as usize];
    for c in 1..s.latency {
        for (sig, &(produced, last)) in &last_use {
            if produced <= c && last > c {
                insert(&mut sets, c, sig.clone());
            }
        }
    }
    RegisterSets { boundaries: sets }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Register {
    pub id: String,
    pub lane: String,
    pub width: u32,
    pub carry: bool,
    /// Signals held over time, in order of first use.
    pub contents: Vec<String>,
}

impl Register {
    pub fn fan_in(&self) -> u32 {
        if self.carry {
            1
        } else {
            self.contents.len() as u32
        }
    }
}

/// First and last boundary a signal is held, with its display name.
type LiveRange = ((u32, u32), String);

/// Left-edge allocation: intervals sorted by start go into the first
/// register that is free again.
fn left_edge<T: Clone>(mut items: Vec<((u32, u32), T)>) -> Vec<Vec<T>> {
    items.sort_by_key(|(iv, _)| *iv);
    let mut regs: Vec<(u32, Vec<T>)> = Vec::new();
    for ((start, end), item) in items {
        match regs.iter_mut().find(|(free_after, _)| *free_after < start) {
            Some(r) => {
                r.0 = end;
                r.1.push(item);
            }
            None => regs.push((end, vec![item])),
        }
    }
    regs.into_iter().map(|(_, v)| v).collect()
}

/// Physical registers: left-edge allocated 1-bit data registers per
/// producing lane, plus one carry register per lane that ever holds its
/// carry across a boundary.
pub fn allocate_registers(sets: &RegisterSets, binding: &LaneBinding) -> Vec<Register> {
    let mut intervals: BTreeMap<StoredSignal, (u32, u32)> = BTreeMap::new();
    for (i, b) in sets.boundaries.iter().enumerate() {
        let c = i as u32 + 1;
        for sig in b.data.iter().chain(&b.carries) {
            let e = intervals.entry(sig.clone()).or_insert((c, c));
            e.1 = c;
        }
    }
    let lane_id = |sig: &StoredSignal| binding.lane_of(sig.op()).map(|l| l.id.clone()).unwrap_or_else(|| sig.op().to_string());
    let mut data: BTreeMap<String, Vec<LiveRange>> = BTreeMap::new();
    let mut carry_lanes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (sig, iv) in &intervals {
        match sig {
            StoredSignal::Bit { .. } => data.entry(lane_id(sig)).or_default().push((*iv, sig.to_string())),
            StoredSignal::Carry { .. } => carry_lanes.entry(lane_id(sig)).or_default().push(sig.to_string()),
        }
    }
    let mut regs = Vec::new();
    for (lane, items) in data {
        for (k, contents) in left_edge(items).into_iter().enumerate() {
            regs.push(Register { id: format!("r_{lane}_{k}"), lane: lane.clone(), width: 1, carry: false, contents });
        }
    }
    for (lane, contents) in carry_lanes {
        regs.push(Register { id: format!("c_{lane}"), lane, width: 1, carry: true, contents });
    }
    regs
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PortMux {
    pub lane: String,
    pub port: usize,
    pub fan_in: u32,
    pub width: u32,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegisterMux {
    pub register: String,
    pub fan_in: u32,
    pub width: u32,
    pub carry: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MuxReport {
    pub ports: Vec<PortMux>,
    pub registers: Vec<RegisterMux>,
}

/// Multiplexer tallies. A port's fan-in is the number of distinct source
/// expressions it sees over the cycles; a register's is the number of
/// distinct signals it stores (carry registers always see the same wire).
pub fn mux_counts(s: &Schedule, g: &DataFlowGraph, binding: &LaneBinding) -> MuxReport {
    let names = g.name_table();
    let mut ports = Vec::new();
    for lane in &binding.lanes {
        let mut by_cycle: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (f, &c) in s.fragments.iter().zip(&s.assignment) {
            if f.parent == lane.id {
                by_cycle.entry(c).or_default().push(g.op_index(&f.id).unwrap());
            }
        }
        let arity = by_cycle.values().flatten().map(|&i| g.ops[i].operands.len()).max().unwrap_or(0);
        for port in 0..arity {
            let mut sources = BTreeSet::new();
            for ops in by_cycle.values() {
                let mut parts: Vec<Operand> = ops.iter().rev().map(|&i| padded(g, &names, i, port)).collect();
                parts.retain(|p| names.operand_width(g, p) != Some(0));
                sources.insert(operand_text(&Operand::concat(parts)));
            }
            ports.push(PortMux {
                lane: lane.id.clone(),
                port,
                fan_in: sources.len() as u32,
                width: lane.width,
                sources: sources.into_iter().collect(),
            });
        }
    }
    let sets = register_bits(s, g);
    let registers = allocate_registers(&sets, binding)
        .into_iter()
        .map(|r| RegisterMux { fan_in: r.fan_in(), width: r.width, carry: r.carry, register: r.id })
        .collect();
    MuxReport { ports, registers }
}

/// Operand `port` of op `i`, padded or cut to the op width.
fn padded(g: &DataFlowGraph, names: &NameTable, i: usize, port: usize) -> Operand {
    let op = &g.ops[i];
    crate::dfg::slice_operand(g, names, &op.operands[port], op.width - 1, 0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OriginalCost {
    /// One shared adder as wide as the widest addition.
    pub adder_width: u32,
    pub adders: u32,
    pub mult_units: u32,
    pub latency: u32,
    /// Register widths after left-edge allocation of whole values.
    pub registers: Vec<Register>,
    pub register_bits_max: u32,
    pub port_fan_in: Vec<u32>,
    pub port_width: u32,
}

/// Costs of the conventional schedule: one op per cycle in topological
/// order, all additions on one shared adder, whole results stored.
pub fn original_costs(g: &DataFlowGraph) -> OriginalCost {
    let names = g.name_table();
    let order: Vec<usize> = topo_indices(g).into_iter().filter(|&i| !g.ops[i].kind.is_glue()).collect();
    let cycle: BTreeMap<usize, u32> = order.iter().enumerate().map(|(k, &i)| (i, k as u32 + 1)).collect();
    let adds: Vec<usize> = order.iter().copied().filter(|&i| g.ops[i].kind == OpKind::Add).collect();
    let adder_width = adds.iter().map(|&i| g.ops[i].width).max().unwrap_or(0);

    // op-level producers seen through glue
    fn producers(g: &DataFlowGraph, names: &NameTable, i: usize, out: &mut BTreeSet<usize>) {
        for d in g.op_dependencies(i, names) {
            if g.ops[d].kind.is_glue() {
                producers(g, names, d, out);
            } else {
                out.insert(d);
            }
        }
    }
    let mut last_use: BTreeMap<usize, u32> = BTreeMap::new();
    for &i in &order {
        let mut ps = BTreeSet::new();
        producers(g, &names, i, &mut ps);
        for p in ps {
            let e = last_use.entry(p).or_insert(0);
            *e = (*e).max(cycle[&i]);
        }
    }
    let mut items = Vec::new();
    let mut per_boundary = vec![0u32; order.len().saturating_sub(1)];
    for (&p, &last) in &last_use {
        let start = cycle[&p];
        if last > start {
            items.push(((start, last - 1), p));
            for b in start..last {
                per_boundary[(b - 1) as usize] += g.ops[p].width;
            }
        }
    }
    let registers = left_edge(items)
        .into_iter()
        .enumerate()
        .map(|(k, vals)| Register {
            id: format!("r{k}"),
            lane: "shared".into(),
            width: vals.iter().map(|&v| g.ops[v].width).max().unwrap_or(0),
            carry: false,
            contents: vals.iter().map(|&v| g.ops[v].id.clone()).collect(),
        })
        .collect();
    let arity = adds.iter().map(|&i| g.ops[i].operands.len()).max().unwrap_or(0);
    let port_fan_in = (0..arity)
        .map(|port| {
            adds.iter()
                .filter_map(|&i| g.ops[i].operands.get(port))
                .map(operand_text)
                .collect::<BTreeSet<_>>()
                .len() as u32
        })
        .collect();
    OriginalCost {
        adder_width,
        adders: u32::from(!adds.is_empty()),
        mult_units: order.iter().filter(|&&i| g.ops[i].kind == OpKind::MultCore).count() as u32,
        latency: order.len() as u32,
        registers,
        register_bits_max: per_boundary.into_iter().max().unwrap_or(0),
        port_fan_in,
        port_width: adder_width,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegisterSummary {
    pub per_boundary: Vec<u32>,
    pub max: u32,
    pub sets: Vec<Vec<String>>,
    pub allocated: Vec<Register>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub lanes: Vec<Lane>,
    pub registers: RegisterSummary,
    pub muxes: MuxReport,
    pub bits_per_cycle: Vec<u32>,
    pub ops_per_cycle: Vec<u32>,
    pub control_states: u32,
    pub original: OriginalCost,
}

/// Full cost comparison. `original` is the design before fragmentation.
pub fn cost_report(s: &Schedule, fragmented: &DataFlowGraph, original: &DataFlowGraph) -> CostReport {
    let binding = bind_lanes(s);
    let sets = register_bits(s, fragmented);
    CostReport {
        registers: RegisterSummary {
            per_boundary: sets.per_boundary(),
            max: sets.max(),
            sets: sets
                .boundaries
                .iter()
                .map(|b| b.data.iter().chain(&b.carries).map(|x| x.to_string()).collect())
                .collect(),
            allocated: allocate_registers(&sets, &binding),
        },
        muxes: mux_counts(s, fragmented, &binding),
        lanes: binding.lanes,
        bits_per_cycle: s.bits_per_cycle(),
        ops_per_cycle: s.ops_per_cycle(),
        control_states: s.latency,
        original: original_costs(original),
    }
}

/// Groups `(fan_in, width)` pairs of real multiplexers (fan-in above 1).
fn mux_summary(items: impl Iterator<Item = (u32, u32)>) -> String {
    let mut groups: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for (fan_in, width) in items.filter(|(f, _)| *f > 1) {
        *groups.entry((fan_in, width)).or_default() += 1;
    }
    if groups.is_empty() {
        return "none".into();
    }
    groups
        .iter()
        .rev()
        .map(|((f, w), n)| format!("{n} mux {f} to 1 - {w} {}", if *w == 1 { "bit" } else { "bits" }))
        .collect::<Vec<_>>()
        .join(", ")
}

fn width_summary(widths: impl Iterator<Item = u32>, unit: &str) -> String {
    let mut groups: BTreeMap<u32, u32> = BTreeMap::new();
    for w in widths {
        *groups.entry(w).or_default() += 1;
    }
    if groups.is_empty() {
        return "none".into();
    }
    groups
        .iter()
        .rev()
        .map(|(w, n)| format!("{n} {unit} {w} {}", if *w == 1 { "bit" } else { "bits" }))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Original versus fragmented costs, one row per datapath resource.
pub fn render_table(r: &CostReport) -> String {
    let o = &r.original;
    let rows = [
        (
            "FU",
            width_summary((0..o.adders).map(|_| o.adder_width), "x add"),
            width_summary(r.lanes.iter().filter(|l| l.kind == UnitKind::Adder).map(|l| l.width), "x add"),
        ),
        (
            "multipliers",
            o.mult_units.to_string(),
            r.lanes.iter().filter(|l| l.kind == UnitKind::MultCore).count().to_string(),
        ),
        (
            "registers",
            width_summary(o.registers.iter().map(|x| x.width), "x"),
            width_summary(r.registers.allocated.iter().map(|x| x.width), "x"),
        ),
        ("stored bits (max)", o.register_bits_max.to_string(), r.registers.max.to_string()),
        (
            "FU port muxes",
            mux_summary(o.port_fan_in.iter().map(|&f| (f, o.port_width))),
            mux_summary(r.muxes.ports.iter().map(|p| (p.fan_in, p.width))),
        ),
        (
            "register muxes",
            mux_summary(o.registers.iter().map(|x| (x.fan_in(), x.width))),
            mux_summary(r.muxes.registers.iter().map(|m| (m.fan_in, m.width))),
        ),
        ("control states", o.latency.to_string(), r.control_states.to_string()),
    ];
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap();
    let w1 = rows.iter().map(|r| r.1.len()).max().unwrap().max("original".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<w0$} | {:<w1$} | transformed", "", "original");
    for (name, a, b) in rows {
        let _ = writeln!(out, "{name:<w0$} | {a:<w1$} | {b}");
    }
    out
}
