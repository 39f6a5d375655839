// SPDX-License-Identifier: Apache-2.0

//! Bit-accurate evaluation.
//!
//! [`eval_dfg`] is the word-level reference semantics using arbitrary
//! precision integers. [`eval_schedule`] replays a scheduled fragmented design
//! one cycle at a time at bit level, reading cross-cycle values only from the
//! registers the cost model says are stored. [`check_equiv`] compares the two
//! exhaustively or on seeded random vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cost::{register_bits, StoredSignal};
use crate::dfg::{BitOrigin, CarryIn, DataFlowGraph, NameTable, OpKind, Operand, Signal, Source};
use crate::schedule::Schedule;

pub type InputVector = BTreeMap<String, BigUint>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("missing value for input `{0}`")]
    MissingInput(String),
    #[error("value for input `{name}` does not fit in {width} bits")]
    InputOutOfRange { name: String, width: u32 },
    #[error("cycle {cycle}: `{signal}` is needed but neither computed this cycle nor latched")]
    TraceInconsistency { cycle: u32, signal: String },
}

/// Values of every op result and design output for one input vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub outputs: BTreeMap<String, BigUint>,
    pub results: HashMap<String, BigUint>,
    pub carries: HashMap<String, bool>,
}

pub(crate) fn mask(width: u32) -> BigUint {
    (BigUint::one() << width) - BigUint::one()
}

fn to_signed(v: &BigUint, width: u32) -> BigInt {
    if width > 0 && v.bit(u64::from(width - 1)) {
        BigInt::from_biguint(Sign::Plus, v.clone()) - (BigInt::one() << width)
    } else {
        BigInt::from_biguint(Sign::Plus, v.clone())
    }
}

fn wrap(v: BigInt, width: u32) -> BigUint {
    let modulus = BigInt::one() << width;
    let r = ((v % &modulus) + &modulus) % &modulus;
    r.to_biguint().unwrap()
}

/// Extends (or truncates) a `from`-bit value to `to` bits.
fn extend(v: &BigUint, from: u32, to: u32, signed: bool) -> BigUint {
    let mut out = v & mask(from.min(to).max(from));
    if signed && to > from && from > 0 && v.bit(u64::from(from - 1)) {
        out |= mask(to) ^ mask(from);
    }
    out & mask(to)
}

struct WordEval<'a> {
    g: &'a DataFlowGraph,
    names: NameTable,
    inputs: Vec<BigUint>,
    results: Vec<Option<BigUint>>,
    carries: Vec<bool>,
}

impl WordEval<'_> {
    fn operand(&self, o: &Operand) -> (BigUint, u32) {
        let (full, width) = match &o.source {
            Source::Input(n) => match self.names.get(n) {
                Some(Signal::Input(i)) => (self.inputs[i].clone(), self.g.inputs[i].width),
                _ => (BigUint::zero(), 1),
            },
            Source::Result(n) => match self.names.get(n) {
                Some(Signal::Op(i)) => (
                    self.results[i].clone().expect("op evaluated before use"),
                    self.g.ops[i].width,
                ),
                _ => (BigUint::zero(), 1),
            },
            Source::Carry(n) => match self.names.op(n) {
                Some(i) => (BigUint::from(u8::from(self.carries[i])), 1),
                None => (BigUint::zero(), 1),
            },
            Source::Const(c) => {
                let mut v = BigUint::zero();
                for (i, b) in c.bits().iter().enumerate() {
                    if *b {
                        v.set_bit(i as u64, true);
                    }
                }
                (v, c.width())
            }
            Source::Concat(parts) => {
                let mut v = BigUint::zero();
                let mut w = 0;
                for p in parts {
                    let (pv, pw) = self.operand(p);
                    v = (v << pw) | pv;
                    w += pw;
                }
                (v, w)
            }
        };
        match o.slice {
            Some((hi, lo)) => ((full >> lo) & mask(hi - lo + 1), hi - lo + 1),
            None => (full, width),
        }
    }

    fn run(&mut self) {
        for idx in 0..self.g.ops.len() {
            let op = &self.g.ops[idx];
            let w = op.width;
            let signed = op.signedness.is_signed();
            let args: Vec<(BigUint, u32)> = op.operands.iter().map(|o| self.operand(o)).collect();
            let ext = |k: usize| extend(&args[k].0, args[k].1, w, signed);
            let as_int = |k: usize| {
                if signed {
                    to_signed(&args[k].0, args[k].1)
                } else {
                    BigInt::from_biguint(Sign::Plus, args[k].0.clone())
                }
            };
            let value = match op.kind {
                OpKind::Add => {
                    let cin = match &op.carry_in {
                        CarryIn::None => false,
                        CarryIn::Constant(b) => *b,
                        CarryIn::CarryOf(c) => self.names.op(c).map(|j| self.carries[j]).unwrap_or(false),
                    };
                    let sum = ext(0) + ext(1) + BigUint::from(u8::from(cin));
                    self.carries[idx] = sum.bit(u64::from(w));
                    sum & mask(w)
                }
                OpKind::Sub => {
                    let diff = BigInt::from_biguint(Sign::Plus, ext(0)) - BigInt::from_biguint(Sign::Plus, ext(1));
                    wrap(diff, w)
                }
                OpKind::Mult => wrap(as_int(0) * as_int(1), w),
                OpKind::MultCore => (&args[0].0 * &args[1].0) & mask(w),
                OpKind::Lt => BigUint::from(u8::from(as_int(0) < as_int(1))),
                OpKind::Max | OpKind::Min => {
                    let lt = as_int(0) < as_int(1);
                    let pick_second = (op.kind == OpKind::Max) == lt;
                    if pick_second {
                        ext(1)
                    } else {
                        ext(0)
                    }
                }
                OpKind::Not => ext(0) ^ mask(w),
                OpKind::Select => {
                    if args[0].0.bit(0) {
                        ext(1)
                    } else {
                        ext(2)
                    }
                }
            };
            self.results[idx] = Some(value);
        }
    }
}

fn check_inputs(g: &DataFlowGraph, vector: &InputVector) -> Result<Vec<BigUint>, SimError> {
    g.inputs
        .iter()
        .map(|i| {
            let v = vector.get(&i.name).ok_or_else(|| SimError::MissingInput(i.name.clone()))?;
            if v.bits() > u64::from(i.width) {
                return Err(SimError::InputOutOfRange { name: i.name.clone(), width: i.width });
            }
            Ok(v.clone())
        })
        .collect()
}

/// Reference evaluation of a design with exact integer arithmetic.
pub fn eval_dfg(g: &DataFlowGraph, vector: &InputVector) -> Result<Evaluation, SimError> {
    let inputs = check_inputs(g, vector)?;
    let mut ev = WordEval {
        g,
        names: g.name_table(),
        inputs,
        results: vec![None; g.ops.len()],
        carries: vec![false; g.ops.len()],
    };
    ev.run();
    let outputs = g
        .outputs
        .iter()
        .map(|o| (o.name.clone(), ev.operand(&g.output_operand(o)).0))
        .collect();
    let results = g
        .ops
        .iter()
        .zip(&ev.results)
        .map(|(op, v)| (op.id.clone(), v.clone().unwrap()))
        .collect();
    let carries = g
        .ops
        .iter()
        .zip(&ev.carries)
        .filter(|(op, _)| op.kind == OpKind::Add)
        .map(|(op, c)| (op.id.clone(), *c))
        .collect();
    Ok(Evaluation { outputs, results, carries })
}

/// A value read or latched during cycle-by-cycle replay.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TracedBit {
    pub signal: String,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleRecord {
    pub cycle: u32,
    /// Fragment op → value computed in this cycle.
    pub fragments: BTreeMap<String, String>,
    /// Lane carries handed to a later cycle.
    pub carries_latched: Vec<TracedBit>,
    /// Register contents at the end of this cycle (boundary `cycle → cycle+1`).
    pub registers: Vec<TracedBit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleTrace {
    pub cycles: Vec<CycleRecord>,
    /// Signals actually read across each boundary, indexed by boundary - 1.
    #[serde(skip)]
    pub required: Vec<BTreeSet<StoredSignal>>,
    /// Signals held at each boundary, indexed by boundary - 1.
    #[serde(skip)]
    pub latched: Vec<BTreeSet<StoredSignal>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Key {
    Bit(usize, u32),
    Carry(usize),
}

struct BitEval<'a> {
    g: &'a DataFlowGraph,
    names: NameTable,
    inputs: Vec<BigUint>,
    values: HashMap<Key, bool>,
    produced_cycle: HashMap<Key, u32>,
    latched: Vec<BTreeSet<StoredSignal>>,
    required: Vec<BTreeSet<StoredSignal>>,
}

impl BitEval<'_> {
    fn describe(&self, key: Key) -> String {
        match key {
            Key::Bit(op, bit) => format!("{}[{}]", self.g.ops[op].id, bit),
            Key::Carry(op) => format!("carry({})", self.g.ops[op].id),
        }
    }

    fn stored(&self, key: Key) -> StoredSignal {
        match key {
            Key::Bit(op, bit) => StoredSignal::Bit { op: self.g.ops[op].id.clone(), bit },
            Key::Carry(op) => StoredSignal::Carry { op: self.g.ops[op].id.clone() },
        }
    }

    /// Reads a produced value from the point of view of `cycle`. `None`
    /// means an end-of-run read through the output ports.
    fn read_key(&mut self, key: Key, cycle: Option<u32>) -> Result<bool, SimError> {
        let Some(cycle) = cycle else {
            return Ok(self.values[&key]);
        };
        let produced = self.produced_cycle.get(&key).copied();
        match produced {
            Some(pc) if pc == cycle => Ok(self.values[&key]),
            Some(pc) if pc < cycle => {
                let signal = self.stored(key);
                for boundary in pc..cycle {
                    let b = (boundary - 1) as usize;
                    if !self.latched[b].contains(&signal) {
                        return Err(SimError::TraceInconsistency { cycle, signal: self.describe(key) });
                    }
                    self.required[b].insert(signal.clone());
                }
                Ok(self.values[&key])
            }
            _ => Err(SimError::TraceInconsistency { cycle, signal: self.describe(key) }),
        }
    }

    fn read(&mut self, origin: BitOrigin, cycle: Option<u32>) -> Result<bool, SimError> {
        match origin {
            BitOrigin::Zero => Ok(false),
            BitOrigin::One => Ok(true),
            BitOrigin::Input { input, bit } => Ok(self.inputs[input].bit(u64::from(bit))),
            BitOrigin::Op { op, bit } => {
                let kind = self.g.ops[op].kind;
                if kind.is_glue() {
                    self.glue_bit(op, bit, cycle)
                } else {
                    self.read_key(Key::Bit(op, bit), cycle)
                }
            }
            BitOrigin::Carry { op } => self.read_key(Key::Carry(op), cycle),
        }
    }

    fn glue_bit(&mut self, op: usize, bit: u32, cycle: Option<u32>) -> Result<bool, SimError> {
        let g = self.g;
        let o = &g.ops[op];
        match o.kind {
            OpKind::Not => {
                let origin = self.names.operand_bit(g, &o.operands[0], bit);
                Ok(!self.read(origin, cycle)?)
            }
            OpKind::Select => {
                // both branches are wired into the multiplexer, so both are read
                let cond = self.names.operand_bit(g, &o.operands[0], 0);
                let cond = self.read(cond, cycle)?;
                let t = self.read(self.names.operand_bit(g, &o.operands[1], bit), cycle)?;
                let f = self.read(self.names.operand_bit(g, &o.operands[2], bit), cycle)?;
                Ok(if cond { t } else { f })
            }
            _ => unreachable!("glue_bit on {:?}", o.kind),
        }
    }

    fn eval_add_bit(&mut self, op: usize, bit: u32, cycle: u32, chain: &mut HashMap<usize, bool>) -> Result<(), SimError> {
        let g = self.g;
        let o = &g.ops[op];
        let cin = if bit == 0 {
            match &o.carry_in {
                CarryIn::None => false,
                CarryIn::Constant(b) => *b,
                CarryIn::CarryOf(c) => {
                    let j = self.names.op(c).expect("validated");
                    self.read(BitOrigin::Carry { op: j }, Some(cycle))?
                }
            }
        } else {
            chain[&op]
        };
        let a = self.read(self.names.operand_bit(g, &o.operands[0], bit), Some(cycle))?;
        let b = self.read(self.names.operand_bit(g, &o.operands[1], bit), Some(cycle))?;
        let sum = a ^ b ^ cin;
        let cout = (a & b) | (cin & (a ^ b));
        chain.insert(op, cout);
        self.values.insert(Key::Bit(op, bit), sum);
        self.produced_cycle.insert(Key::Bit(op, bit), cycle);
        if bit + 1 == o.width {
            self.values.insert(Key::Carry(op), cout);
            self.produced_cycle.insert(Key::Carry(op), cycle);
        }
        Ok(())
    }

    fn eval_mult(&mut self, op: usize, cycle: u32) -> Result<(), SimError> {
        let g = self.g;
        let o = &g.ops[op];
        let mut args = Vec::new();
        for operand in &o.operands {
            let w = self.names.operand_width(g, operand).unwrap_or(0);
            let mut v = BigUint::zero();
            for i in 0..w {
                if self.read(self.names.operand_bit(g, operand, i), Some(cycle))? {
                    v.set_bit(u64::from(i), true);
                }
            }
            args.push(v);
        }
        let product = (&args[0] * &args[1]) & mask(o.width);
        for bit in 0..o.width {
            self.values.insert(Key::Bit(op, bit), product.bit(u64::from(bit)));
            self.produced_cycle.insert(Key::Bit(op, bit), cycle);
        }
        Ok(())
    }
}

/// A schedule prepared for replay on many vectors.
pub struct ScheduleReplay<'a> {
    schedule: &'a Schedule,
    g: &'a DataFlowGraph,
    sets: crate::cost::RegisterSets,
    latched: Vec<BTreeSet<StoredSignal>>,
    /// (cycle, depth, op, bit) for every scheduled bit, in evaluation order.
    work: Vec<(u32, u32, usize, u32)>,
}

impl<'a> ScheduleReplay<'a> {
    pub fn new(schedule: &'a Schedule, g: &'a DataFlowGraph) -> Self {
        let sets = register_bits(schedule, g);
        let latched = sets
            .boundaries
            .iter()
            .map(|b| b.data.iter().chain(&b.carries).cloned().collect())
            .collect();
        let mut work = Vec::new();
        for (idx, op) in g.ops.iter().enumerate() {
            if op.kind.is_glue() {
                continue;
            }
            for bit in 0..op.width {
                let slot = schedule.slot(idx, bit).expect("schedule covers every unit bit");
                work.push((slot.cycle, slot.depth, idx, bit));
            }
        }
        work.sort();
        ScheduleReplay { schedule, g, sets, latched, work }
    }

    /// Replays the schedule cycle by cycle. Within a cycle, bits are
    /// computed in chain-depth order; values from earlier cycles are only
    /// visible if the cost model stores them at every boundary in between.
    pub fn run(&self, vector: &InputVector) -> Result<(Evaluation, CycleTrace), SimError> {
        let (schedule, g, sets, work) = (self.schedule, self.g, &self.sets, &self.work);
        let inputs = check_inputs(g, vector)?;
        let boundaries = self.latched.len();
        let mut ev = BitEval {
            g,
            names: g.name_table(),
            inputs,
            values: HashMap::new(),
            produced_cycle: HashMap::new(),
            latched: self.latched.clone(),
            required: vec![BTreeSet::new(); boundaries],
        };

        let mut cycles = Vec::new();
        let mut chain: HashMap<usize, bool> = HashMap::new();
        let mut cursor = 0;
        for cycle in 1..=schedule.latency {
            let mut fragments = BTreeMap::new();
            while cursor < work.len() && work[cursor].0 == cycle {
                let (_, _, idx, bit) = work[cursor];
                match g.ops[idx].kind {
                    OpKind::MultCore => {
                        if bit == 0 {
                            ev.eval_mult(idx, cycle)?;
                        }
                    }
                    _ => ev.eval_add_bit(idx, bit, cycle, &mut chain)?,
                }
                cursor += 1;
            }
            for (idx, op) in g.ops.iter().enumerate() {
                if op.kind.is_glue() || schedule.op_cycle(idx) != Some(cycle) {
                    continue;
                }
                let text: String = (0..op.width)
                    .rev()
                    .map(|b| if ev.values[&Key::Bit(idx, b)] { '1' } else { '0' })
                    .collect();
                fragments.insert(op.id.clone(), text);
            }
            cycles.push(CycleRecord { cycle, fragments, carries_latched: Vec::new(), registers: Vec::new() });
        }
        if cursor != work.len() {
            let (cycle, _, idx, bit) = work[cursor];
            return Err(SimError::TraceInconsistency { cycle, signal: format!("{}[{}]", g.ops[idx].id, bit) });
        }

        let names = g.name_table();
        let mut outputs = BTreeMap::new();
        for o in &g.outputs {
            let operand = g.output_operand(o);
            let w = names.operand_width(g, &operand).unwrap_or(0);
            let mut v = BigUint::zero();
            for i in 0..w {
                if ev.read(names.operand_bit(g, &operand, i), None)? {
                    v.set_bit(u64::from(i), true);
                }
            }
            outputs.insert(o.name.clone(), v);
        }

        let lookup = |s: &StoredSignal, values: &HashMap<Key, bool>| -> bool {
            match s {
                StoredSignal::Bit { op, bit } => values[&Key::Bit(names.op(op).unwrap(), *bit)],
                StoredSignal::Carry { op } => values[&Key::Carry(names.op(op).unwrap())],
            }
        };
        for (b, rec) in cycles.iter_mut().enumerate().take(boundaries) {
            rec.registers = ev.latched[b]
                .iter()
                .map(|s| TracedBit { signal: s.to_string(), value: lookup(s, &ev.values) })
                .collect();
            rec.carries_latched = sets.boundaries[b]
                .carries
                .iter()
                .map(|s| TracedBit { signal: s.to_string(), value: lookup(s, &ev.values) })
                .collect();
        }

        let mut results = HashMap::new();
        let mut carries = HashMap::new();
        for (idx, op) in g.ops.iter().enumerate() {
            if op.kind.is_glue() {
                continue;
            }
            let mut v = BigUint::zero();
            for bit in 0..op.width {
                if ev.values[&Key::Bit(idx, bit)] {
                    v.set_bit(u64::from(bit), true);
                }
            }
            results.insert(op.id.clone(), v);
            if let Some(c) = ev.values.get(&Key::Carry(idx)) {
                carries.insert(op.id.clone(), *c);
            }
        }
        let trace = CycleTrace { cycles, required: ev.required, latched: ev.latched };
        Ok((Evaluation { outputs, results, carries }, trace))
    }
}

pub fn eval_schedule(
    schedule: &Schedule,
    g: &DataFlowGraph,
    vector: &InputVector,
) -> Result<(Evaluation, CycleTrace), SimError> {
    ScheduleReplay::new(schedule, g).run(vector)
}

/// How input vectors are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    Exhaustive,
    Random { vectors: u32, seed: u64 },
}

/// Inputs up to this many bits in total are checked exhaustively.
pub const EXHAUSTIVE_LIMIT: u32 = 16;
pub const RANDOM_VECTORS: u32 = 1000;

impl Strategy {
    pub fn auto(g: &DataFlowGraph, seed: u64) -> Strategy {
        if g.total_input_width() <= EXHAUSTIVE_LIMIT {
            Strategy::Exhaustive
        } else {
            Strategy::Random { vectors: RANDOM_VECTORS, seed }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Exhaustive => "exhaustive",
            Strategy::Random { .. } => "random",
        }
    }

    /// Enumerates the vectors for a design's inputs.
    pub fn vectors(&self, g: &DataFlowGraph) -> Vec<InputVector> {
        match *self {
            Strategy::Exhaustive => {
                let total = g.total_input_width();
                assert!(total <= 24, "exhaustive enumeration over {total} bits");
                (0u64..(1u64 << total))
                    .map(|mut n| {
                        let mut v = InputVector::new();
                        for i in &g.inputs {
                            v.insert(i.name.clone(), BigUint::from(n & ((1u64 << i.width) - 1)));
                            n >>= i.width;
                        }
                        v
                    })
                    .collect()
            }
            Strategy::Random { vectors, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..vectors).map(|_| random_vector(g, &mut rng)).collect()
            }
        }
    }
}

pub fn random_vector(g: &DataFlowGraph, rng: &mut impl Rng) -> InputVector {
    g.inputs
        .iter()
        .map(|i| {
            let mut v = BigUint::zero();
            for bit in 0..i.width {
                if rng.gen::<bool>() {
                    v.set_bit(u64::from(bit), true);
                }
            }
            (i.name.clone(), v)
        })
        .collect()
}

pub enum EquivTarget<'a> {
    Design(&'a DataFlowGraph),
    Schedule(ScheduleReplay<'a>),
}

impl<'a> EquivTarget<'a> {
    pub fn schedule(schedule: &'a Schedule, design: &'a DataFlowGraph) -> Self {
        EquivTarget::Schedule(ScheduleReplay::new(schedule, design))
    }

    fn design(&self) -> &DataFlowGraph {
        match self {
            EquivTarget::Design(d) => d,
            EquivTarget::Schedule(r) => r.g,
        }
    }

    fn eval(&self, v: &InputVector) -> Result<BTreeMap<String, BigUint>, SimError> {
        match self {
            EquivTarget::Design(d) => Ok(eval_dfg(d, v)?.outputs),
            EquivTarget::Schedule(replay) => Ok(replay.run(v)?.0.outputs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub vector: InputVector,
    pub expected: BTreeMap<String, BigUint>,
    pub actual: BTreeMap<String, BigUint>,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, v) in &self.vector {
            writeln!(f, "{name} = {v:#x};")?;
        }
        for (name, v) in &self.expected {
            let got = self.actual.get(name).map(|a| format!("{a:#x}")).unwrap_or_else(|| "missing".into());
            writeln!(f, "// output {name}: expected {v:#x}, got {got}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EquivError {
    #[error("input `{0}` differs between the two designs")]
    InputMismatch(String),
    #[error("output `{0}` differs between the two designs")]
    OutputMismatch(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivReport {
    pub strategy: Strategy,
    pub vectors: usize,
    pub counterexample: Option<Counterexample>,
}

impl EquivReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Checks that `target` produces the same outputs as `reference` on every
/// vector the strategy yields.
pub fn check_equiv(reference: &DataFlowGraph, target: &EquivTarget<'_>, strategy: Strategy) -> Result<EquivReport, EquivError> {
    let other = target.design();
    for (a, b) in reference.inputs.iter().zip(&other.inputs) {
        if a.name != b.name || a.width != b.width {
            return Err(EquivError::InputMismatch(a.name.clone()));
        }
    }
    if reference.inputs.len() != other.inputs.len() {
        let longer = if reference.inputs.len() > other.inputs.len() { reference } else { other };
        let i = &longer.inputs[reference.inputs.len().min(other.inputs.len())];
        return Err(EquivError::InputMismatch(i.name.clone()));
    }
    let ref_outs: BTreeSet<&str> = reference.outputs.iter().map(|o| o.name.as_str()).collect();
    let tgt_outs: BTreeSet<&str> = other.outputs.iter().map(|o| o.name.as_str()).collect();
    if let Some(n) = ref_outs.symmetric_difference(&tgt_outs).next() {
        return Err(EquivError::OutputMismatch(n.to_string()));
    }
    let vectors = strategy.vectors(reference);
    for v in &vectors {
        let expected = eval_dfg(reference, v)?.outputs;
        let actual = target.eval(v)?;
        if expected != actual {
            return Ok(EquivReport {
                strategy,
                vectors: vectors.len(),
                counterexample: Some(Counterexample { vector: v.clone(), expected, actual }),
            });
        }
    }
    Ok(EquivReport { strategy, vectors: vectors.len(), counterexample: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse;

    fn vec_of(pairs: &[(&str, u64)]) -> InputVector {
        pairs.iter().map(|(n, v)| (n.to_string(), BigUint::from(*v))).collect()
    }

    const CHAIN: &str = "design m; input A: u16; input B: u16; input D: u16; input F: u16;
C: add u16 = A + B; E: add u16 = C + D; G: add u16 = E + F; output G;";

    #[test]
    fn small_chain_values() {
        let g = parse(CHAIN).unwrap();
        let ev = eval_dfg(&g, &vec_of(&[("A", 1), ("B", 2), ("D", 4), ("F", 8)])).unwrap();
        assert_eq!(ev.results["C"], BigUint::from(3u8));
        assert_eq!(ev.results["E"], BigUint::from(7u8));
        assert_eq!(ev.results["G"], BigUint::from(15u8));
        assert_eq!(ev.outputs["G"], BigUint::from(15u8));
    }

    #[test]
    fn zeros_in_zeros_out() {
        let g = parse(CHAIN).unwrap();
        let ev = eval_dfg(&g, &vec_of(&[("A", 0), ("B", 0), ("D", 0), ("F", 0)])).unwrap();
        assert!(ev.outputs.values().all(|v| v.is_zero()));
    }

    #[test]
    fn wraparound_sets_carry() {
        let g = parse(CHAIN).unwrap();
        let ev = eval_dfg(&g, &vec_of(&[("A", 0xFFFF), ("B", 1), ("D", 0), ("F", 0)])).unwrap();
        assert!(ev.results["C"].is_zero());
        assert!(ev.carries["C"]);
    }

    #[test]
    fn missing_and_oversized_inputs() {
        let g = parse(CHAIN).unwrap();
        assert_eq!(
            eval_dfg(&g, &vec_of(&[("A", 0), ("B", 0), ("D", 0)])),
            Err(SimError::MissingInput("F".into()))
        );
        assert!(matches!(
            eval_dfg(&g, &vec_of(&[("A", 1 << 16), ("B", 0), ("D", 0), ("F", 0)])),
            Err(SimError::InputOutOfRange { .. })
        ));
    }

    #[test]
    fn signed_reference_semantics() {
        let g = parse(
            "design s; input a: s4; input b: s4;
m: mult s8 = a * b; l: lt s1 = a < b; x: max s4 = a, b; n: min u4 = a, b; d: sub s6 = a - b;
output m; output l; output x; output n; output d;",
        )
        .unwrap();
        // a = -3 (0b1101), b = 2
        let ev = eval_dfg(&g, &vec_of(&[("a", 0b1101), ("b", 2)])).unwrap();
        assert_eq!(ev.outputs["m"], BigUint::from((256 - 6) as u32));
        assert_eq!(ev.outputs["l"], BigUint::one());
        assert_eq!(ev.outputs["x"], BigUint::from(2u8));
        assert_eq!(ev.outputs["n"], BigUint::from(2u8)); // unsigned: 13 > 2
        assert_eq!(ev.outputs["d"], BigUint::from(64u32 - 5));
    }

    #[test]
    fn self_equivalence_and_mutation() {
        let g = parse(CHAIN).unwrap();
        let r = check_equiv(&g, &EquivTarget::Design(&g), Strategy::auto(&g, 1)).unwrap();
        assert!(r.passed());
        assert_eq!(r.strategy.name(), "random");
        assert_eq!(r.vectors, 1000);

        let mut broken = g.clone();
        broken.ops[1].operands[0] = Operand::result("C").sliced(14, 0);
        let r = check_equiv(&g, &EquivTarget::Design(&broken), Strategy::auto(&g, 1)).unwrap();
        let cex = r.counterexample.expect("mutation is detected");
        assert!(cex.to_string().contains("A = 0x"));
    }

    #[test]
    fn random_vectors_are_reproducible() {
        let g = parse(CHAIN).unwrap();
        let s = Strategy::Random { vectors: 20, seed: 42 };
        assert_eq!(s.vectors(&g), s.vectors(&g));
        assert_ne!(s.vectors(&g), Strategy::Random { vectors: 20, seed: 43 }.vectors(&g));
    }

    #[test]
    fn small_designs_use_exhaustive_enumeration() {
        let g = parse("design t; input a: u4; input b: u4; s: add u4 = a + b; output s;").unwrap();
        let r = check_equiv(&g, &EquivTarget::Design(&g), Strategy::auto(&g, 0)).unwrap();
        assert_eq!(r.strategy, Strategy::Exhaustive);
        assert_eq!(r.vectors, 256);
    }

    fn scheduled(text: &str, latency: u32) -> (DataFlowGraph, crate::fragment::Fragmentation, Schedule) {
        let g = parse(text).unwrap();
        let n = crate::timing::estimate_cycle(&g, latency).unwrap();
        let f = crate::fragment::fragment(&g, &crate::fragment::mobility(&g, n, latency).unwrap());
        let s = crate::schedule::schedule(&f, latency, n).unwrap();
        (g, f, s)
    }

    #[test]
    fn replay_matches_reference_and_latches() {
        let (g, f, s) = scheduled(CHAIN, 3);
        let v = vec_of(&[("A", 0xBEEF), ("B", 0x1234), ("D", 0xFFFF), ("F", 0x0F0F)]);
        let (ev, trace) = eval_schedule(&s, &f.design, &v).unwrap();
        assert_eq!(ev.outputs, eval_dfg(&g, &v).unwrap().outputs);
        assert_eq!(trace.cycles.len(), 3);
        assert_eq!(trace.cycles[0].registers.len(), 5);
        assert_eq!(trace.cycles[0].carries_latched.len(), 3);
        assert_eq!(trace.required, trace.latched);
        let sets = register_bits(&s, &f.design);
        for (b, set) in sets.boundaries.iter().enumerate() {
            let all: BTreeSet<_> = set.data.iter().chain(&set.carries).cloned().collect();
            assert_eq!(trace.latched[b], all);
        }
    }

    #[test]
    fn single_cycle_replay_latches_nothing() {
        let (g, f, s) = scheduled(CHAIN, 1);
        let v = vec_of(&[("A", 7), ("B", 9), ("D", 11), ("F", 13)]);
        let (ev, trace) = eval_schedule(&s, &f.design, &v).unwrap();
        assert_eq!(ev.outputs["G"], BigUint::from(40u32));
        assert_eq!(trace.cycles.len(), 1);
        assert!(trace.cycles[0].registers.is_empty());
        assert_eq!(eval_dfg(&g, &v).unwrap().outputs, ev.outputs);
    }

    #[test]
    fn missing_latch_is_a_trace_inconsistency() {
        let (_, f, mut s) = scheduled(CHAIN, 3);
        // pretend E's first fragment runs in cycle 2 without re-placing it
        let i = s.fragments.iter().position(|x| x.parent == "E" && x.index == 1).unwrap();
        s.assignment[i] = 3;
        let idx = f.design.op_index(&s.fragments[i].id).unwrap();
        for slot in &mut s.placement[idx] {
            slot.cycle = 3;
        }
        let v = vec_of(&[("A", 1), ("B", 2), ("D", 3), ("F", 4)]);
        assert!(matches!(eval_schedule(&s, &f.design, &v), Err(SimError::TraceInconsistency { .. })));
    }

    #[test]
    fn schedule_equivalence_on_fig3() {
        let text = crate::fixtures::FIG3;
        let (g, f, s) = scheduled(text, 3);
        let target = EquivTarget::schedule(&s, &f.design);
        let r = check_equiv(&g, &target, Strategy::auto(&g, 11)).unwrap();
        assert!(r.passed());
        assert_eq!(r.vectors, 1000);
    }

    #[test]
    fn signature_mismatch_is_an_error() {
        let a = parse("design t; input a: u4; s: add u4 = a + a; output s;").unwrap();
        let b = parse("design t; input a: u5; s: add u4 = a + a; output s;").unwrap();
        assert!(matches!(
            check_equiv(&a, &EquivTarget::Design(&b), Strategy::Exhaustive),
            Err(EquivError::InputMismatch(_))
        ));
    }
}
