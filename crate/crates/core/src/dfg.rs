// SPDX-License-Identifier: Apache-2.0

//! Dataflow-graph intermediate representation.
//!
//! A [`DataFlowGraph`] is a straight-line design: typed primary inputs, a list
//! of width-typed operations in definition order, and named outputs. Every
//! later phase (kernel extraction, timing, fragmentation, scheduling) consumes
//! and produces values of this type.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Signedness {
    Unsigned,
    Signed,
}

impl Signedness {
    pub fn is_signed(self) -> bool {
        self == Signedness::Signed
    }

    pub fn prefix(self) -> char {
        match self {
            Signedness::Unsigned => 'u',
            Signedness::Signed => 's',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Mult,
    MultCore,
    Lt,
    Max,
    Min,
    Not,
    Select,
}

impl OpKind {
    pub const ALL: [OpKind; 9] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mult,
        OpKind::MultCore,
        OpKind::Lt,
        OpKind::Max,
        OpKind::Min,
        OpKind::Not,
        OpKind::Select,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mult => "mult",
            OpKind::MultCore => "multcore",
            OpKind::Lt => "lt",
            OpKind::Max => "max",
            OpKind::Min => "min",
            OpKind::Not => "not",
            OpKind::Select => "select",
        }
    }

    pub fn from_keyword(s: &str) -> Option<OpKind> {
        OpKind::ALL.iter().copied().find(|k| k.keyword() == s)
    }

    pub fn arity(self) -> usize {
        match self {
            OpKind::Not => 1,
            OpKind::Select => 3,
            _ => 2,
        }
    }

    /// NOT and SELECT carry no additive delay.
    pub fn is_glue(self) -> bool {
        matches!(self, OpKind::Not | OpKind::Select)
    }

    /// Kinds that may remain after kernel extraction.
    pub fn is_kernel(self) -> bool {
        matches!(
            self,
            OpKind::Add | OpKind::MultCore | OpKind::Not | OpKind::Select
        )
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Constant bit pattern, stored LSB first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConstBits(Vec<bool>);

impl ConstBits {
    pub fn from_lsb_first(bits: Vec<bool>) -> ConstBits {
        assert!(!bits.is_empty(), "constant must have at least one bit");
        ConstBits(bits)
    }

    pub fn zeros(width: u32) -> ConstBits {
        ConstBits(vec![false; width.max(1) as usize])
    }

    pub fn from_value(value: u64, width: u32) -> ConstBits {
        ConstBits((0..width.max(1)).map(|i| i < 64 && (value >> i) & 1 == 1).collect())
    }

    /// Parses an MSB-first string of `0`/`1`.
    pub fn parse(text: &str) -> Option<ConstBits> {
        if text.is_empty() {
            return None;
        }
        let mut bits = Vec::with_capacity(text.len());
        for ch in text.chars().rev() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return None,
            }
        }
        Some(ConstBits(bits))
    }

    pub fn width(&self) -> u32 {
        self.0.len() as u32
    }

    pub fn bit(&self, i: u32) -> bool {
        self.0.get(i as usize).copied().unwrap_or(false)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

impl fmt::Display for ConstBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0.iter().rev() {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Input(String),
    Result(String),
    /// Carry-out of an ADD; one bit wide.
    Carry(String),
    Const(ConstBits),
    /// Concatenation, MSB part first.
    Concat(Vec<Operand>),
}

/// A possibly sliced reference to a value. Narrower operands are
/// zero-extended by their consumer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Operand {
    pub source: Source,
    /// Inclusive `(hi, lo)`; `None` selects the whole source.
    pub slice: Option<(u32, u32)>,
}

impl Operand {
    pub fn input(name: impl Into<String>) -> Operand {
        Operand { source: Source::Input(name.into()), slice: None }
    }

    pub fn result(name: impl Into<String>) -> Operand {
        Operand { source: Source::Result(name.into()), slice: None }
    }

    pub fn carry(name: impl Into<String>) -> Operand {
        Operand { source: Source::Carry(name.into()), slice: None }
    }

    pub fn constant(bits: ConstBits) -> Operand {
        Operand { source: Source::Const(bits), slice: None }
    }

    pub fn zero(width: u32) -> Operand {
        Operand::constant(ConstBits::zeros(width))
    }

    /// Builds a concatenation (MSB part first). Nested unsliced concats are
    /// flattened and a single part is returned as is.
    pub fn concat(parts: Vec<Operand>) -> Operand {
        let mut flat = Vec::with_capacity(parts.len());
        for p in parts {
            match p {
                Operand { source: Source::Concat(inner), slice: None } => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        Operand { source: Source::Concat(flat), slice: None }
    }

    pub fn sliced(mut self, hi: u32, lo: u32) -> Operand {
        self.slice = Some((hi, lo));
        self
    }

    /// Number of least-significant producer bits this edge drops.
    pub fn truncated_right(&self) -> u32 {
        self.slice.map(|(_, lo)| lo).unwrap_or(0)
    }

    /// Names of every input or op referenced, in textual order.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.source {
            Source::Input(n) | Source::Result(n) | Source::Carry(n) => out.push(n),
            Source::Const(_) => {}
            Source::Concat(parts) => parts.iter().for_each(|p| p.collect_refs(out)),
        }
    }

    /// Applies `f` to every leaf term (non-concat operand) in place.
    pub fn visit_leaves_mut(&mut self, f: &mut dyn FnMut(&mut Operand)) {
        if let Source::Concat(parts) = &mut self.source {
            for p in parts {
                p.visit_leaves_mut(f);
            }
        } else {
            f(self);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CarryIn {
    None,
    Constant(bool),
    CarryOf(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub name: String,
    pub width: u32,
    pub signedness: Signedness,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub id: String,
    pub kind: OpKind,
    pub width: u32,
    pub signedness: Signedness,
    pub operands: Vec<Operand>,
    pub carry_in: CarryIn,
}

impl Operation {
    pub fn new(id: impl Into<String>, kind: OpKind, width: u32, operands: Vec<Operand>) -> Self {
        Operation {
            id: id.into(),
            kind,
            width,
            signedness: Signedness::Unsigned,
            operands,
            carry_in: CarryIn::None,
        }
    }

    pub fn signed(mut self) -> Self {
        self.signedness = Signedness::Signed;
        self
    }

    pub fn with_carry_in(mut self, carry_in: CarryIn) -> Self {
        self.carry_in = carry_in;
        self
    }
}

/// A named design output. `value = None` exports the input or op of the same
/// name; otherwise the output is the given expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub name: String,
    pub value: Option<Operand>,
}

impl Output {
    pub fn named(name: impl Into<String>) -> Output {
        Output { name: name.into(), value: None }
    }

    pub fn expr(name: impl Into<String>, value: Operand) -> Output {
        Output { name: name.into(), value: Some(value) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataFlowGraph {
    pub name: String,
    pub inputs: Vec<Input>,
    pub ops: Vec<Operation>,
    pub outputs: Vec<Output>,
}

/// What a name resolves to inside a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Input(usize),
    Op(usize),
}

/// Where one operand bit comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BitOrigin {
    /// Beyond the operand width (zero extension) or a constant 0.
    Zero,
    One,
    Input { input: usize, bit: u32 },
    Op { op: usize, bit: u32 },
    Carry { op: usize },
}

/// A producer in the bit-level dependency relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BitSource {
    Input { input: usize, bit: u32 },
    Op { op: usize, bit: u32 },
    Carry { op: usize },
}

impl BitOrigin {
    pub fn source(self) -> Option<BitSource> {
        match self {
            BitOrigin::Zero | BitOrigin::One => None,
            BitOrigin::Input { input, bit } => Some(BitSource::Input { input, bit }),
            BitOrigin::Op { op, bit } => Some(BitSource::Op { op, bit }),
            BitOrigin::Carry { op } => Some(BitSource::Carry { op }),
        }
    }
}

impl DataFlowGraph {
    pub fn new(name: impl Into<String>) -> Self {
        DataFlowGraph { name: name.into(), inputs: Vec::new(), ops: Vec::new(), outputs: Vec::new() }
    }

    pub fn add_input(&mut self, name: impl Into<String>, width: u32, signedness: Signedness) {
        self.inputs.push(Input { name: name.into(), width, signedness });
    }

    pub fn lookup(&self, name: &str) -> Option<Signal> {
        if let Some(i) = self.inputs.iter().position(|x| x.name == name) {
            return Some(Signal::Input(i));
        }
        self.ops.iter().position(|o| o.id == name).map(Signal::Op)
    }

    pub fn op_index(&self, id: &str) -> Option<usize> {
        self.ops.iter().position(|o| o.id == id)
    }

    pub fn op(&self, id: &str) -> Option<&Operation> {
        self.ops.iter().find(|o| o.id == id)
    }

    /// Name → signal map, for repeated lookups.
    pub fn name_table(&self) -> NameTable {
        let mut map = HashMap::new();
        for (i, x) in self.inputs.iter().enumerate() {
            map.entry(x.name.clone()).or_insert(Signal::Input(i));
        }
        for (i, o) in self.ops.iter().enumerate() {
            map.entry(o.id.clone()).or_insert(Signal::Op(i));
        }
        NameTable { map }
    }

    pub fn total_input_width(&self) -> u32 {
        self.inputs.iter().map(|i| i.width).sum()
    }

    /// Width of an operand expression. Returns `None` for unresolved names.
    pub fn operand_width(&self, operand: &Operand) -> Option<u32> {
        self.name_table().operand_width(self, operand)
    }

    /// The operand that an output denotes.
    pub fn output_operand(&self, output: &Output) -> Operand {
        match &output.value {
            Some(v) => v.clone(),
            None => match self.lookup(&output.name) {
                Some(Signal::Input(_)) => Operand::input(&output.name),
                _ => Operand::result(&output.name),
            },
        }
    }

    /// Ops that reference `op` anywhere (operands or carry-in).
    pub fn op_dependencies(&self, index: usize, names: &NameTable) -> BTreeSet<usize> {
        let op = &self.ops[index];
        let mut deps = BTreeSet::new();
        for operand in &op.operands {
            for r in operand.references() {
                if let Some(Signal::Op(j)) = names.get(r) {
                    deps.insert(j);
                }
            }
        }
        if let CarryIn::CarryOf(c) = &op.carry_in {
            if let Some(Signal::Op(j)) = names.get(c) {
                deps.insert(j);
            }
        }
        deps
    }

    /// Indices of ops referenced by some design output.
    pub fn output_ops(&self) -> BTreeSet<usize> {
        let names = self.name_table();
        let mut set = BTreeSet::new();
        for out in &self.outputs {
            let operand = self.output_operand(out);
            for r in operand.references() {
                if let Some(Signal::Op(j)) = names.get(r) {
                    set.insert(j);
                }
            }
        }
        set
    }
}

pub struct NameTable {
    map: HashMap<String, Signal>,
}

impl NameTable {
    pub fn get(&self, name: &str) -> Option<Signal> {
        self.map.get(name).copied()
    }

    pub fn op(&self, name: &str) -> Option<usize> {
        match self.get(name) {
            Some(Signal::Op(i)) => Some(i),
            _ => None,
        }
    }

    pub fn operand_width(&self, g: &DataFlowGraph, operand: &Operand) -> Option<u32> {
        if let Some((hi, lo)) = operand.slice {
            return Some(hi.saturating_sub(lo) + 1);
        }
        self.source_width(g, &operand.source)
    }

    pub fn source_width(&self, g: &DataFlowGraph, source: &Source) -> Option<u32> {
        match source {
            Source::Input(n) => match self.get(n)? {
                Signal::Input(i) => Some(g.inputs[i].width),
                Signal::Op(_) => None,
            },
            Source::Result(n) => match self.get(n)? {
                Signal::Op(i) => Some(g.ops[i].width),
                Signal::Input(_) => None,
            },
            Source::Carry(_) => Some(1),
            Source::Const(c) => Some(c.width()),
            Source::Concat(parts) => {
                let mut w = 0;
                for p in parts {
                    w += self.operand_width(g, p)?;
                }
                Some(w)
            }
        }
    }

    /// Resolves bit `i` of an operand (LSB = 0) to where it comes from.
    pub fn operand_bit(&self, g: &DataFlowGraph, operand: &Operand, i: u32) -> BitOrigin {
        let (base, limit) = match operand.slice {
            Some((hi, lo)) => (lo, hi - lo + 1),
            None => (0, self.source_width(g, &operand.source).unwrap_or(0)),
        };
        if i >= limit {
            return BitOrigin::Zero;
        }
        let j = base + i;
        match &operand.source {
            Source::Input(n) => match self.get(n) {
                Some(Signal::Input(input)) if j < g.inputs[input].width => {
                    BitOrigin::Input { input, bit: j }
                }
                _ => BitOrigin::Zero,
            },
            Source::Result(n) => match self.get(n) {
                Some(Signal::Op(op)) if j < g.ops[op].width => BitOrigin::Op { op, bit: j },
                _ => BitOrigin::Zero,
            },
            Source::Carry(n) => match self.get(n) {
                Some(Signal::Op(op)) if j == 0 => BitOrigin::Carry { op },
                _ => BitOrigin::Zero,
            },
            Source::Const(c) => {
                if c.bit(j) {
                    BitOrigin::One
                } else {
                    BitOrigin::Zero
                }
            }
            Source::Concat(parts) => {
                // parts are MSB first; walk from the LSB end
                let mut offset = j;
                for p in parts.iter().rev() {
                    let w = self.operand_width(g, p).unwrap_or(0);
                    if offset < w {
                        return self.operand_bit(g, p, offset);
                    }
                    offset -= w;
                }
                BitOrigin::Zero
            }
        }
    }
}

/// Returns the sub-range `[hi:lo]` of `operand` as a new operand. Bits past
/// the operand width become constant zeros.
pub fn slice_operand(g: &DataFlowGraph, names: &NameTable, operand: &Operand, hi: u32, lo: u32) -> Operand {
    assert!(hi >= lo);
    let width = names.operand_width(g, operand).unwrap_or(0);
    let mut parts = Vec::new();
    if hi >= width {
        let pad_lo = lo.max(width);
        parts.push(Operand::zero(hi - pad_lo + 1));
    }
    if lo < width {
        let top = hi.min(width - 1);
        parts.extend(slice_within(g, names, operand, top, lo));
    }
    Operand::concat(parts)
}

// Returns MSB-first parts covering [hi:lo], all within the operand width.
fn slice_within(g: &DataFlowGraph, names: &NameTable, operand: &Operand, hi: u32, lo: u32) -> Vec<Operand> {
    let base = operand.slice.map(|(_, l)| l).unwrap_or(0);
    match &operand.source {
        Source::Concat(parts) => {
            let (lo, hi) = (lo + base, hi + base);
            let mut out = Vec::new();
            let mut offset = 0u32;
            let mut pieces = Vec::new();
            for p in parts.iter().rev() {
                let w = names.operand_width(g, p).unwrap_or(0);
                let (p_lo, p_hi) = (offset, offset + w - 1);
                if p_hi >= lo && p_lo <= hi {
                    let s_lo = lo.max(p_lo) - offset;
                    let s_hi = hi.min(p_hi) - offset;
                    pieces.push(slice_within(g, names, p, s_hi, s_lo));
                }
                offset += w;
            }
            for piece in pieces.into_iter().rev() {
                out.extend(piece);
            }
            out
        }
        source => {
            let full = names.source_width(g, source).unwrap_or(0);
            let (nlo, nhi) = (base + lo, base + hi);
            if nlo == 0 && nhi + 1 == full {
                vec![Operand { source: source.clone(), slice: None }]
            } else {
                vec![Operand { source: source.clone(), slice: Some((nhi, nlo)) }]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("`{name}` has zero width")]
    ZeroWidth { name: String },
    #[error("op `{op}`: undefined reference `{name}`")]
    UndefinedReference { op: String, name: String },
    #[error("op `{op}`: `{name}` is referenced before its definition")]
    ForwardReference { op: String, name: String },
    #[error("op `{op}`: dependency cycle through {}", .cycle.join(" -> "))]
    Cycle { op: String, cycle: Vec<String> },
    #[error("op `{op}`: slice [{hi}:{lo}] out of range for `{name}` of width {width}")]
    SliceOutOfRange { op: String, name: String, hi: u32, lo: u32, width: u32 },
    #[error("op `{op}`: {kind} expects {expected} operands, got {actual}")]
    BadArity { op: String, kind: OpKind, expected: usize, actual: usize },
    #[error("op `{op}`: only add may take a carry-in")]
    CarryInOnNonAdd { op: String },
    #[error("op `{op}`: carry source `{name}` is not an add")]
    CarryOfNonAdd { op: String, name: String },
    #[error("op `{op}`: select condition must be 1 bit wide, got {width}")]
    ConditionWidth { op: String, width: u32 },
    #[error("output `{name}` refers to nothing")]
    UndefinedOutput { name: String },
    #[error("op `{op}`: `{name}` used with the wrong reference form")]
    WrongReferenceKind { op: String, name: String },
}

impl ValidationError {
    /// Op (or output) the diagnostic is attached to.
    pub fn subject(&self) -> &str {
        match self {
            ValidationError::DuplicateName(n) => n,
            ValidationError::ZeroWidth { name } => name,
            ValidationError::UndefinedOutput { name } => name,
            ValidationError::UndefinedReference { op, .. }
            | ValidationError::ForwardReference { op, .. }
            | ValidationError::Cycle { op, .. }
            | ValidationError::SliceOutOfRange { op, .. }
            | ValidationError::BadArity { op, .. }
            | ValidationError::CarryInOnNonAdd { op }
            | ValidationError::CarryOfNonAdd { op, .. }
            | ValidationError::ConditionWidth { op, .. }
            | ValidationError::WrongReferenceKind { op, .. } => op,
        }
    }
}

/// Checks every structural invariant of the IR. Returns all diagnostics found.
pub fn validate(g: &DataFlowGraph) -> Result<(), Vec<ValidationError>> {
    let mut errs = Vec::new();
    let mut seen = HashSet::new();
    for name in g.inputs.iter().map(|i| &i.name).chain(g.ops.iter().map(|o| &o.id)) {
        if !seen.insert(name.as_str()) {
            errs.push(ValidationError::DuplicateName(name.clone()));
        }
    }
    for i in &g.inputs {
        if i.width == 0 {
            errs.push(ValidationError::ZeroWidth { name: i.name.clone() });
        }
    }
    let names = g.name_table();
    let position: HashMap<&str, usize> =
        g.ops.iter().enumerate().map(|(i, o)| (o.id.as_str(), i)).collect();

    for (idx, op) in g.ops.iter().enumerate() {
        if op.width == 0 {
            errs.push(ValidationError::ZeroWidth { name: op.id.clone() });
        }
        if op.operands.len() != op.kind.arity() {
            errs.push(ValidationError::BadArity {
                op: op.id.clone(),
                kind: op.kind,
                expected: op.kind.arity(),
                actual: op.operands.len(),
            });
        }
        match &op.carry_in {
            CarryIn::None => {}
            _ if op.kind != OpKind::Add => {
                errs.push(ValidationError::CarryInOnNonAdd { op: op.id.clone() })
            }
            CarryIn::Constant(_) => {}
            CarryIn::CarryOf(c) => {
                check_carry_ref(g, &names, &position, idx, op, c, &mut errs);
            }
        }
        for operand in &op.operands {
            check_operand(g, &names, Some(idx), &op.id, operand, &mut errs);
        }
        if op.kind == OpKind::Select && op.operands.len() == 3 {
            if let Some(w) = names.operand_width(g, &op.operands[0]) {
                if w != 1 {
                    errs.push(ValidationError::ConditionWidth { op: op.id.clone(), width: w });
                }
            }
        }
    }
    for out in &g.outputs {
        match &out.value {
            None => {
                if names.get(&out.name).is_none() {
                    errs.push(ValidationError::UndefinedOutput { name: out.name.clone() });
                }
            }
            Some(v) => check_operand(g, &names, None, &out.name, v, &mut errs),
        }
    }
    if let Some(cycle) = find_cycle(g, &names) {
        errs.retain(|e| !matches!(e, ValidationError::ForwardReference { .. }));
        errs.push(ValidationError::Cycle { op: cycle[0].clone(), cycle });
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

fn check_carry_ref(
    g: &DataFlowGraph,
    names: &NameTable,
    position: &HashMap<&str, usize>,
    idx: usize,
    op: &Operation,
    target: &str,
    errs: &mut Vec<ValidationError>,
) {
    match names.get(target) {
        None => errs.push(ValidationError::UndefinedReference { op: op.id.clone(), name: target.into() }),
        Some(Signal::Input(_)) => {
            errs.push(ValidationError::CarryOfNonAdd { op: op.id.clone(), name: target.into() })
        }
        Some(Signal::Op(j)) => {
            if g.ops[j].kind != OpKind::Add {
                errs.push(ValidationError::CarryOfNonAdd { op: op.id.clone(), name: target.into() });
            }
            if position[target] >= idx && j != idx {
                errs.push(ValidationError::ForwardReference { op: op.id.clone(), name: target.into() });
            }
        }
    }
}

fn check_operand(
    g: &DataFlowGraph,
    names: &NameTable,
    idx: Option<usize>,
    owner: &str,
    operand: &Operand,
    errs: &mut Vec<ValidationError>,
) {
    let undefined = |name: &str| ValidationError::UndefinedReference { op: owner.into(), name: name.into() };
    match &operand.source {
        Source::Input(n) => match names.get(n) {
            None => errs.push(undefined(n)),
            Some(Signal::Op(_)) => {
                errs.push(ValidationError::WrongReferenceKind { op: owner.into(), name: n.clone() })
            }
            Some(Signal::Input(_)) => {}
        },
        Source::Result(n) => match names.get(n) {
            None => errs.push(undefined(n)),
            Some(Signal::Input(_)) => {
                errs.push(ValidationError::WrongReferenceKind { op: owner.into(), name: n.clone() })
            }
            Some(Signal::Op(j)) => {
                if let Some(idx) = idx {
                    if j > idx {
                        errs.push(ValidationError::ForwardReference { op: owner.into(), name: n.clone() });
                    }
                }
            }
        },
        Source::Carry(n) => match names.get(n) {
            None => errs.push(undefined(n)),
            Some(Signal::Input(_)) => {
                errs.push(ValidationError::CarryOfNonAdd { op: owner.into(), name: n.clone() })
            }
            Some(Signal::Op(j)) => {
                if g.ops[j].kind != OpKind::Add {
                    errs.push(ValidationError::CarryOfNonAdd { op: owner.into(), name: n.clone() });
                }
                if let Some(idx) = idx {
                    if j > idx {
                        errs.push(ValidationError::ForwardReference { op: owner.into(), name: n.clone() });
                    }
                }
            }
        },
        Source::Const(_) => {}
        Source::Concat(parts) => {
            for p in parts {
                check_operand(g, names, idx, owner, p, errs);
            }
        }
    }
    if let Some((hi, lo)) = operand.slice {
        let width = match &operand.source {
            Source::Concat(_) | Source::Const(_) => names.source_width(g, &operand.source),
            Source::Input(n) | Source::Result(n) => {
                names.source_width(g, &operand.source).or_else(|| match names.get(n) {
                    Some(Signal::Input(i)) => Some(g.inputs[i].width),
                    Some(Signal::Op(i)) => Some(g.ops[i].width),
                    None => None,
                })
            }
            Source::Carry(_) => Some(1),
        };
        if let Some(width) = width {
            if lo > hi || hi >= width {
                let name = match &operand.source {
                    Source::Input(n) | Source::Result(n) | Source::Carry(n) => n.clone(),
                    Source::Const(c) => format!("const({c})"),
                    Source::Concat(_) => "{...}".to_string(),
                };
                errs.push(ValidationError::SliceOutOfRange { op: owner.into(), name, hi, lo, width });
            }
        }
    }
}

fn find_cycle(g: &DataFlowGraph, names: &NameTable) -> Option<Vec<String>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let n = g.ops.len();
    let deps: Vec<BTreeSet<usize>> = (0..n).map(|i| g.op_dependencies(i, names)).collect();
    let mut state = vec![0u8; n];
    let mut stack: Vec<usize> = Vec::new();
    fn dfs(
        v: usize,
        deps: &[BTreeSet<usize>],
        state: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        state[v] = 1;
        stack.push(v);
        for &w in &deps[v] {
            if state[w] == 1 {
                let start = stack.iter().position(|&x| x == w).unwrap();
                let mut cyc = stack[start..].to_vec();
                cyc.push(w);
                return Some(cyc);
            }
            if state[w] == 0 {
                if let Some(c) = dfs(w, deps, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }
    for v in 0..n {
        if state[v] == 0 {
            if let Some(c) = dfs(v, &deps, &mut state, &mut stack) {
                return Some(c.into_iter().map(|i| g.ops[i].id.clone()).collect());
            }
        }
    }
    None
}

/// Op ids ordered so that every op follows the ops it references. Ties keep
/// definition order.
pub fn topo_order(g: &DataFlowGraph) -> Vec<String> {
    topo_indices(g).into_iter().map(|i| g.ops[i].id.clone()).collect()
}

pub fn topo_indices(g: &DataFlowGraph) -> Vec<usize> {
    let names = g.name_table();
    let n = g.ops.len();
    let mut indegree = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, deg) in indegree.iter_mut().enumerate() {
        for d in g.op_dependencies(i, &names) {
            if d != i {
                *deg += 1;
                users[d].push(i);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &u in &users[v] {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.insert(u);
            }
        }
    }
    order
}

/// Bit-level dependency relation: `producers[op][bit]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitDeps {
    pub producers: Vec<Vec<Vec<BitSource>>>,
}

impl BitDeps {
    pub fn of(&self, op: usize, bit: u32) -> &[BitSource] {
        &self.producers[op][bit as usize]
    }
}

/// Computes, for every result bit of every op, the set of bits it reads.
pub fn bit_deps(g: &DataFlowGraph) -> BitDeps {
    let names = g.name_table();
    let producers = g
        .ops
        .iter()
        .enumerate()
        .map(|(idx, op)| (0..op.width).map(|bit| op_bit_producers(g, &names, idx, op, bit)).collect())
        .collect();
    BitDeps { producers }
}

fn op_bit_producers(g: &DataFlowGraph, names: &NameTable, idx: usize, op: &Operation, bit: u32) -> Vec<BitSource> {
    let mut set = BTreeSet::new();
    let mut push = |o: BitOrigin| {
        if let Some(s) = o.source() {
            set.insert(s);
        }
    };
    match op.kind {
        OpKind::Add | OpKind::Sub => {
            for operand in &op.operands {
                push(names.operand_bit(g, operand, bit));
            }
            if bit > 0 {
                push(BitOrigin::Op { op: idx, bit: bit - 1 });
            } else if let CarryIn::CarryOf(c) = &op.carry_in {
                if let Some(j) = names.op(c) {
                    push(BitOrigin::Carry { op: j });
                }
            }
        }
        OpKind::Not => {
            for operand in &op.operands {
                push(names.operand_bit(g, operand, bit));
            }
        }
        OpKind::Select => {
            if let Some(cond) = op.operands.first() {
                push(names.operand_bit(g, cond, 0));
            }
            for operand in op.operands.iter().skip(1) {
                push(names.operand_bit(g, operand, bit));
            }
        }
        OpKind::Mult | OpKind::MultCore | OpKind::Lt | OpKind::Max | OpKind::Min => {
            for operand in &op.operands {
                let w = names.operand_width(g, operand).unwrap_or(0);
                for i in 0..w {
                    push(names.operand_bit(g, operand, i));
                }
            }
        }
    }
    set.into_iter().collect()
}

/// Generates names not yet used in a graph.
#[derive(Debug, Clone, Default)]
pub struct NameGen {
    used: HashSet<String>,
}

impl NameGen {
    pub fn for_graph(g: &DataFlowGraph) -> NameGen {
        let mut used = HashSet::new();
        used.extend(g.inputs.iter().map(|i| i.name.clone()));
        used.extend(g.ops.iter().map(|o| o.id.clone()));
        NameGen { used }
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    /// Returns `preferred` if free, else `preferred_N` for the smallest free N.
    pub fn fresh(&mut self, preferred: &str) -> String {
        if self.used.insert(preferred.to_string()) {
            return preferred.to_string();
        }
        let c = (1..).map(|n| format!("{preferred}_{n}")).find(|c| !self.used.contains(c)).unwrap();
        self.used.insert(c.clone());
        c
    }
}

/// Rewrites every reference to a name in `subst` with the mapped expression,
/// keeping slices consistent.
pub fn substitute(
    g: &DataFlowGraph,
    names: &NameTable,
    operand: &Operand,
    subst: &HashMap<String, Operand>,
) -> Operand {
    match &operand.source {
        Source::Result(n) => match subst.get(n) {
            Some(expr) => match operand.slice {
                Some((hi, lo)) => slice_operand(g, names, expr, hi, lo),
                None => expr.clone(),
            },
            None => operand.clone(),
        },
        Source::Concat(parts) => {
            let inner = Operand::concat(parts.iter().map(|p| substitute(g, names, p, subst)).collect());
            match operand.slice {
                Some((hi, lo)) => slice_operand(g, names, &inner, hi, lo),
                None => inner,
            }
        }
        _ => operand.clone(),
    }
}

/// Queue-based helper used by tests and passes: ops reachable backward from
/// the outputs.
pub fn live_ops(g: &DataFlowGraph) -> BTreeSet<usize> {
    let names = g.name_table();
    let mut live = BTreeSet::new();
    let mut queue: VecDeque<usize> = g.output_ops().into_iter().collect();
    while let Some(v) = queue.pop_front() {
        if live.insert(v) {
            queue.extend(g.op_dependencies(v, &names));
        }
    }
    live
}
