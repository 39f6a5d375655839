// SPDX-License-Identifier: Apache-2.0

//! Operative kernel extraction.
//!
//! Rewrites signed and non-additive operations into unsigned ADD, MULT_CORE,
//! NOT and SELECT ops. Signed multiplication becomes one unsigned
//! `(m-1)x(n-1)` core plus an m-bit and an (n+1)-bit addition that apply the
//! sign-bit correction terms; subtraction, comparison, max and min become
//! additions with complemented operands and carry-in 1.

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dfg::{
    slice_operand, substitute, CarryIn, DataFlowGraph, NameGen, OpKind, Operand, Operation, Output, Signedness,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    SignedMult,
    UnsignedMult,
    Sub,
    Compare,
    MinMax,
    SignedAdd,
    SignedGlue,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::SignedMult => "signed_mult",
            Rule::UnsignedMult => "unsigned_mult",
            Rule::Sub => "sub",
            Rule::Compare => "compare",
            Rule::MinMax => "minmax",
            Rule::SignedAdd => "signed_add",
            Rule::SignedGlue => "signed_glue",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub original: String,
    pub rule: Rule,
    pub replacements: Vec<String>,
}

/// Which ops replaced which, in application order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoweringTrace {
    pub entries: Vec<TraceEntry>,
}

impl LoweringTrace {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn replacements_of(&self, id: &str) -> Option<&[String]> {
        self.entries.iter().find(|e| e.original == id).map(|e| e.replacements.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("no op named `{0}`")]
    UnknownOp(String),
    #[error("op `{op}` is {found}, expected {expected}")]
    WrongKind { op: String, expected: &'static str, found: OpKind },
    #[error("op `{op}`: signed multiply needs operands of at least 2 bits, got {m}x{n}")]
    UnsupportedWidth { op: String, m: u32, n: u32 },
}

/// True if the op is already in kernel form.
pub fn is_kernel_op(op: &Operation) -> bool {
    op.kind.is_kernel() && op.signedness == Signedness::Unsigned
}

struct Rewriter<'a> {
    src: &'a DataFlowGraph,
    out: DataFlowGraph,
    names: NameGen,
    subst: HashMap<String, Operand>,
    trace: LoweringTrace,
}

impl<'a> Rewriter<'a> {
    fn new(src: &'a DataFlowGraph) -> Self {
        let mut out = DataFlowGraph::new(src.name.clone());
        out.inputs = src.inputs.clone();
        Rewriter { src, out, names: NameGen::for_graph(src), subst: HashMap::new(), trace: LoweringTrace::default() }
    }

    fn rewrite(&self, o: &Operand) -> Operand {
        substitute(&self.out, &self.out.name_table(), o, &self.subst)
    }

    fn width(&self, o: &Operand) -> u32 {
        self.out.operand_width(o).expect("operand resolves in the rewritten graph")
    }

    fn slice(&self, o: &Operand, hi: u32, lo: u32) -> Operand {
        slice_operand(&self.out, &self.out.name_table(), o, hi, lo)
    }

    /// Sign- or zero-extends (or truncates) an operand to exactly `to` bits.
    fn extend(&self, o: &Operand, to: u32, signed: bool) -> Operand {
        let w = self.width(o);
        if to <= w || !signed {
            return self.slice(o, to - 1, 0);
        }
        let msb = self.slice(o, w - 1, w - 1);
        let mut parts = vec![msb; (to - w) as usize];
        parts.push(o.clone());
        Operand::concat(parts)
    }

    fn push(&mut self, op: Operation, replacements: &mut Vec<String>) -> Operand {
        let id = op.id.clone();
        self.out.ops.push(op);
        replacements.push(id.clone());
        Operand::result(id)
    }

    fn fresh(&mut self, base: &str, suffix: &str) -> String {
        self.names.fresh(&format!("{base}_{suffix}"))
    }

    fn not(&mut self, base: &str, suffix: &str, o: Operand, w: u32, reps: &mut Vec<String>) -> Operand {
        let id = self.fresh(base, suffix);
        self.push(Operation::new(id, OpKind::Not, w, vec![o]), reps)
    }

    /// Emits `a < b` over operands of their own widths, returning a 1-bit
    /// operand. When `name` is given the final NOT takes that id.
    fn less_than(&mut self, base: &str, name: Option<String>, a: Operand, b: Operand, signed: bool, reps: &mut Vec<String>) -> Operand {
        let w = self.width(&a).max(self.width(&b));
        let (a, b) = if signed {
            let flip = |rw: &mut Self, o: Operand, tag: &str, reps: &mut Vec<String>| {
                let e = rw.extend(&o, w, true);
                let top = rw.slice(&e, w - 1, w - 1);
                let inv = rw.not(base, tag, top, 1, reps);
                if w == 1 {
                    inv
                } else {
                    let rest = rw.slice(&e, w - 2, 0);
                    Operand::concat(vec![inv, rest])
                }
            };
            let fa = flip(self, a, "sa", reps);
            let fb = flip(self, b, "sb", reps);
            (fa, fb)
        } else {
            (a, b)
        };
        let nb = self.not(base, "nb", b, w, reps);
        let add_id = self.fresh(base, "cmp");
        let add = Operation::new(add_id.clone(), OpKind::Add, w, vec![a, nb]).with_carry_in(CarryIn::Constant(true));
        self.push(add, reps);
        let id = name.unwrap_or_else(|| self.fresh(base, "lt"));
        self.push(Operation::new(id, OpKind::Not, 1, vec![Operand::carry(add_id)]), reps)
    }

    fn lower(&mut self, op: &Operation) -> Result<(), KernelError> {
        let x = op.id.clone();
        let w = op.width;
        let signed = op.signedness.is_signed();
        let args: Vec<Operand> = op.operands.iter().map(|o| self.rewrite(o)).collect();
        let mut reps = Vec::new();
        let rule = match op.kind {
            OpKind::Sub => {
                let (a, b) = if signed {
                    (self.extend(&args[0], w, true), self.extend(&args[1], w, true))
                } else {
                    (args[0].clone(), args[1].clone())
                };
                let nb = self.not(&x, "nb", b, w, &mut reps);
                let add = Operation::new(x.clone(), OpKind::Add, w, vec![a, nb]).with_carry_in(CarryIn::Constant(true));
                self.push(add, &mut reps);
                Rule::Sub
            }
            OpKind::Lt => {
                let name = (w == 1).then(|| x.clone());
                let lt = self.less_than(&x, name, args[0].clone(), args[1].clone(), signed, &mut reps);
                if w > 1 {
                    self.subst.insert(x.clone(), Operand::concat(vec![Operand::zero(w - 1), lt]));
                }
                Rule::Compare
            }
            OpKind::Max | OpKind::Min => {
                let lt = self.less_than(&x, None, args[0].clone(), args[1].clone(), signed, &mut reps);
                let a = self.extend(&args[0], w, signed);
                let b = self.extend(&args[1], w, signed);
                let (t, f) = if op.kind == OpKind::Max { (b, a) } else { (a, b) };
                self.push(Operation::new(x.clone(), OpKind::Select, w, vec![lt, t, f]), &mut reps);
                Rule::MinMax
            }
            OpKind::Mult if signed => {
                self.signed_mult(&x, w, &args[0], &args[1], &mut reps)?;
                Rule::SignedMult
            }
            OpKind::Mult => {
                self.push(Operation::new(x.clone(), OpKind::MultCore, w, args), &mut reps);
                Rule::UnsignedMult
            }
            OpKind::Add => {
                let a = self.extend(&args[0], w, true);
                let b = self.extend(&args[1], w, true);
                let add = Operation::new(x.clone(), OpKind::Add, w, vec![a, b]).with_carry_in(op.carry_in.clone());
                self.push(add, &mut reps);
                Rule::SignedAdd
            }
            OpKind::Not => {
                let a = self.extend(&args[0], w, true);
                self.push(Operation::new(x.clone(), OpKind::Not, w, vec![a]), &mut reps);
                Rule::SignedGlue
            }
            OpKind::Select => {
                let a = self.extend(&args[1], w, true);
                let b = self.extend(&args[2], w, true);
                self.push(Operation::new(x.clone(), OpKind::Select, w, vec![args[0].clone(), a, b]), &mut reps);
                Rule::SignedGlue
            }
            OpKind::MultCore => {
                self.push(Operation::new(x.clone(), OpKind::MultCore, w, args), &mut reps);
                Rule::UnsignedMult
            }
        };
        self.trace.entries.push(TraceEntry { original: x, rule, replacements: reps });
        Ok(())
    }

    /// `a * b` for two's-complement `a` (m bits) and `b` (n bits).
    ///
    /// With `a = -a_s 2^(m-1) + A'` and `b = -b_s 2^(n-1) + B'`, the product
    /// is `P - b_s A' 2^(n-1) - a_s B' 2^(m-1) + a_s b_s 2^(m+n-2)` where
    /// `P = A' B'`. Each subtraction `x - y` is computed as `!(!x + y)`.
    fn signed_mult(&mut self, x: &str, r: u32, a: &Operand, b: &Operand, reps: &mut Vec<String>) -> Result<(), KernelError> {
        let (m, n) = (self.width(a), self.width(b));
        if m < 2 || n < 2 {
            return Err(KernelError::UnsupportedWidth { op: x.to_string(), m, n });
        }
        let a_low = self.slice(a, m - 2, 0);
        let b_low = self.slice(b, n - 2, 0);
        let a_s = self.slice(a, m - 1, m - 1);
        let b_s = self.slice(b, n - 1, n - 1);
        let core_id = self.fresh(x, "core");
        let p = self.push(Operation::new(core_id, OpKind::MultCore, m + n - 2, vec![a_low.clone(), b_low]), reps);
        let b_ext = Operand::concat(vec![b_s.clone(), b.clone()]);

        let product = if m >= n {
            // U = P[m+n-3:n-1] - b_s A'  (m bits)
            let p_hi = self.slice(&p, m + n - 3, n - 1);
            let np = self.not(x, "np", p_hi, m, reps);
            let sel_id = self.fresh(x, "sa");
            let sel = self.push(Operation::new(sel_id, OpKind::Select, m - 1, vec![b_s, a_low, Operand::zero(m - 1)]), reps);
            let s1 = self.fresh(x, "s1");
            let sum1 = self.push(Operation::new(s1, OpKind::Add, m, vec![np, sel]), reps);
            let u = self.not(x, "u", sum1, m, reps);

            // V = sext(U[m-1:m-n]) - a_s b  (n+1 bits)
            let u_top = self.slice(&u, m - 1, m - 1);
            let u_hi = self.slice(&u, m - 1, m - n);
            let nu = self.not(x, "nu", Operand::concat(vec![u_top, u_hi]), n + 1, reps);
            let sel_id = self.fresh(x, "sb");
            let sel = self.push(Operation::new(sel_id, OpKind::Select, n + 1, vec![a_s, b_ext, Operand::zero(n + 1)]), reps);
            let s2 = self.fresh(x, "s2");
            let sum2 = self.push(Operation::new(s2, OpKind::Add, n + 1, vec![nu, sel]), reps);
            let v = self.not(x, "v", sum2, n + 1, reps);

            let mut parts = vec![v];
            if m > n {
                parts.push(self.slice(&u, m - n - 1, 0));
            }
            parts.push(self.slice(&p, n - 2, 0));
            Operand::concat(parts)
        } else {
            // U = P[m+n-3:m-1] - a_s b  (n+1 bits)
            let p_hi = self.slice(&p, m + n - 3, m - 1);
            let np = self.not(x, "np", p_hi, n + 1, reps);
            let sel_id = self.fresh(x, "sb");
            let sel = self.push(Operation::new(sel_id, OpKind::Select, n + 1, vec![a_s, b_ext, Operand::zero(n + 1)]), reps);
            let s1 = self.fresh(x, "s1");
            let sum1 = self.push(Operation::new(s1, OpKind::Add, n + 1, vec![np, sel]), reps);
            let u = self.not(x, "u", sum1, n + 1, reps);

            // T = U[n:n-m] - b_s A' over m+1 bits: the low m bits come from an
            // m-bit add, the top bit is U[n] xor borrow.
            let u_mid = self.slice(&u, n - 1, n - m);
            let nu = self.not(x, "nu", u_mid, m, reps);
            let sel_id = self.fresh(x, "sa");
            let sel = self.push(Operation::new(sel_id, OpKind::Select, m - 1, vec![b_s, a_low, Operand::zero(m - 1)]), reps);
            let s2 = self.fresh(x, "s2");
            let sum2 = self.push(Operation::new(s2.clone(), OpKind::Add, m, vec![nu, sel]), reps);
            let t = self.not(x, "t", sum2, m, reps);
            let borrow = Operand::carry(s2);
            let nborrow = self.not(x, "nc", borrow.clone(), 1, reps);
            let u_sign = self.slice(&u, n, n);
            let top_id = self.fresh(x, "top");
            let top = self.push(Operation::new(top_id, OpKind::Select, 1, vec![u_sign, nborrow, borrow]), reps);

            Operand::concat(vec![top, t, self.slice(&u, n - m - 1, 0), self.slice(&p, m - 2, 0)])
        };
        let value = self.extend(&product, r, true);
        self.subst.insert(x.to_string(), value);
        Ok(())
    }

    fn copy(&mut self, op: &Operation) {
        let mut op = op.clone();
        op.operands = op.operands.iter().map(|o| self.rewrite(o)).collect();
        self.out.ops.push(op);
    }

    fn finish(mut self) -> (DataFlowGraph, LoweringTrace) {
        let outputs: Vec<Output> = self
            .src
            .outputs
            .iter()
            .map(|o| match &o.value {
                Some(v) => Output::expr(o.name.clone(), self.rewrite(v)),
                None => match self.subst.get(&o.name) {
                    Some(e) => Output::expr(o.name.clone(), e.clone()),
                    None => o.clone(),
                },
            })
            .collect();
        self.out.outputs = outputs;
        (self.out, self.trace)
    }
}

fn run(g: &DataFlowGraph, select: impl Fn(&Operation) -> bool) -> Result<(DataFlowGraph, LoweringTrace), KernelError> {
    let mut rw = Rewriter::new(g);
    for op in &g.ops {
        if select(op) {
            rw.lower(op)?;
        } else {
            rw.copy(op);
        }
    }
    Ok(rw.finish())
}

fn lower_one(
    g: &DataFlowGraph,
    id: &str,
    expected: &'static str,
    accepts: impl Fn(&Operation) -> bool,
) -> Result<(DataFlowGraph, LoweringTrace), KernelError> {
    let op = g.op(id).ok_or_else(|| KernelError::UnknownOp(id.to_string()))?;
    if !accepts(op) {
        return Err(KernelError::WrongKind { op: id.to_string(), expected, found: op.kind });
    }
    run(g, |o| o.id == id)
}

/// Replaces one signed MULT by an unsigned core and two correction adds.
pub fn lower_signed_mult(g: &DataFlowGraph, id: &str) -> Result<(DataFlowGraph, LoweringTrace), KernelError> {
    lower_one(g, id, "signed mult", |o| o.kind == OpKind::Mult && o.signedness.is_signed())
}

pub fn lower_sub(g: &DataFlowGraph, id: &str) -> Result<(DataFlowGraph, LoweringTrace), KernelError> {
    lower_one(g, id, "sub", |o| o.kind == OpKind::Sub)
}

pub fn lower_compare(g: &DataFlowGraph, id: &str) -> Result<(DataFlowGraph, LoweringTrace), KernelError> {
    lower_one(g, id, "lt", |o| o.kind == OpKind::Lt)
}

pub fn lower_minmax(g: &DataFlowGraph, id: &str) -> Result<(DataFlowGraph, LoweringTrace), KernelError> {
    lower_one(g, id, "max or min", |o| matches!(o.kind, OpKind::Max | OpKind::Min))
}

/// Lowers every non-kernel op. Each rule emits kernel ops only, so one pass
/// reaches the fixpoint.
pub fn extract_kernel(g: &DataFlowGraph) -> Result<(DataFlowGraph, LoweringTrace), KernelError> {
    if g.ops.iter().all(is_kernel_op) {
        return Ok((g.clone(), LoweringTrace::default()));
    }
    let (out, trace) = run(g, |o| !is_kernel_op(o))?;
    debug_assert!(out.ops.iter().all(is_kernel_op));
    Ok((out, trace))
}
