// SPDX-License-Identifier: Apache-2.0

//! Textual front end and back end for designs.
//!
//! ```text
//! design   := "design" ID ";" decl* ;
//! decl     := input | opdef | output
//! input    := "input" ID ":" type ";"
//! output   := "output" ID ["=" operand] ";"
//! opdef    := ID ":" kind type [carry] "=" expr ";"
//! kind     := "add" | "sub" | "mult" | "multcore" | "lt" | "max" | "min" | "not" | "select"
//! type     := ("u"|"s") INT
//! carry    := "carry" "(" (ID | "0" | "1") ")"
//! expr     := operand (SEP operand)*        SEP is one of + - * < , ? :
//! operand  := term | "{" term ("," term)* "}"
//! term     := (ID | "const" "(" BITS ")" | "carry" "(" ID ")") ["[" INT ":" INT "]"]
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use crate::dfg::{
    validate, CarryIn, ConstBits, DataFlowGraph, Input, OpKind, Operand, Operation, Output,
    Signedness, Source,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub line: u32,
    pub column: u32,
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub span: SourceSpan,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for Diagnostic {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(String),
    Punct(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(s) => write!(f, "`{s}`"),
            Tok::Punct(c) => write!(f, "`{c}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

const PUNCT: &str = ";:=[](){},+-*<?";
const SEPARATORS: &str = "+-*<,?:";
const RESERVED: [&str; 5] = ["design", "input", "output", "const", "carry"];

fn lex(text: &str) -> Result<Vec<(Tok, SourceSpan)>, Diagnostic> {
    let mut toks = Vec::new();
    let (mut line, mut col) = (1u32, 1u32);
    let mut chars = text.char_indices().peekable();
    while let Some(&(start, ch)) = chars.peek() {
        let span_at = |end: usize| SourceSpan { line, column: col, start, end };
        if ch == '\n' {
            chars.next();
            line += 1;
            col = 1;
            continue;
        }
        if ch.is_whitespace() {
            chars.next();
            col += 1;
            continue;
        }
        if ch == '/' && text[start..].starts_with("//") {
            while let Some(&(_, c)) = chars.peek() {
                if c == '\n' {
                    break;
                }
                chars.next();
                col += 1;
            }
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    end = i + c.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let span = span_at(end);
            col += (end - start) as u32;
            toks.push((Tok::Ident(text[start..end].to_string()), span));
            continue;
        }
        if ch.is_ascii_digit() {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if c.is_ascii_digit() {
                    end = i + 1;
                    chars.next();
                } else {
                    break;
                }
            }
            let span = span_at(end);
            col += (end - start) as u32;
            toks.push((Tok::Int(text[start..end].to_string()), span));
            continue;
        }
        if PUNCT.contains(ch) {
            let span = span_at(start + 1);
            chars.next();
            col += 1;
            toks.push((Tok::Punct(ch), span));
            continue;
        }
        return Err(Diagnostic {
            span: span_at(start + ch.len_utf8()),
            message: format!("unexpected character `{ch}`"),
        });
    }
    let end = text.len();
    toks.push((Tok::Eof, SourceSpan { line, column: col, start: end, end }));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, SourceSpan) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        Err(Diagnostic { span: self.span(), message: message.into() })
    }

    fn expect_punct(&mut self, c: char) -> PResult<()> {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{c}`, found {}", self.peek()))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            other => self.error(format!("expected identifier, found {other}")),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            other => self.error(format!("expected `{kw}`, found {other}")),
        }
    }

    fn int(&mut self) -> PResult<u32> {
        match self.peek().clone() {
            Tok::Int(s) => match s.parse() {
                Ok(v) => {
                    self.bump();
                    Ok(v)
                }
                Err(_) => self.error(format!("integer `{s}` out of range")),
            },
            other => self.error(format!("expected integer, found {other}")),
        }
    }

    fn ty(&mut self) -> PResult<(Signedness, u32)> {
        let text = match self.peek().clone() {
            Tok::Ident(s) => s,
            other => return self.error(format!("expected type like `u16`, found {other}")),
        };
        let signedness = match text.chars().next() {
            Some('u') => Signedness::Unsigned,
            Some('s') => Signedness::Signed,
            _ => return self.error(format!("expected type like `u16`, found `{text}`")),
        };
        match text[1..].parse::<u32>() {
            Ok(w) if !text[1..].is_empty() && text[1..].chars().all(|c| c.is_ascii_digit()) => {
                if w == 0 {
                    return self.error("width must be at least 1");
                }
                self.bump();
                Ok((signedness, w))
            }
            _ => self.error(format!("expected type like `u16`, found `{text}`")),
        }
    }

    fn slice(&mut self) -> PResult<Option<(u32, u32)>> {
        if !self.eat_punct('[') {
            return Ok(None);
        }
        let hi = self.int()?;
        self.expect_punct(':')?;
        let lo = self.int()?;
        self.expect_punct(']')?;
        Ok(Some((hi, lo)))
    }

    fn term(&mut self) -> PResult<Operand> {
        let source = match self.peek().clone() {
            Tok::Ident(s) if s == "const" => {
                self.bump();
                self.expect_punct('(')?;
                let bits = match self.peek().clone() {
                    Tok::Int(b) => b,
                    other => return self.error(format!("expected constant bits, found {other}")),
                };
                let Some(bits) = ConstBits::parse(&bits) else {
                    return self.error(format!("constant `{bits}` must be binary"));
                };
                self.bump();
                self.expect_punct(')')?;
                Source::Const(bits)
            }
            Tok::Ident(s) if s == "carry" => {
                self.bump();
                self.expect_punct('(')?;
                let id = self.ident()?;
                self.expect_punct(')')?;
                Source::Carry(id)
            }
            // inputs and results are told apart once every declaration is known
            Tok::Ident(_) => Source::Result(self.ident()?),
            other => return self.error(format!("expected operand, found {other}")),
        };
        let slice = self.slice()?;
        Ok(Operand { source, slice })
    }

    fn operand(&mut self) -> PResult<Operand> {
        if self.eat_punct('{') {
            let mut parts = vec![self.term()?];
            while self.eat_punct(',') {
                parts.push(self.term()?);
            }
            self.expect_punct('}')?;
            return Ok(Operand { source: Source::Concat(parts), slice: None });
        }
        self.term()
    }

    fn carry(&mut self) -> PResult<CarryIn> {
        match self.peek() {
            Tok::Ident(s) if s == "carry" => {}
            _ => return Ok(CarryIn::None),
        }
        self.bump();
        self.expect_punct('(')?;
        let c = match self.peek().clone() {
            Tok::Int(s) if s == "0" => CarryIn::Constant(false),
            Tok::Int(s) if s == "1" => CarryIn::Constant(true),
            Tok::Ident(_) => {
                let id = self.ident()?;
                self.expect_punct(')')?;
                return Ok(CarryIn::CarryOf(id));
            }
            other => return self.error(format!("expected carry source, found {other}")),
        };
        self.bump();
        self.expect_punct(')')?;
        Ok(c)
    }

    fn expr(&mut self) -> PResult<Vec<Operand>> {
        let mut operands = vec![self.operand()?];
        loop {
            match self.peek() {
                Tok::Punct(c) if SEPARATORS.contains(*c) => {
                    self.bump();
                    operands.push(self.operand()?);
                }
                _ => return Ok(operands),
            }
        }
    }
}

/// Parses a design. On success the graph has passed [`validate`].
pub fn parse(text: &str) -> Result<DataFlowGraph, Vec<Diagnostic>> {
    let toks = lex(text).map_err(|d| vec![d])?;
    let mut p = Parser { toks, pos: 0 };
    let mut spans: HashMap<String, SourceSpan> = HashMap::new();
    let g = parse_design(&mut p, &mut spans).map_err(|d| vec![d])?;
    if let Err(errs) = validate(&g) {
        return Err(errs
            .into_iter()
            .map(|e| Diagnostic {
                span: spans.get(e.subject()).copied().unwrap_or_default(),
                message: e.to_string(),
            })
            .collect());
    }
    Ok(g)
}

fn parse_design(p: &mut Parser, spans: &mut HashMap<String, SourceSpan>) -> PResult<DataFlowGraph> {
    if *p.peek() == Tok::Eof {
        return p.error("empty design");
    }
    p.keyword("design")?;
    let name = p.ident()?;
    p.expect_punct(';')?;
    let mut g = DataFlowGraph::new(name);
    loop {
        let span = p.span();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(s) if s == "input" => {
                p.bump();
                let name = p.ident()?;
                p.expect_punct(':')?;
                let (signedness, width) = p.ty()?;
                p.expect_punct(';')?;
                spans.entry(name.clone()).or_insert(span);
                g.inputs.push(Input { name, width, signedness });
            }
            Tok::Ident(s) if s == "output" => {
                p.bump();
                let name = p.ident()?;
                let value = if p.eat_punct('=') { Some(p.operand()?) } else { None };
                p.expect_punct(';')?;
                spans.entry(name.clone()).or_insert(span);
                g.outputs.push(Output { name, value });
            }
            Tok::Ident(_) => {
                let id = p.ident()?;
                p.expect_punct(':')?;
                let kind = match p.peek().clone() {
                    Tok::Ident(k) => match OpKind::from_keyword(&k) {
                        Some(kind) => {
                            p.bump();
                            kind
                        }
                        None => return p.error(format!("unknown operation kind `{k}`")),
                    },
                    other => return p.error(format!("expected operation kind, found {other}")),
                };
                let (signedness, width) = p.ty()?;
                let carry_in = p.carry()?;
                p.expect_punct('=')?;
                let operands = p.expr()?;
                p.expect_punct(';')?;
                spans.entry(id.clone()).or_insert(span);
                g.ops.push(Operation { id, kind, width, signedness, operands, carry_in });
            }
            other => return p.error(format!("expected declaration, found {other}")),
        }
    }
    let inputs: HashSet<String> = g.inputs.iter().map(|i| i.name.clone()).collect();
    let fix = |o: &mut Operand| {
        if let Source::Result(n) = &o.source {
            if inputs.contains(n) {
                o.source = Source::Input(n.clone());
            }
        }
    };
    let mut fix = fix;
    for op in &mut g.ops {
        for operand in &mut op.operands {
            operand.visit_leaves_mut(&mut fix);
        }
    }
    for out in &mut g.outputs {
        if let Some(v) = &mut out.value {
            v.visit_leaves_mut(&mut fix);
        }
    }
    Ok(g)
}

fn write_term(out: &mut String, operand: &Operand) {
    match &operand.source {
        Source::Input(n) | Source::Result(n) => out.push_str(n),
        Source::Carry(n) => {
            let _ = write!(out, "carry({n})");
        }
        Source::Const(c) => {
            let _ = write!(out, "const({c})");
        }
        Source::Concat(parts) => {
            out.push('{');
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_term(out, p);
            }
            out.push('}');
        }
    }
    if let Some((hi, lo)) = operand.slice {
        let _ = write!(out, "[{hi}:{lo}]");
    }
}

pub fn operand_text(operand: &Operand) -> String {
    let mut s = String::new();
    write_term(&mut s, operand);
    s
}

/// Renders a design in the DSL. `parse(&emit(g))` reproduces `g`.
pub fn emit(g: &DataFlowGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "design {};", g.name);
    for i in &g.inputs {
        let _ = writeln!(out, "input {}: {}{};", i.name, i.signedness.prefix(), i.width);
    }
    for op in &g.ops {
        let _ = write!(out, "{}: {} {}{}", op.id, op.kind, op.signedness.prefix(), op.width);
        match &op.carry_in {
            CarryIn::None => {}
            CarryIn::Constant(b) => {
                let _ = write!(out, " carry({})", u8::from(*b));
            }
            CarryIn::CarryOf(c) => {
                let _ = write!(out, " carry({c})");
            }
        }
        out.push_str(" = ");
        let seps: &[&str] = match op.kind {
            OpKind::Add => &[" + "],
            OpKind::Sub => &[" - "],
            OpKind::Mult | OpKind::MultCore => &[" * "],
            OpKind::Lt => &[" < "],
            OpKind::Max | OpKind::Min => &[", "],
            OpKind::Not => &[],
            OpKind::Select => &[" ? ", " : "],
        };
        for (i, operand) in op.operands.iter().enumerate() {
            if i > 0 {
                out.push_str(seps.get(i - 1).or(seps.last()).copied().unwrap_or(", "));
            }
            write_term(&mut out, operand);
        }
        out.push_str(";\n");
    }
    for o in &g.outputs {
        match &o.value {
            None => {
                let _ = writeln!(out, "output {};", o.name);
            }
            Some(v) => {
                let _ = writeln!(out, "output {} = {};", o.name, operand_text(v));
            }
        }
    }
    out
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: inputs and outputs as boxes, one ellipse per op, one
/// edge per operand reference labelled with its bit range.
pub fn emit_dot(g: &DataFlowGraph) -> String {
    let names = g.name_table();
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(&g.name));
    let _ = writeln!(out, "  rankdir=TB;");
    for i in &g.inputs {
        let _ = writeln!(
            out,
            "  \"{}\" [shape=box, label=\"{}: {}{}\"];",
            dot_escape(&i.name),
            dot_escape(&i.name),
            i.signedness.prefix(),
            i.width
        );
    }
    for op in &g.ops {
        let _ = writeln!(
            out,
            "  \"{}\" [shape=ellipse, label=\"{}\\n{} {}{}\"];",
            dot_escape(&op.id),
            dot_escape(&op.id),
            op.kind,
            op.signedness.prefix(),
            op.width
        );
    }
    for o in &g.outputs {
        let _ = writeln!(out, "  \"out:{}\" [shape=box, style=bold, label=\"{}\"];", dot_escape(&o.name), dot_escape(&o.name));
    }
    let edge = |out: &mut String, from: &str, to: &str, label: String, extra: &str| {
        let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"{}];", dot_escape(from), dot_escape(to), label, extra);
    };
    fn leaves(o: &Operand, acc: &mut Vec<Operand>) {
        match &o.source {
            Source::Concat(parts) => parts.iter().for_each(|p| leaves(p, acc)),
            _ => acc.push(o.clone()),
        }
    }
    let emit_operand = |out: &mut String, operand: &Operand, to: &str| {
        let mut acc = Vec::new();
        leaves(operand, &mut acc);
        for leaf in acc {
            let range = match leaf.slice {
                Some((hi, lo)) => format!("[{hi}:{lo}]"),
                None => {
                    let w = names.operand_width(g, &leaf).unwrap_or(1);
                    format!("[{}:0]", w - 1)
                }
            };
            match &leaf.source {
                Source::Input(n) | Source::Result(n) => edge(out, n, to, range, ""),
                Source::Carry(n) => edge(out, n, to, "carry".into(), ", style=dashed"),
                _ => {}
            }
        }
    };
    for op in &g.ops {
        for operand in &op.operands {
            emit_operand(&mut out, operand, &op.id);
        }
        if let CarryIn::CarryOf(c) = &op.carry_in {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"cin\", style=dashed];",
                dot_escape(c),
                dot_escape(&op.id)
            );
        }
    }
    for o in &g.outputs {
        let operand = g.output_operand(o);
        emit_operand(&mut out, &operand, &format!("out:{}", o.name));
    }
    out.push_str("}\n");
    out
}
