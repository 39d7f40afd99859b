//! Tokenizer and recursive-descent parser for STUR text, plus a printer
//! whose output parses back to the same program.

use std::fmt::Write as _;

use crate::affine::{rat, AffineExpr, Constraint, Modulus, Var};
use crate::error::{Error, Result};
use crate::polyhedra::fm::solve_for;

use super::ast::{Access, Program, RedundancyMap, Rule, Summand, UniqueSet};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i128),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Assign,
    Colon,
    Lt,
    Le,
    EqSign,
    Gt,
    Ge,
    Sep,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn continues(prev: Option<&Tok>) -> bool {
    matches!(
        prev,
        None | Some(
            Tok::Plus
                | Tok::Minus
                | Tok::Star
                | Tok::Slash
                | Tok::Percent
                | Tok::Assign
                | Tok::Colon
                | Tok::Comma
                | Tok::LParen
                | Tok::Lt
                | Tok::Le
                | Tok::EqSign
                | Tok::Gt
                | Tok::Ge
                | Tok::Sep
        )
    )
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out: Vec<Token> = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut depth = 0i32;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let push = |out: &mut Vec<Token>, tok: Tok| out.push(Token { tok, line: l0, col: c0 });
        if c == '\n' || c == ';' {
            if depth == 0 && !continues(out.last().map(|t| &t.tok)) {
                push(&mut out, Tok::Sep);
            }
            i += 1;
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            while i < chars.len() && chars[i] == '\'' {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            push(&mut out, Tok::Ident(s));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<i128>()
                .map_err(|_| syntax(l0, c0, format!("integer literal `{s}` too large")))?;
            col += i - start;
            push(&mut out, Tok::Int(v));
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            (':', Some('=')) => (Tok::Assign, 2),
            (':', _) => (Tok::Colon, 1),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('=', Some('=')) => (Tok::EqSign, 2),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('=', _) => (Tok::EqSign, 1),
            ('≤', _) => (Tok::Le, 1),
            ('≥', _) => (Tok::Ge, 1),
            ('(', _) => {
                depth += 1;
                (Tok::LParen, 1)
            }
            (')', _) => {
                depth -= 1;
                (Tok::RParen, 1)
            }
            (',', _) => (Tok::Comma, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('%', _) => (Tok::Percent, 1),
            _ => return Err(syntax(l0, c0, format!("unexpected character `{c}`"))),
        };
        push(&mut out, tok);
        i += len;
        col += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

#[derive(Clone, Debug)]
enum Factor {
    Access(Access),
    Cons(Vec<Constraint>),
    True,
    False,
}

type Term = Vec<Factor>;

enum Stmt {
    Shape(String, Vec<AffineExpr>),
    Unique(String, Option<Vec<Var>>, Vec<Term>),
    Redmap(String, Vec<Var>, Vec<Term>),
    Rule(Access, Vec<Term>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

enum Rel {
    Lt,
    Le,
    Eq,
    Gt,
    Ge,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        let (l, c) = self.here();
        syntax(l, c, msg)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => Err(self.err(format!("expected identifier, found {}", describe(&t)))),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(out);
        }
        loop {
            out.push(self.ident()?);
            match self.bump() {
                Tok::Comma => continue,
                Tok::RParen => break,
                t => {
                    self.pos -= 1;
                    return Err(self.err(format!("expected `,` or `)`, found {}", describe(&t))));
                }
            }
        }
        Ok(out)
    }

    fn skip_seps(&mut self) {
        while *self.peek() == Tok::Sep {
            self.bump();
        }
    }

    fn definer(&mut self) -> Result<()> {
        match self.peek() {
            Tok::Assign | Tok::EqSign | Tok::Colon => {
                self.bump();
                Ok(())
            }
            t => Err(self.err(format!("expected `:=`, found {}", describe(t)))),
        }
    }

    fn statement(&mut self) -> Result<(Stmt, usize, usize)> {
        let (line, col) = self.here();
        let name = self.ident()?;
        if name == "shape" {
            if let Tok::Ident(_) = self.peek() {
                let tensor = self.ident()?;
                self.expect(Tok::LParen, "`(`")?;
                let mut extents = vec![self.sum()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    extents.push(self.sum()?);
                }
                self.expect(Tok::RParen, "`)`")?;
                return Ok((Stmt::Shape(tensor, extents), line, col));
            }
        }
        if let Some(t) = name.strip_suffix("_U") {
            if !t.is_empty() {
                let iters = if *self.peek() == Tok::LParen {
                    Some(self.ident_list()?)
                } else {
                    None
                };
                self.definer()?;
                let terms = self.expression()?;
                return Ok((Stmt::Unique(t.to_string(), iters, terms), line, col));
            }
        }
        if let Some(t) = name.strip_suffix("_R") {
            if !t.is_empty() && *self.peek() == Tok::LParen {
                let iters = self.ident_list()?;
                self.definer()?;
                let terms = self.expression()?;
                return Ok((Stmt::Redmap(t.to_string(), iters, terms), line, col));
            }
        }
        if *self.peek() != Tok::LParen {
            return Err(self.err(format!("expected `(` after `{name}`")));
        }
        let indices = self.ident_list()?;
        match self.peek() {
            Tok::Assign | Tok::EqSign => {
                self.bump();
            }
            t => return Err(self.err(format!("expected `:=`, found {}", describe(t)))),
        }
        let terms = self.expression()?;
        Ok((
            Stmt::Rule(
                Access {
                    tensor: name,
                    indices,
                },
                terms,
            ),
            line,
            col,
        ))
    }

    fn expression(&mut self) -> Result<Vec<Term>> {
        let mut terms = vec![self.term()?];
        while *self.peek() == Tok::Plus {
            self.bump();
            terms.push(self.term()?);
        }
        Ok(terms)
    }

    fn term(&mut self) -> Result<Term> {
        let mut fs = vec![self.factor()?];
        while *self.peek() == Tok::Star {
            self.bump();
            fs.push(self.factor()?);
        }
        Ok(fs)
    }

    fn factor(&mut self) -> Result<Factor> {
        match self.peek().clone() {
            Tok::Ident(name) if *self.peek_at(1) == Tok::LParen => {
                self.bump();
                let indices = self.ident_list()?;
                Ok(Factor::Access(Access {
                    tensor: name,
                    indices,
                }))
            }
            Tok::Int(1) => {
                self.bump();
                Ok(Factor::True)
            }
            Tok::Int(0) => {
                self.bump();
                Ok(Factor::False)
            }
            Tok::LParen => {
                self.bump();
                let cons = self.comparison()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Factor::Cons(cons))
            }
            t => Err(self.err(format!(
                "expected tensor access or parenthesized comparison, found {}",
                describe(&t)
            ))),
        }
    }

    fn rel(&mut self) -> Option<Rel> {
        let r = match self.peek() {
            Tok::Lt => Rel::Lt,
            Tok::Le => Rel::Le,
            Tok::EqSign => Rel::Eq,
            Tok::Gt => Rel::Gt,
            Tok::Ge => Rel::Ge,
            _ => return None,
        };
        self.bump();
        Some(r)
    }

    fn comparison(&mut self) -> Result<Vec<Constraint>> {
        let first = self.sum()?;
        if *self.peek() == Tok::Percent {
            self.bump();
            let modulus = match self.bump() {
                Tok::Int(m) if m > 0 && m <= i64::MAX as i128 => Modulus::Lit(m as i64),
                Tok::Ident(s) => Modulus::Sym(s),
                t => {
                    self.pos -= 1;
                    return Err(self.err(format!(
                        "expected positive modulus, found {}",
                        describe(&t)
                    )));
                }
            };
            self.expect(Tok::EqSign, "`=` after modulus")?;
            let residue = self.sum()?;
            return Ok(vec![Constraint::Mod {
                expr: first,
                modulus,
                residue,
            }]);
        }
        let mut out = Vec::new();
        let mut lhs = first;
        while let Some(r) = self.rel() {
            let rhs = self.sum()?;
            out.push(match r {
                Rel::Lt => Constraint::lt(lhs.clone(), rhs.clone()),
                Rel::Le => Constraint::le(lhs.clone(), rhs.clone()),
                Rel::Eq => Constraint::eq(lhs.clone(), rhs.clone()),
                Rel::Gt => Constraint::lt(rhs.clone(), lhs.clone()),
                Rel::Ge => Constraint::le(rhs.clone(), lhs.clone()),
            });
            lhs = rhs;
        }
        if out.is_empty() {
            return Err(self.err(format!("expected comparison operator, found {}", describe(self.peek()))));
        }
        Ok(out)
    }

    fn sum(&mut self) -> Result<AffineExpr> {
        let mut acc = if *self.peek() == Tok::Minus {
            self.bump();
            -self.product()?
        } else {
            self.product()?
        };
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    acc = acc + self.product()?;
                }
                Tok::Minus => {
                    self.bump();
                    acc = acc - self.product()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<AffineExpr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    acc = multiply(&acc, &rhs)?;
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    if !rhs.is_constant() || rhs.constant_term() == rat(0) {
                        return Err(Error::NonAffine(format!("{}/{}", paren(&acc), paren(&rhs))));
                    }
                    acc = acc.scale(rhs.constant_term().recip());
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<AffineExpr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(-self.unary()?);
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<AffineExpr> {
        match self.bump() {
            Tok::Int(v) => Ok(AffineExpr::constant(v)),
            Tok::Ident(s) => {
                if *self.peek() == Tok::LParen {
                    return Err(Error::NonAffine(format!("{s}(...)")));
                }
                Ok(AffineExpr::var(&s))
            }
            Tok::LParen => {
                let e = self.sum()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            t => {
                self.pos -= 1;
                Err(self.err(format!("expected affine expression, found {}", describe(&t))))
            }
        }
    }
}

fn paren(e: &AffineExpr) -> String {
    if e.terms().count() + usize::from(e.constant_term() != rat(0)) > 1 {
        format!("({e})")
    } else {
        e.to_string()
    }
}

fn multiply(a: &AffineExpr, b: &AffineExpr) -> Result<AffineExpr> {
    if a.is_constant() {
        Ok(b.scale(a.constant_term()))
    } else if b.is_constant() {
        Ok(a.scale(b.constant_term()))
    } else {
        Err(Error::NonAffine(format!("{}*{}", paren(a), paren(b))))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sep => "end of statement".into(),
        Tok::Eof => "end of input".into(),
        other => format!("`{}`", match other {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Assign => ":=",
            Tok::Colon => ":",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::EqSign => "=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            _ => "?",
        }),
    }
}

/// Split a term into accesses and a flat constraint list; `None` if the
/// term contains a literal `0`.
fn split_term(term: &Term) -> Option<(Vec<Access>, Vec<Constraint>)> {
    let mut accs = Vec::new();
    let mut cons = Vec::new();
    for f in term {
        match f {
            Factor::Access(a) => accs.push(a.clone()),
            Factor::Cons(c) => cons.extend(c.iter().cloned()),
            Factor::True => {}
            Factor::False => return None,
        }
    }
    Some((accs, cons))
}

fn check_access(a: &Access, line: usize, col: usize) -> Result<()> {
    for (k, x) in a.indices.iter().enumerate() {
        if a.indices[..k].contains(x) {
            return Err(syntax(
                line,
                col,
                format!("repeated index `{x}` in access to `{}`; use an equality constraint", a.tensor),
            ));
        }
    }
    Ok(())
}

/// Parse a product of comparisons, e.g. `(0 <= i < n) * (i = j)`.
pub fn parse_constraints(text: &str) -> Result<Vec<Constraint>> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    p.skip_seps();
    if *p.peek() == Tok::Eof {
        return Ok(vec![]);
    }
    let term = p.term()?;
    p.skip_seps();
    if *p.peek() != Tok::Eof {
        return Err(p.err(format!("unexpected {}", describe(p.peek()))));
    }
    let mut out = Vec::new();
    for f in term {
        match f {
            Factor::Cons(c) => out.extend(c),
            Factor::True => {}
            Factor::False => out.push(Constraint::falsum()),
            Factor::Access(a) => {
                return Err(Error::Invalid(format!(
                    "tensor access `{}` in a constraint list",
                    a.tensor
                )))
            }
        }
    }
    Ok(out)
}

pub fn parse_program(text: &str) -> Result<Program> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut stmts = Vec::new();
    loop {
        p.skip_seps();
        if *p.peek() == Tok::Eof {
            break;
        }
        stmts.push(p.statement()?);
        match p.peek() {
            Tok::Sep | Tok::Eof => {}
            t => return Err(p.err(format!("expected end of statement, found {}", describe(t)))),
        }
    }

    let mut prog = Program::default();
    let mut pending_unique = Vec::new();
    for (stmt, line, col) in stmts {
        match stmt {
            Stmt::Shape(t, ext) => {
                if prog.shapes.insert(t.clone(), ext).is_some() {
                    return Err(syntax(line, col, format!("duplicate shape for `{t}`")));
                }
            }
            Stmt::Rule(head, terms) => {
                check_access(&head, line, col)?;
                let rule = build_rule(head, &terms, line, col)?;
                match prog.rules.iter_mut().find(|r| r.name == rule.name) {
                    Some(r) => r.summands.extend(rule.summands),
                    None => prog.rules.push(rule),
                }
            }
            Stmt::Unique(t, iters, terms) => pending_unique.push((t, iters, terms, line, col)),
            Stmt::Redmap(t, iters, terms) => {
                if let Some(r) = build_redmap(&t, &iters, &terms, line, col)? {
                    if prog.redundancy_maps.insert(t.clone(), r).is_some() {
                        return Err(syntax(line, col, format!("duplicate redundancy map for `{t}`")));
                    }
                }
            }
        }
    }
    for (t, iters, terms, line, col) in pending_unique {
        let iters = match iters {
            Some(i) => i,
            None => first_access(&prog, &t)
                .ok_or_else(|| Error::UnknownIdentifier(t.clone()))?,
        };
        let mut pieces = Vec::new();
        for term in &terms {
            let Some((accs, cons)) = split_term(term) else {
                continue;
            };
            if let Some(a) = accs.first() {
                return Err(syntax(
                    line,
                    col,
                    format!("unique set of `{t}` may not contain the access `{}`", a.tensor),
                ));
            }
            pieces.push(cons);
        }
        if pieces.is_empty() {
            pieces.push(vec![Constraint::falsum()]);
        }
        if prog
            .unique_sets
            .insert(t.clone(), UniqueSet { iters, pieces })
            .is_some()
        {
            return Err(syntax(line, col, format!("duplicate unique set for `{t}`")));
        }
    }
    Ok(prog)
}

fn first_access(prog: &Program, tensor: &str) -> Option<Vec<Var>> {
    prog.rules
        .iter()
        .flat_map(|r| r.summands.iter())
        .flat_map(|s| s.accesses())
        .find(|a| a.tensor == tensor)
        .map(|a| a.indices.clone())
}

fn build_rule(head: Access, terms: &[Term], line: usize, col: usize) -> Result<Rule> {
    let mut order: Vec<Var> = Vec::new();
    let mut note = |v: &Var| {
        if !order.contains(v) {
            order.push(v.clone());
        }
    };
    head.indices.iter().for_each(&mut note);
    for term in terms {
        for f in term {
            if let Factor::Access(a) = f {
                a.indices.iter().for_each(&mut note);
            }
        }
    }
    let mut summands = Vec::new();
    for term in terms {
        let Some((inputs, constraints)) = split_term(term) else {
            continue;
        };
        for a in &inputs {
            check_access(a, line, col)?;
        }
        let iterators: Vec<Var> = order
            .iter()
            .filter(|v| {
                head.indices.contains(v) || inputs.iter().any(|a| a.indices.contains(v))
            })
            .cloned()
            .collect();
        for x in &head.indices {
            let used = inputs.iter().any(|a| a.indices.contains(x))
                || constraints.iter().any(|c| c.mentions(x));
            if !used {
                return Err(Error::UnknownIdentifier(x.clone()));
            }
        }
        summands.push(Summand {
            output: head.clone(),
            inputs,
            constraints,
            iterators,
            empty: false,
        });
    }
    Ok(Rule {
        name: head.tensor.clone(),
        summands,
    })
}

fn build_redmap(
    tensor: &str,
    all: &[Var],
    terms: &[Term],
    line: usize,
    col: usize,
) -> Result<Option<RedundancyMap>> {
    if terms.len() != 1 {
        return Err(syntax(line, col, "a redundancy map must be a single product"));
    }
    let Some((accs, cons)) = split_term(&terms[0]) else {
        return Ok(None);
    };
    if let Some(a) = accs.first() {
        return Err(syntax(
            line,
            col,
            format!("redundancy map of `{tensor}` may not contain the access `{}`", a.tensor),
        ));
    }
    let iters: Vec<Var> = all.iter().filter(|v| !v.ends_with('\'')).cloned().collect();
    let primed: Vec<Var> = all.iter().filter(|v| v.ends_with('\'')).cloned().collect();
    if iters.len() != primed.len() || all[..iters.len()] != iters[..] {
        return Err(syntax(
            line,
            col,
            format!("redundancy map of `{tensor}` needs (x1..xn, x1'..xn')"),
        ));
    }
    let mut domain = Vec::new();
    let mut image: Vec<Option<AffineExpr>> = vec![None; primed.len()];
    for c in cons {
        let mentioned: Vec<usize> = (0..primed.len()).filter(|&k| c.mentions(&primed[k])).collect();
        match (&c, mentioned.as_slice()) {
            (_, []) => domain.push(c),
            (Constraint::Eq(e), [k]) if image[*k].is_none() => {
                image[*k] = Some(solve_for(e, &primed[*k]));
            }
            _ => {
                return Err(Error::Invalid(format!(
                    "redundancy map of `{tensor}`: unsupported constraint `{c}`"
                )))
            }
        }
    }
    let image = image
        .into_iter()
        .zip(&primed)
        .map(|(e, v)| e.ok_or_else(|| Error::UnknownIdentifier(v.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(RedundancyMap {
        iters,
        primed,
        domain,
        image,
    }))
}

fn constraint_text(c: &Constraint) -> String {
    match c {
        Constraint::Ge(e) => format!("({e} >= 0)"),
        Constraint::Eq(e) => format!("({e} = 0)"),
        Constraint::Mod {
            expr,
            modulus,
            residue,
        } => format!("(({expr}) % {modulus} = {residue})"),
    }
}

fn product_text(accs: &[Access], cons: &[Constraint]) -> String {
    let mut parts: Vec<String> = accs
        .iter()
        .map(|a| format!("{}({})", a.tensor, a.indices.join(", ")))
        .collect();
    parts.extend(cons.iter().map(constraint_text));
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join(" * ")
    }
}

/// Canonical STUR text for `p`.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (t, ext) in &p.shapes {
        let e: Vec<String> = ext.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(out, "shape {t}({})", e.join(", "));
    }
    for (t, u) in &p.unique_sets {
        let pieces: Vec<String> = u.pieces.iter().map(|c| product_text(&[], c)).collect();
        let _ = writeln!(out, "{t}_U({}) := {}", u.iters.join(", "), pieces.join(" + "));
    }
    for (t, r) in &p.redundancy_maps {
        let mut cons = r.domain.clone();
        for (v, e) in r.primed.iter().zip(&r.image) {
            cons.push(Constraint::eq(AffineExpr::var(v), e.clone()));
        }
        let mut all = r.iters.clone();
        all.extend(r.primed.iter().cloned());
        let _ = writeln!(out, "{t}_R({}) := {}", all.join(", "), product_text(&[], &cons));
    }
    for r in &p.rules {
        for s in &r.summands {
            let _ = writeln!(
                out,
                "{}({}) := {}",
                s.output.tensor,
                s.output.indices.join(", "),
                product_text(&s.inputs, &s.constraints)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ge(terms: &[(&str, i128)], c: i128) -> Constraint {
        Constraint::Ge(AffineExpr::from_terms(terms.iter().copied(), c))
    }

    #[test]
    fn spmv_diagonal_program() {
        let p = parse_program("A(i)=B(i,j)*C(j); B_U: (0<=i<n_i)*(i=j)").unwrap();
        assert_eq!(p.rules.len(), 1);
        let s = &p.rules[0].summands[0];
        assert_eq!(s.iterators, vec!["i", "j"]);
        let u = &p.unique_sets["B"];
        assert_eq!(u.iters, vec!["i", "j"]);
        assert_eq!(
            u.pieces[0],
            vec![
                ge(&[("i", 1)], 0),
                ge(&[("n_i", 1), ("i", -1)], -1),
                Constraint::Eq(AffineExpr::from_terms([("i", 1), ("j", -1)], 0)),
            ]
        );
    }

    #[test]
    fn empty_source() {
        let p = parse_program("").unwrap();
        assert!(p.rules.is_empty());
        assert!(p.unique_sets.is_empty());
    }

    #[test]
    fn symbolic_mod_constraint() {
        let p = parse_program("B_U(i, j) := (0<=i<N)*(0<=j<N)*((j-i)%N=s)").unwrap();
        let piece = &p.unique_sets["B"].pieces[0];
        assert_eq!(
            piece[4],
            Constraint::Mod {
                expr: AffineExpr::from_terms([("j", 1), ("i", -1)], 0),
                modulus: Modulus::Sym("N".into()),
                residue: AffineExpr::var("s"),
            }
        );
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_program("A(i) := B(i, j) *\n  (0 <= i < )").unwrap_err();
        match err {
            Error::Syntax { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn non_affine_rejected_with_term() {
        let err = parse_program("A(i) := B(i, j) * (i*j < n)").unwrap_err();
        assert_eq!(err, Error::NonAffine("i*j".into()));
    }

    #[test]
    fn unknown_tensor_in_shorthand() {
        let err = parse_program("A(i) := B(i)\nZ_U: (0 <= i < n)").unwrap_err();
        assert_eq!(err, Error::UnknownIdentifier("Z".into()));
    }

    #[test]
    fn redundancy_map_parsed() {
        let p = parse_program(
            "V_R(x, y, x', y') := (0 <= x < n) * (0 <= y < n) * (x > y) * (x' = y) * (y' = x)",
        )
        .unwrap();
        let r = &p.redundancy_maps["V"];
        assert_eq!(r.image, vec![AffineExpr::var("y"), AffineExpr::var("x")]);
        assert_eq!(r.domain.len(), 5);
    }

    #[test]
    fn undefined_primed_iterator() {
        let err = parse_program("V_R(x, y, x', y') := (0 <= x < n) * (x' = y)").unwrap_err();
        assert_eq!(err, Error::UnknownIdentifier("y'".into()));
    }

    #[test]
    fn chained_equalities() {
        let c = parse_constraints("(i = k = l)").unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn iterator_order_is_first_appearance() {
        let p = parse_program("A(i, j, k) := C(k, l) * B(i, j, l)").unwrap();
        assert_eq!(p.rules[0].summands[0].iterators, vec!["i", "j", "k", "l"]);
        let p = parse_program("A(i) := C(j) * B(i, j)").unwrap();
        assert_eq!(p.rules[0].summands[0].iterators, vec!["i", "j"]);
    }

    #[test]
    fn multi_line_statement_continues_after_operator() {
        let p = parse_program("A(i) := B(i, j) *\n  C(j) *\n  (0 <= j < n)\n").unwrap();
        assert_eq!(p.rules[0].summands[0].inputs.len(), 2);
    }

    #[test]
    fn round_trip_fig3() {
        let text = "A(i, j, k) := B(i, j, l) * C(k, l)\n\
                    C_U(k, l) := (0 <= k) * (k < P) * (0 <= l) * (l < Q)\n\
                    B_U(i, j, l) := (i <= j) * (0 <= i) * (i < M) * (0 <= j) * (j < N) * (0 <= l) * (l < Q)\n\
                    shape A(M, N, P)";
        let p = parse_program(text).unwrap();
        let q = parse_program(&print_program(&p)).unwrap();
        assert_eq!(p, q);
    }
}
