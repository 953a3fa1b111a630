//! Concrete syntax for source programs.
//!
//! ```text
//! program := def* "main" "{" mexpr "}"
//! def     := ("@co"|"@cl") "this" "." IDENT "=" expr ";"
//! ```
//!
//! Application is juxtaposition (left-associative); the binary operators
//! `+ == < &&` are non-associative and do not chain (parenthesize);
//! `::` is right-associative and binds looser than the operators; tuples
//! `(a, b, ..)` are right-nested pairs ending in unit. Statement forms:
//! `let p = m; m`, `m; m`, `assert(m); m`, `this.i := m`, and
//! `if let p = m then m else m` (the else branch extends maximally).
//! `await(pred) { body }` is the remote client expression. Lambda bodies
//! bind tightly: `fun x -> x + 1` stops before `;` — parenthesize statement
//! bodies. Comments run from `--` to end of line.
//!
//! `who`, `state`, `clfn`, `cofn`, `sender` are reserved (compiler-owned),
//! as are `_disp` and the `tmp<N>` family of generated names. Parsing
//! desugars to core terms and validates the source subset, so an accepted
//! program never mentions binds, trampolines, Done/More, or synthetics.

use std::fmt;

use num_bigint::BigUint;

use crate::ast::{desugar, Const, Definition, Ident, Location, Nat256, Program, Synth, Term};
use crate::validate::{validate_subset, Subset};

/// A parse or validation diagnostic. Lexical and syntactic errors carry a
/// position; subset violations carry an AST path in the message instead.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}:{}: {}", self.line, self.col, self.message)
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Nat(BigUint),
    Ident(String),
    KwMain,
    KwLet,
    KwFun,
    KwAssert,
    KwIf,
    KwThen,
    KwElse,
    KwTrue,
    KwFalse,
    KwUnit,
    KwAwait,
    KwThis,
    KwTrmp,
    KwTry,
    KwDone,
    KwMore,
    AtCo,
    AtCl,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Dot,
    Eq,
    ColonEq,
    Arrow,
    Cons,
    OpAdd,
    OpEq,
    OpLt,
    OpAnd,
    OpBind,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Nat(n) => format!("number {n}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::KwMain => "`main`".into(),
            Tok::KwLet => "`let`".into(),
            Tok::KwFun => "`fun`".into(),
            Tok::KwAssert => "`assert`".into(),
            Tok::KwIf => "`if`".into(),
            Tok::KwThen => "`then`".into(),
            Tok::KwElse => "`else`".into(),
            Tok::KwTrue => "`true`".into(),
            Tok::KwFalse => "`false`".into(),
            Tok::KwUnit => "`unit`".into(),
            Tok::KwAwait => "`await`".into(),
            Tok::KwThis => "`this`".into(),
            Tok::KwTrmp => "`trmp`".into(),
            Tok::KwTry => "`try`".into(),
            Tok::KwDone => "`Done`".into(),
            Tok::KwMore => "`More`".into(),
            Tok::AtCo => "`@co`".into(),
            Tok::AtCl => "`@cl`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eq => "`=`".into(),
            Tok::ColonEq => "`:=`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Cons => "`::`".into(),
            Tok::OpAdd => "`+`".into(),
            Tok::OpEq => "`==`".into(),
            Tok::OpLt => "`<`".into(),
            Tok::OpAnd => "`&&`".into(),
            Tok::OpBind => "`>>=`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

type Spanned = (Tok, u32, u32);

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut lx = Lexer {
        src: src.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia();
        let (line, col) = (lx.line, lx.col);
        match lx.next_token()? {
            Tok::Eof => {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            }
            t => out.push((t, line, col)),
        }
    }
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(b' ') | Some(b'\t') | Some(b'\r') | Some(b'\n') => {
                    self.bump();
                }
                Some(b'-') if self.src.get(self.pos + 1) == Some(&b'-') => {
                    while let Some(c) = self.peek() {
                        if c == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn next_token(&mut self) -> Result<Tok, ParseError> {
        let c = match self.peek() {
            None => return Ok(Tok::Eof),
            Some(c) => c,
        };
        match c {
            b'0'..=b'9' => {
                let start = self.pos;
                while matches!(self.peek(), Some(b'0'..=b'9')) {
                    self.bump();
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let n: BigUint = text.parse().unwrap();
                if n >= Nat256::modulus() {
                    return Err(self.error("numeric literal does not fit in 256 bits"));
                }
                Ok(Tok::Nat(n))
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = self.pos;
                while matches!(self.peek(), Some(b'a'..=b'z' | b'A'..=b'Z' | b'0'..=b'9' | b'_')) {
                    self.bump();
                }
                let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(match word {
                    "main" => Tok::KwMain,
                    "let" => Tok::KwLet,
                    "fun" => Tok::KwFun,
                    "assert" => Tok::KwAssert,
                    "if" => Tok::KwIf,
                    "then" => Tok::KwThen,
                    "else" => Tok::KwElse,
                    "true" => Tok::KwTrue,
                    "false" => Tok::KwFalse,
                    "unit" => Tok::KwUnit,
                    "await" => Tok::KwAwait,
                    "this" => Tok::KwThis,
                    "trmp" => Tok::KwTrmp,
                    "try" => Tok::KwTry,
                    "Done" => Tok::KwDone,
                    "More" => Tok::KwMore,
                    _ => Tok::Ident(word.to_string()),
                })
            }
            b'@' => {
                self.bump();
                let start = self.pos;
                while matches!(self.peek(), Some(b'a'..=b'z')) {
                    self.bump();
                }
                match &self.src[start..self.pos] {
                    b"co" => Ok(Tok::AtCo),
                    b"cl" => Ok(Tok::AtCl),
                    other => Err(self.error(format!(
                        "unknown annotation @{}",
                        String::from_utf8_lossy(other)
                    ))),
                }
            }
            b'(' => {
                self.bump();
                Ok(Tok::LParen)
            }
            b')' => {
                self.bump();
                Ok(Tok::RParen)
            }
            b'{' => {
                self.bump();
                Ok(Tok::LBrace)
            }
            b'}' => {
                self.bump();
                Ok(Tok::RBrace)
            }
            b',' => {
                self.bump();
                Ok(Tok::Comma)
            }
            b';' => {
                self.bump();
                Ok(Tok::Semi)
            }
            b'.' => {
                self.bump();
                Ok(Tok::Dot)
            }
            b'+' => {
                self.bump();
                Ok(Tok::OpAdd)
            }
            b'<' => {
                self.bump();
                Ok(Tok::OpLt)
            }
            b'&' => {
                self.bump();
                if self.peek() == Some(b'&') {
                    self.bump();
                    Ok(Tok::OpAnd)
                } else {
                    Err(self.error("expected `&&`"))
                }
            }
            b'=' => {
                self.bump();
                if self.peek() == Some(b'=') {
                    self.bump();
                    Ok(Tok::OpEq)
                } else {
                    Ok(Tok::Eq)
                }
            }
            b':' => {
                self.bump();
                match self.peek() {
                    Some(b':') => {
                        self.bump();
                        Ok(Tok::Cons)
                    }
                    Some(b'=') => {
                        self.bump();
                        Ok(Tok::ColonEq)
                    }
                    _ => Err(self.error("expected `::` or `:=`")),
                }
            }
            b'-' => {
                self.bump();
                if self.peek() == Some(b'>') {
                    self.bump();
                    Ok(Tok::Arrow)
                } else {
                    Err(self.error("expected `->` (comments are `--`)"))
                }
            }
            b'>' => {
                self.bump();
                if self.peek() == Some(b'>') {
                    self.bump();
                    if self.peek() == Some(b'=') {
                        self.bump();
                        Ok(Tok::OpBind)
                    } else {
                        Err(self.error("expected `>>=`"))
                    }
                } else {
                    Err(self.error("expected `>>=`"))
                }
            }
            other => Err(self.error(format!("unexpected character `{}`", other as char))),
        }
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].0
    }

    fn here(&self) -> (u32, u32) {
        let (_, l, c) = self.toks[self.pos];
        (l, c)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected {}, found {}",
                tok.describe(),
                self.peek().describe()
            )))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                if Synth::from_name(&s).is_some() {
                    return Err(self.error(format!("`{s}` is reserved")));
                }
                if s == crate::passes::DISPATCH_PARAM || is_generated_name(&s) {
                    return Err(self.error(format!("`{s}` is reserved for the compiler")));
                }
                self.bump();
                Ok(s)
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut defs = Vec::new();
        loop {
            match self.peek() {
                Tok::AtCo | Tok::AtCl => {
                    let location = if matches!(self.bump(), Tok::AtCo) {
                        Location::Contract
                    } else {
                        Location::Client
                    };
                    self.expect(Tok::KwThis)?;
                    self.expect(Tok::Dot)?;
                    let name = self.ident()?;
                    self.expect(Tok::Eq)?;
                    let value = self.mexpr_no_seq()?;
                    self.expect(Tok::Semi)?;
                    defs.push(Definition {
                        location,
                        var: Ident::mutable(name),
                        value,
                    });
                }
                _ => break,
            }
        }
        self.expect(Tok::KwMain)?;
        self.expect(Tok::LBrace)?;
        let main = self.mexpr()?;
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Eof)?;
        Ok(Program {
            defs,
            syndefs: Vec::new(),
            main,
        })
    }

    /// Statement level: let / assert / if-let / fun / sequencing.
    fn mexpr(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Tok::KwLet => {
                self.bump();
                let pat = self.pattern()?;
                self.expect(Tok::Eq)?;
                let bound = self.mexpr_no_seq()?;
                self.expect(Tok::Semi)?;
                let body = self.mexpr()?;
                Ok(Term::let_in(pat, bound, body))
            }
            Tok::KwAssert => {
                self.bump();
                self.expect(Tok::LParen)?;
                let cond = self.mexpr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                let rest = self.mexpr()?;
                Ok(Term::assert_then(cond, rest))
            }
            Tok::KwIf => {
                self.bump();
                self.expect(Tok::KwLet)?;
                let pat = self.pattern()?;
                self.expect(Tok::Eq)?;
                let scrutinee = self.mexpr_no_seq()?;
                self.expect(Tok::KwThen)?;
                let then = self.mexpr()?;
                self.expect(Tok::KwElse)?;
                let els = self.mexpr()?;
                Ok(Term::if_let(pat, scrutinee, then, els))
            }
            Tok::KwFun => {
                let lam = self.lambda()?;
                self.maybe_seq(lam)
            }
            _ => {
                let first = self.simple()?;
                self.maybe_seq(first)
            }
        }
    }

    /// A statement-level expression that stops before `;` — used where a
    /// keyword (`then`) or `;` delimits: let bounds and if-let scrutinees.
    fn mexpr_no_seq(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Tok::KwFun => self.lambda(),
            _ => self.simple(),
        }
    }

    fn maybe_seq(&mut self, first: Term) -> Result<Term, ParseError> {
        if *self.peek() == Tok::Semi {
            self.bump();
            let rest = self.mexpr()?;
            Ok(Term::seq(first, rest))
        } else {
            Ok(first)
        }
    }

    fn lambda(&mut self) -> Result<Term, ParseError> {
        self.expect(Tok::KwFun)?;
        let pat = self.pattern()?;
        self.expect(Tok::Arrow)?;
        let body = self.cons_expr()?;
        Ok(Term::lambda(pat, body))
    }

    /// Assignment or plain expression.
    fn simple(&mut self) -> Result<Term, ParseError> {
        let lhs = self.cons_expr()?;
        if *self.peek() == Tok::ColonEq {
            let var = match lhs {
                Term::Get(id) => id,
                _ => return Err(self.error("assignment target must be `this.<var>`")),
            };
            self.bump();
            let rhs = self.cons_expr()?;
            return Ok(Term::Set(var, Box::new(rhs)));
        }
        Ok(lhs)
    }

    /// `::` — right-associative, looser than the binary operators.
    fn cons_expr(&mut self) -> Result<Term, ParseError> {
        let head = self.infix_expr()?;
        if *self.peek() == Tok::Cons {
            self.bump();
            let tail = self.cons_expr()?;
            return Ok(Term::pair(head, tail));
        }
        Ok(head)
    }

    /// One optional non-associative binary operator between applications.
    fn infix_expr(&mut self) -> Result<Term, ParseError> {
        let lhs = self.app_expr()?;
        let op = match self.peek() {
            Tok::OpAdd => Const::Add,
            Tok::OpEq => Const::Eq,
            Tok::OpLt => Const::Lt,
            Tok::OpAnd => Const::And,
            Tok::OpBind => Const::Bind,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.app_expr()?;
        if matches!(
            self.peek(),
            Tok::OpAdd | Tok::OpEq | Tok::OpLt | Tok::OpAnd | Tok::OpBind
        ) {
            return Err(self.error("operators do not chain; parenthesize"));
        }
        if op == Const::Bind {
            // `m0 >>= m1` is the curried bind application.
            return Ok(Term::app(Term::app(Term::Const(Const::Bind), lhs), rhs));
        }
        Ok(Term::binop(op, lhs, rhs))
    }

    /// Juxtaposition, left-associative.
    fn app_expr(&mut self) -> Result<Term, ParseError> {
        let mut t = self.atom()?;
        while self.starts_atom() {
            let arg = self.atom()?;
            t = Term::app(t, arg);
        }
        Ok(t)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Nat(_)
                | Tok::Ident(_)
                | Tok::KwTrue
                | Tok::KwFalse
                | Tok::KwUnit
                | Tok::KwThis
                | Tok::KwTrmp
                | Tok::KwTry
                | Tok::KwDone
                | Tok::KwMore
                | Tok::KwAwait
                | Tok::LParen
        )
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Nat(n) => {
                self.bump();
                Ok(Term::Const(Const::Nat(Nat256::new(n))))
            }
            Tok::KwTrue => {
                self.bump();
                Ok(Term::Const(Const::True))
            }
            Tok::KwFalse => {
                self.bump();
                Ok(Term::Const(Const::False))
            }
            Tok::KwUnit => {
                self.bump();
                Ok(Term::unit())
            }
            Tok::KwTrmp => {
                self.bump();
                Ok(Term::Const(Const::Trmp))
            }
            Tok::KwTry => {
                self.bump();
                Ok(Term::Const(Const::Try))
            }
            Tok::KwDone => {
                self.bump();
                Ok(Term::Const(Const::Done))
            }
            Tok::KwMore => {
                self.bump();
                Ok(Term::Const(Const::More))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                Ok(Term::var(name))
            }
            Tok::KwThis => {
                self.bump();
                self.expect(Tok::Dot)?;
                match self.peek().clone() {
                    Tok::Ident(s) => {
                        if Synth::from_name(&s).is_some() {
                            return Err(self.error(format!("`this.{s}` is reserved")));
                        }
                        self.bump();
                        Ok(Term::Get(Ident::mutable(s)))
                    }
                    other => {
                        Err(self.error(format!("expected variable name, found {}", other.describe())))
                    }
                }
            }
            Tok::KwAwait => {
                self.bump();
                self.expect(Tok::LParen)?;
                let pred = self.mexpr()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::LBrace)?;
                let body = self.mexpr()?;
                self.expect(Tok::RBrace)?;
                Ok(Term::RemoteS(Box::new(pred), Box::new(Term::thunk(body))))
            }
            Tok::LParen => {
                self.bump();
                // Bare operator atoms: (+) (==) (<) (&&) (>>=)
                let op = match self.peek() {
                    Tok::OpAdd => Some(Const::Add),
                    Tok::OpEq => Some(Const::Eq),
                    Tok::OpLt => Some(Const::Lt),
                    Tok::OpAnd => Some(Const::And),
                    Tok::OpBind => Some(Const::Bind),
                    _ => None,
                };
                if let Some(op) = op {
                    if *self.peek2() == Tok::RParen {
                        self.bump();
                        self.bump();
                        return Ok(Term::Const(op));
                    }
                }
                let first = self.mexpr()?;
                let mut items = vec![first];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    items.push(self.mexpr()?);
                }
                self.expect(Tok::RParen)?;
                if items.len() == 1 {
                    Ok(items.pop().unwrap())
                } else {
                    Ok(Term::tuple(items))
                }
            }
            other => Err(self.error(format!("expected expression, found {}", other.describe()))),
        }
    }

    fn pattern(&mut self) -> Result<Term, ParseError> {
        let head = self.pattern_atom()?;
        if *self.peek() == Tok::Cons {
            self.bump();
            let tail = self.pattern()?;
            return Ok(Term::pair(head, tail));
        }
        Ok(head)
    }

    fn pattern_atom(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Nat(n) => {
                self.bump();
                Ok(Term::Const(Const::Nat(Nat256::new(n))))
            }
            Tok::KwTrue => {
                self.bump();
                Ok(Term::Const(Const::True))
            }
            Tok::KwFalse => {
                self.bump();
                Ok(Term::Const(Const::False))
            }
            Tok::KwUnit => {
                self.bump();
                Ok(Term::unit())
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                Ok(Term::var(name))
            }
            Tok::LParen => {
                self.bump();
                let first = self.pattern()?;
                let mut items = vec![first];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    items.push(self.pattern()?);
                }
                self.expect(Tok::RParen)?;
                if items.len() == 1 {
                    Ok(items.pop().unwrap())
                } else {
                    Ok(Term::tuple(items))
                }
            }
            other => Err(self.error(format!("expected pattern, found {}", other.describe()))),
        }
    }
}

/// Names of the compiler's fresh-identifier family (`tmp0`, `tmp1`, ...).
pub fn is_generated_name(s: &str) -> bool {
    s.strip_prefix("tmp")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// Parse a source file: lex, parse, desugar, and validate against the
/// source subset.
pub fn parse(text: &str) -> Result<Program, Vec<ParseError>> {
    let toks = lex(text).map_err(|e| vec![e])?;
    let mut p = Parser { toks, pos: 0 };
    let program = p.program().map_err(|e| vec![e])?;
    let program = Program {
        defs: program
            .defs
            .into_iter()
            .map(|d| Definition {
                value: desugar(d.value),
                ..d
            })
            .collect(),
        syndefs: Vec::new(),
        main: desugar(program.main),
    };
    match validate_subset(&program, Subset::Source) {
        Ok(()) => Ok(program),
        Err(violations) => Err(violations
            .into_iter()
            .map(|v| ParseError {
                line: 0,
                col: 0,
                message: v.to_string(),
            })
            .collect()),
    }
}

/// Parse a single expression-level value literal (used for configured
/// attacker universes).
pub fn parse_value(text: &str) -> Result<Term, Vec<ParseError>> {
    let toks = lex(text).map_err(|e| vec![e])?;
    let mut p = Parser { toks, pos: 0 };
    let t = p.mexpr().map_err(|e| vec![e])?;
    p.expect(Tok::Eof).map_err(|e| vec![e])?;
    let t = desugar(t);
    if !t.is_value() {
        return Err(vec![ParseError {
            line: 0,
            col: 0,
            message: "expected a value literal".to_string(),
        }]);
    }
    Ok(t)
}
