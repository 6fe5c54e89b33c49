//! Recursive-descent recognizer for a Python subset.
//!
//! It builds no tree. It records which name tokens bind variables, which
//! names are imported, and which name tokens are keyword-argument labels at
//! call sites. Anything outside the subset is a parse failure.

use std::collections::HashSet;

use crate::lexer::{is_keyword, Token, TokenKind};

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ParseInfo {
    /// Lexer-token indices of binding occurrences, in source order.
    pub bindings: Vec<usize>,
    pub imported: HashSet<String>,
    /// Lexer-token indices of `name` in `f(name=...)`.
    pub kwargs: HashSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Name,
    Number,
    Str,
    Op,
    Newline,
    Indent,
    Dedent,
    End,
}

#[derive(Debug, Clone, Copy)]
struct Lt<'a> {
    kind: Kind,
    text: &'a str,
    lex: usize,
}

#[derive(Debug)]
struct Fail;

type PResult<T> = std::result::Result<T, Fail>;

/// Shape of an expression, as far as assignment targets care.
enum Shape {
    Name(usize),
    Seq(Vec<Shape>),
    Star(Box<Shape>),
    Other,
}

fn indent_width(src: &str, at: usize) -> usize {
    let line_start = src[..at].rfind('\n').map_or(0, |i| i + 1);
    let mut col = 0;
    for b in src[line_start..at].bytes() {
        match b {
            b'\t' => col = (col / 8 + 1) * 8,
            0x0c => col = 0,
            _ => col += 1,
        }
    }
    col
}

fn logical<'a>(src: &'a str, tokens: &[Token]) -> PResult<Vec<Lt<'a>>> {
    let mut out = Vec::new();
    let mut depth: i32 = 0;
    let mut at_line_start = true;
    let mut indents: Vec<usize> = Vec::new();
    let mk = |kind, text, lex| Lt { kind, text, lex };
    for (k, t) in tokens.iter().enumerate() {
        let kind = match t.kind {
            TokenKind::Comment | TokenKind::Continuation => continue,
            TokenKind::Unknown | TokenKind::Str { terminated: false, .. } => return Err(Fail),
            TokenKind::Newline => {
                if depth == 0 && !at_line_start {
                    out.push(mk(Kind::Newline, "", k));
                    at_line_start = true;
                }
                continue;
            }
            TokenKind::Name => Kind::Name,
            TokenKind::Number => Kind::Number,
            TokenKind::Str { .. } => Kind::Str,
            TokenKind::Op => Kind::Op,
        };
        if at_line_start && depth == 0 {
            let col = indent_width(src, t.start);
            match indents.last().copied() {
                None => indents.push(col),
                Some(top) if col > top => {
                    indents.push(col);
                    out.push(mk(Kind::Indent, "", k));
                }
                Some(_) => {
                    while indents.len() > 1 && col < *indents.last().expect("indent") {
                        indents.pop();
                        out.push(mk(Kind::Dedent, "", k));
                    }
                    if col != *indents.last().expect("indent") {
                        return Err(Fail);
                    }
                }
            }
            at_line_start = false;
        }
        let text = t.text(src);
        if kind == Kind::Op {
            match text {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(Fail);
                    }
                }
                _ => {}
            }
        }
        out.push(mk(kind, text, k));
    }
    if depth != 0 {
        return Err(Fail);
    }
    if !at_line_start {
        out.push(mk(Kind::Newline, "", tokens.len()));
    }
    for _ in 1..indents.len() {
        out.push(mk(Kind::Dedent, "", tokens.len()));
    }
    out.push(mk(Kind::End, "", tokens.len()));
    Ok(out)
}

/// Parses `src` (already lexed into `tokens`). `None` when the text is
/// outside the supported subset.
pub fn parse(src: &str, tokens: &[Token]) -> Option<ParseInfo> {
    let toks = logical(src, tokens).ok()?;
    let mut p = Parser {
        toks,
        pos: 0,
        info: ParseInfo::default(),
    };
    p.file().ok()?;
    Some(p.info)
}

struct Parser<'a> {
    toks: Vec<Lt<'a>>,
    pos: usize,
    info: ParseInfo,
}

const AUG_OPS: &[&str] = &[
    "+=", "-=", "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=", ">>=", "<<=", "**=",
];
const COMP_OPS: &[&str] = &["<", ">", "==", ">=", "<=", "!="];

impl<'a> Parser<'a> {
    fn peek(&self) -> Lt<'a> {
        self.toks[self.pos]
    }

    fn peek_at(&self, n: usize) -> Lt<'a> {
        self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn bump(&mut self) -> Lt<'a> {
        let t = self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_op(&self, op: &str) -> bool {
        let t = self.peek();
        t.kind == Kind::Op && t.text == op
    }

    fn is_kw(&self, kw: &str) -> bool {
        let t = self.peek();
        t.kind == Kind::Name && t.text == kw
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Fail)
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(Fail)
        }
    }

    fn expect_kind(&mut self, kind: Kind) -> PResult<Lt<'a>> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(Fail)
        }
    }

    /// A plain identifier (not a keyword).
    fn name(&mut self) -> PResult<Lt<'a>> {
        let t = self.peek();
        if t.kind == Kind::Name && !is_keyword(t.text) {
            Ok(self.bump())
        } else {
            Err(Fail)
        }
    }

    fn bind(&mut self, shape: &Shape) {
        match shape {
            Shape::Name(i) => self.info.bindings.push(*i),
            Shape::Seq(items) => items.iter().for_each(|s| self.bind(s)),
            Shape::Star(inner) => self.bind(inner),
            Shape::Other => {}
        }
    }

    fn starts_expr(&self) -> bool {
        let t = self.peek();
        match t.kind {
            Kind::Number | Kind::Str => true,
            Kind::Name => {
                !is_keyword(t.text)
                    || matches!(t.text, "not" | "lambda" | "None" | "True" | "False" | "await")
            }
            Kind::Op => matches!(t.text, "(" | "[" | "{" | "-" | "+" | "~" | "*" | "..."),
            _ => false,
        }
    }

    // ---- statements ----

    fn file(&mut self) -> PResult<()> {
        loop {
            match self.peek().kind {
                Kind::End => return Ok(()),
                Kind::Newline => {
                    self.bump();
                }
                _ => self.stmt()?,
            }
        }
    }

    fn stmt(&mut self) -> PResult<()> {
        let t = self.peek();
        if t.kind == Kind::Op && t.text == "@" {
            while self.eat_op("@") {
                self.namedexpr()?;
                self.expect_kind(Kind::Newline)?;
            }
            if self.is_kw("class") {
                return self.class_def();
            }
            self.eat_kw("async");
            return self.func_def();
        }
        if t.kind == Kind::Name {
            match t.text {
                "if" => return self.if_stmt(),
                "while" => return self.while_stmt(),
                "for" => return self.for_stmt(),
                "try" => return self.try_stmt(),
                "with" => return self.with_stmt(),
                "def" => return self.func_def(),
                "class" => return self.class_def(),
                "async" => {
                    self.bump();
                    return match self.peek().text {
                        "def" => self.func_def(),
                        "for" => self.for_stmt(),
                        "with" => self.with_stmt(),
                        _ => Err(Fail),
                    };
                }
                _ => {}
            }
        }
        self.simple_stmts()
    }

    fn simple_stmts(&mut self) -> PResult<()> {
        self.small_stmt()?;
        while self.eat_op(";") {
            if self.peek().kind == Kind::Newline {
                break;
            }
            self.small_stmt()?;
        }
        self.expect_kind(Kind::Newline)?;
        Ok(())
    }

    fn small_stmt(&mut self) -> PResult<()> {
        let t = self.peek();
        if t.kind == Kind::Name {
            match t.text {
                "pass" | "break" | "continue" => {
                    self.bump();
                    return Ok(());
                }
                "del" => {
                    self.bump();
                    self.exprlist()?;
                    return Ok(());
                }
                "return" => {
                    self.bump();
                    if self.starts_expr() {
                        self.testlist_star()?;
                    }
                    return Ok(());
                }
                "raise" => {
                    self.bump();
                    if self.starts_expr() {
                        self.test()?;
                        if self.eat_kw("from") {
                            self.test()?;
                        }
                    }
                    return Ok(());
                }
                "global" | "nonlocal" => {
                    self.bump();
                    self.name()?;
                    while self.eat_op(",") {
                        self.name()?;
                    }
                    return Ok(());
                }
                "assert" => {
                    self.bump();
                    self.test()?;
                    if self.eat_op(",") {
                        self.test()?;
                    }
                    return Ok(());
                }
                "import" => return self.import_name(),
                "from" => return self.import_from(),
                _ => {}
            }
        }
        self.expr_stmt()
    }

    fn dotted_name(&mut self) -> PResult<Lt<'a>> {
        let first = self.name()?;
        while self.eat_op(".") {
            self.name()?;
        }
        Ok(first)
    }

    fn import_name(&mut self) -> PResult<()> {
        self.expect_kw("import")?;
        loop {
            let first = self.dotted_name()?;
            let bound = if self.eat_kw("as") { self.name()? } else { first };
            self.info.imported.insert(bound.text.to_string());
            if !self.eat_op(",") {
                return Ok(());
            }
        }
    }

    fn import_from(&mut self) -> PResult<()> {
        self.expect_kw("from")?;
        let mut dots = 0;
        while self.is_op(".") || self.is_op("...") {
            dots += self.bump().text.len();
        }
        if dots == 0 || !self.is_kw("import") {
            self.dotted_name()?;
        }
        self.expect_kw("import")?;
        if self.eat_op("*") {
            return Ok(());
        }
        let paren = self.eat_op("(");
        loop {
            let n = self.name()?;
            let bound = if self.eat_kw("as") { self.name()? } else { n };
            self.info.imported.insert(bound.text.to_string());
            if !self.eat_op(",") {
                break;
            }
            if paren && self.is_op(")") {
                break;
            }
        }
        if paren {
            self.expect_op(")")?;
        }
        Ok(())
    }

    fn expr_stmt(&mut self) -> PResult<()> {
        let first = self.testlist_star()?;
        if self.eat_op(":") {
            self.test()?;
            if let Shape::Name(_) = first {
                self.bind(&first);
            }
            if self.eat_op("=") {
                self.yield_or_testlist()?;
            }
            return Ok(());
        }
        let t = self.peek();
        if t.kind == Kind::Op && AUG_OPS.contains(&t.text) {
            self.bump();
            if let Shape::Name(_) = first {
                self.bind(&first);
            }
            self.yield_or_testlist()?;
            return Ok(());
        }
        let mut last = first;
        while self.eat_op("=") {
            self.bind(&last);
            last = self.yield_or_testlist()?;
        }
        Ok(())
    }

    fn yield_or_testlist(&mut self) -> PResult<Shape> {
        if self.is_kw("yield") {
            self.yield_expr()?;
            Ok(Shape::Other)
        } else {
            self.testlist_star()
        }
    }

    fn yield_expr(&mut self) -> PResult<()> {
        self.expect_kw("yield")?;
        if self.eat_kw("from") {
            self.test()?;
        } else if self.starts_expr() {
            self.testlist_star()?;
        }
        Ok(())
    }

    fn suite(&mut self) -> PResult<()> {
        if self.peek().kind != Kind::Newline {
            return self.simple_stmts();
        }
        self.bump();
        self.expect_kind(Kind::Indent)?;
        loop {
            match self.peek().kind {
                Kind::Dedent => {
                    self.bump();
                    return Ok(());
                }
                Kind::End => return Err(Fail),
                Kind::Newline => {
                    self.bump();
                }
                _ => self.stmt()?,
            }
        }
    }

    fn colon_suite(&mut self) -> PResult<()> {
        self.expect_op(":")?;
        self.suite()
    }

    fn if_stmt(&mut self) -> PResult<()> {
        self.expect_kw("if")?;
        self.namedexpr()?;
        self.colon_suite()?;
        while self.eat_kw("elif") {
            self.namedexpr()?;
            self.colon_suite()?;
        }
        if self.eat_kw("else") {
            self.colon_suite()?;
        }
        Ok(())
    }

    fn while_stmt(&mut self) -> PResult<()> {
        self.expect_kw("while")?;
        self.namedexpr()?;
        self.colon_suite()?;
        if self.eat_kw("else") {
            self.colon_suite()?;
        }
        Ok(())
    }

    fn for_stmt(&mut self) -> PResult<()> {
        self.expect_kw("for")?;
        let target = self.exprlist()?;
        self.bind(&target);
        self.expect_kw("in")?;
        self.testlist_star()?;
        self.colon_suite()?;
        if self.eat_kw("else") {
            self.colon_suite()?;
        }
        Ok(())
    }

    fn try_stmt(&mut self) -> PResult<()> {
        self.expect_kw("try")?;
        self.colon_suite()?;
        let mut handlers = 0;
        while self.eat_kw("except") {
            handlers += 1;
            self.eat_op("*");
            if !self.is_op(":") {
                self.test()?;
                if self.eat_kw("as") {
                    self.name()?;
                }
            }
            self.colon_suite()?;
        }
        if handlers > 0 && self.eat_kw("else") {
            self.colon_suite()?;
        }
        if self.eat_kw("finally") {
            self.colon_suite()?;
        } else if handlers == 0 {
            return Err(Fail);
        }
        Ok(())
    }

    fn with_stmt(&mut self) -> PResult<()> {
        self.expect_kw("with")?;
        loop {
            self.test()?;
            if self.eat_kw("as") {
                let target = self.expr()?;
                self.bind(&target);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.colon_suite()
    }

    fn func_def(&mut self) -> PResult<()> {
        self.expect_kw("def")?;
        self.name()?;
        self.expect_op("(")?;
        self.params(")", true)?;
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.test()?;
        }
        self.colon_suite()
    }

    /// Parameter list up to (not including) `close`.
    fn params(&mut self, close: &str, annotations: bool) -> PResult<()> {
        while !self.is_op(close) {
            if self.eat_op("/") {
            } else if self.eat_op("*") || self.eat_op("**") {
                if self.peek().kind == Kind::Name && !is_keyword(self.peek().text) {
                    let n = self.name()?;
                    self.info.bindings.push(n.lex);
                    if annotations && self.eat_op(":") {
                        self.test()?;
                    }
                }
            } else {
                let n = self.name()?;
                self.info.bindings.push(n.lex);
                if annotations && self.eat_op(":") {
                    self.test()?;
                }
                if self.eat_op("=") {
                    self.test()?;
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(())
    }

    fn class_def(&mut self) -> PResult<()> {
        self.expect_kw("class")?;
        self.name()?;
        if self.eat_op("(") {
            self.arglist(")")?;
            self.expect_op(")")?;
        }
        self.colon_suite()
    }

    // ---- expressions ----

    fn testlist_star(&mut self) -> PResult<Shape> {
        let first = self.star_or_namedexpr()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if !self.starts_expr() {
                break;
            }
            items.push(self.star_or_namedexpr()?);
        }
        Ok(Shape::Seq(items))
    }

    fn exprlist(&mut self) -> PResult<Shape> {
        let first = self.star_or_expr()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if !self.starts_expr() {
                break;
            }
            items.push(self.star_or_expr()?);
        }
        Ok(Shape::Seq(items))
    }

    fn star_or_expr(&mut self) -> PResult<Shape> {
        if self.eat_op("*") {
            return Ok(Shape::Star(Box::new(self.expr()?)));
        }
        self.expr()
    }

    fn star_or_namedexpr(&mut self) -> PResult<Shape> {
        if self.eat_op("*") {
            return Ok(Shape::Star(Box::new(self.expr()?)));
        }
        self.namedexpr()
    }

    fn namedexpr(&mut self) -> PResult<Shape> {
        let t = self.peek();
        if t.kind == Kind::Name && !is_keyword(t.text) && self.peek_at(1).text == ":=" {
            self.bump();
            self.bump();
            self.info.bindings.push(t.lex);
            self.test()?;
            return Ok(Shape::Other);
        }
        self.test()
    }

    fn test(&mut self) -> PResult<Shape> {
        if self.is_kw("lambda") {
            self.bump();
            self.params(":", false)?;
            self.expect_op(":")?;
            self.test()?;
            return Ok(Shape::Other);
        }
        let s = self.or_test()?;
        if self.eat_kw("if") {
            self.or_test()?;
            self.expect_kw("else")?;
            self.test()?;
            return Ok(Shape::Other);
        }
        Ok(s)
    }

    fn or_test(&mut self) -> PResult<Shape> {
        let mut s = self.and_test()?;
        while self.eat_kw("or") {
            self.and_test()?;
            s = Shape::Other;
        }
        Ok(s)
    }

    fn and_test(&mut self) -> PResult<Shape> {
        let mut s = self.not_test()?;
        while self.eat_kw("and") {
            self.not_test()?;
            s = Shape::Other;
        }
        Ok(s)
    }

    fn not_test(&mut self) -> PResult<Shape> {
        if self.eat_kw("not") {
            self.not_test()?;
            return Ok(Shape::Other);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Shape> {
        let mut s = self.expr()?;
        loop {
            let t = self.peek();
            let is_cmp = (t.kind == Kind::Op && COMP_OPS.contains(&t.text))
                || self.is_kw("in")
                || self.is_kw("is")
                || (self.is_kw("not") && self.peek_at(1).text == "in");
            if !is_cmp {
                return Ok(s);
            }
            if self.eat_kw("not") {
                self.expect_kw("in")?;
            } else if self.eat_kw("is") {
                self.eat_kw("not");
            } else {
                self.bump();
            }
            self.expr()?;
            s = Shape::Other;
        }
    }

    fn binary(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Shape>) -> PResult<Shape> {
        let mut s = next(self)?;
        loop {
            let t = self.peek();
            if t.kind == Kind::Op && ops.contains(&t.text) {
                self.bump();
                next(self)?;
                s = Shape::Other;
            } else {
                return Ok(s);
            }
        }
    }

    fn expr(&mut self) -> PResult<Shape> {
        self.binary(&["|"], Self::xor_expr)
    }

    fn xor_expr(&mut self) -> PResult<Shape> {
        self.binary(&["^"], Self::and_expr)
    }

    fn and_expr(&mut self) -> PResult<Shape> {
        self.binary(&["&"], Self::shift_expr)
    }

    fn shift_expr(&mut self) -> PResult<Shape> {
        self.binary(&["<<", ">>"], Self::arith)
    }

    fn arith(&mut self) -> PResult<Shape> {
        self.binary(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Shape> {
        self.binary(&["*", "/", "%", "//", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Shape> {
        if self.eat_op("+") || self.eat_op("-") || self.eat_op("~") {
            self.factor()?;
            return Ok(Shape::Other);
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Shape> {
        let awaited = self.eat_kw("await");
        let mut s = self.atom()?;
        loop {
            if self.eat_op("(") {
                self.arglist(")")?;
                self.expect_op(")")?;
            } else if self.eat_op("[") {
                self.subscripts()?;
                self.expect_op("]")?;
            } else if self.eat_op(".") {
                self.name()?;
            } else {
                break;
            }
            s = Shape::Other;
        }
        if self.eat_op("**") {
            self.factor()?;
            s = Shape::Other;
        }
        Ok(if awaited { Shape::Other } else { s })
    }

    fn atom(&mut self) -> PResult<Shape> {
        let t = self.peek();
        match t.kind {
            Kind::Number => {
                self.bump();
                Ok(Shape::Other)
            }
            Kind::Str => {
                while self.peek().kind == Kind::Str {
                    self.bump();
                }
                Ok(Shape::Other)
            }
            Kind::Name => {
                if matches!(t.text, "None" | "True" | "False") {
                    self.bump();
                    return Ok(Shape::Other);
                }
                let n = self.name()?;
                Ok(Shape::Name(n.lex))
            }
            Kind::Op => match t.text {
                "..." => {
                    self.bump();
                    Ok(Shape::Other)
                }
                "(" => {
                    self.bump();
                    if self.eat_op(")") {
                        return Ok(Shape::Seq(Vec::new()));
                    }
                    if self.is_kw("yield") {
                        self.yield_expr()?;
                        self.expect_op(")")?;
                        return Ok(Shape::Other);
                    }
                    let s = self.testlist_comp(")")?;
                    self.expect_op(")")?;
                    Ok(s)
                }
                "[" => {
                    self.bump();
                    if self.eat_op("]") {
                        return Ok(Shape::Seq(Vec::new()));
                    }
                    let s = match self.testlist_comp("]")? {
                        Shape::Name(i) => Shape::Seq(vec![Shape::Name(i)]),
                        other => other,
                    };
                    self.expect_op("]")?;
                    Ok(s)
                }
                "{" => {
                    self.bump();
                    if !self.is_op("}") {
                        self.dict_or_set()?;
                    }
                    self.expect_op("}")?;
                    Ok(Shape::Other)
                }
                _ => Err(Fail),
            },
            _ => Err(Fail),
        }
    }

    /// Contents of a parenthesized or bracketed display.
    fn testlist_comp(&mut self, close: &str) -> PResult<Shape> {
        let first = self.star_or_namedexpr()?;
        if self.is_kw("for") || self.is_kw("async") {
            self.comp_for()?;
            return Ok(Shape::Other);
        }
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.is_op(close) {
                break;
            }
            items.push(self.star_or_namedexpr()?);
        }
        Ok(Shape::Seq(items))
    }

    fn comp_for(&mut self) -> PResult<()> {
        self.eat_kw("async");
        self.expect_kw("for")?;
        let target = self.exprlist()?;
        self.bind(&target);
        self.expect_kw("in")?;
        self.or_test()?;
        loop {
            if self.is_kw("for") || self.is_kw("async") {
                return self.comp_for();
            }
            if self.eat_kw("if") {
                self.or_test_nocond()?;
            } else {
                return Ok(());
            }
        }
    }

    fn or_test_nocond(&mut self) -> PResult<()> {
        if self.is_kw("lambda") {
            self.test()?;
        } else {
            self.or_test()?;
        }
        Ok(())
    }

    fn dict_or_set(&mut self) -> PResult<()> {
        let mut first = true;
        loop {
            if self.eat_op("**") || self.eat_op("*") {
                self.expr()?;
            } else {
                self.namedexpr()?;
                if self.eat_op(":") {
                    self.test()?;
                }
            }
            if first && (self.is_kw("for") || self.is_kw("async")) {
                return self.comp_for();
            }
            first = false;
            if !self.eat_op(",") || self.is_op("}") {
                return Ok(());
            }
        }
    }

    fn arglist(&mut self, close: &str) -> PResult<()> {
        while !self.is_op(close) {
            if self.eat_op("*") || self.eat_op("**") {
                self.test()?;
            } else {
                let t = self.peek();
                if t.kind == Kind::Name && !is_keyword(t.text) && self.peek_at(1).text == "=" {
                    self.bump();
                    self.bump();
                    self.info.kwargs.insert(t.lex);
                    self.test()?;
                } else {
                    self.namedexpr()?;
                    if self.is_kw("for") || self.is_kw("async") {
                        self.comp_for()?;
                    }
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(())
    }

    fn subscripts(&mut self) -> PResult<()> {
        loop {
            if self.is_op("]") {
                return Ok(());
            }
            if !self.is_op(":") {
                self.star_or_namedexpr()?;
            }
            if self.eat_op(":") {
                if self.starts_expr() {
                    self.test()?;
                }
                if self.eat_op(":") && self.starts_expr() {
                    self.test()?;
                }
            }
            if !self.eat_op(",") {
                return Ok(());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::lex;

    fn names(src: &str) -> Option<Vec<String>> {
        let toks = lex(src);
        parse(src, &toks).map(|info| {
            info.bindings
                .iter()
                .map(|&i| toks[i].text(src).to_string())
                .collect()
        })
    }

    #[test]
    fn assignment_forms() {
        assert_eq!(names("x = 1\ny = x + 2").unwrap(), vec!["x", "y"]);
        assert_eq!(names("a, (b, *c) = t\nd += 1\ne: int = 3").unwrap(), vec!["a", "b", "c", "d", "e"]);
        assert_eq!(names("df['a'] = 1\nobj.attr = 2").unwrap(), Vec::<String>::new());
        assert_eq!(names("a = b = 0").unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn scopes_and_comprehensions() {
        let src = "def f(a, b: int = 1, *args, c, **kw) -> None:\n    for i, j in zip(a, b):\n        pass\n    return [k for k in range(3) if k]\nwith open(p) as fh:\n    g = lambda z: z\n";
        assert_eq!(names(src).unwrap(), vec!["a", "b", "args", "c", "kw", "i", "j", "k", "fh", "g", "z"]);
    }

    #[test]
    fn imports_and_kwargs() {
        let src = "import pandas as pd\nfrom a.b import (c, d as e,)\npd.read_csv(f, sep=',')";
        let toks = lex(src);
        let info = parse(src, &toks).unwrap();
        let imported: HashSet<&str> = info.imported.iter().map(String::as_str).collect();
        assert_eq!(imported, HashSet::from(["pd", "c", "e"]));
        let kw: Vec<&str> = info.kwargs.iter().map(|&i| toks[i].text(src)).collect();
        assert_eq!(kw, vec!["sep"]);
    }

    #[test]
    fn compound_statements() {
        let src = "try:\n    x = 1\nexcept ValueError as e:\n    pass\nelse:\n    y = 2\nfinally:\n    z = 3\nwhile (n := 5) > 3:\n    break\nclass A(B, metaclass=M):\n    @staticmethod\n    def f():\n        return {k: v for k, v in d.items()}\n";
        assert_eq!(names(src).unwrap(), vec!["x", "y", "z", "n", "k", "v"]);
    }

    #[test]
    fn rejects_non_python() {
        assert!(names("!pip install x").is_none());
        assert!(names("%matplotlib inline").is_none());
        assert!(names("x = (1, 2").is_none());
        assert!(names("if x:\npass").is_none());
        assert!(names("print 'hi'").is_none());
        assert!(names("  x = 1\ny = 2").is_none());
    }

    #[test]
    fn slices_and_calls() {
        assert!(names("a = x[:, 0]\nb = y[1:2, ::3]\nc = f(*args, **kw)\nd = -x ** 2 if p else ~q").is_some());
        assert!(names("s = 'a' 'b'\nt = not a in b and c is not None").is_some());
    }
}
