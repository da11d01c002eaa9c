//! Hand-written lexer and recursive-descent parser for the MTSQL dialect.

use crate::ast::*;
use crate::tenant::{Right, TenantId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("syntax error at {line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(Literal),
    Str(String),
    QuotedBlock(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 16] = [
    "<>", "!=", "<=", ">=", "(", ")", ",", ".", "*", "+", "-", "/", "=", "<", ">", ";",
];

fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, m: String| SyntaxError {
        line,
        col,
        message: m,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '@' {
            let start = i;
            advance(1, &mut i);
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(1, &mut i);
            }
            let word: String = chars[start..i].iter().collect();
            if word == "@" {
                return Err(err(tl, tc, "expected identifier after '@'".into()));
            }
            out.push(Token {
                tok: Tok::Ident(word),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            let mut is_dec = false;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(1, &mut i);
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                is_dec = true;
                advance(1, &mut i);
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i);
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_dec = true;
                    advance(j - i, &mut i);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(1, &mut i);
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let next_is_word = |k: usize| chars.get(k).is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_');
            let mult = match chars.get(i) {
                Some('K') | Some('k') if !next_is_word(i + 1) => Some(1_000i64),
                Some('M') | Some('m') if !next_is_word(i + 1) => Some(1_000_000i64),
                _ => None,
            };
            let lit = match mult {
                Some(m) => {
                    advance(1, &mut i);
                    if is_dec {
                        let v: f64 = text.parse().map_err(|_| err(tl, tc, "bad number".into()))?;
                        let scaled = v * m as f64;
                        if scaled.fract() == 0.0 && scaled.abs() < 9.0e15 {
                            Literal::Int(scaled as i64)
                        } else {
                            Literal::Dec(scaled)
                        }
                    } else {
                        let v: i64 = text.parse().map_err(|_| err(tl, tc, "bad number".into()))?;
                        Literal::Int(
                            v.checked_mul(m)
                                .ok_or_else(|| err(tl, tc, "integer literal overflow".into()))?,
                        )
                    }
                }
                None if is_dec => Literal::Dec(text.parse().map_err(|_| err(tl, tc, "bad number".into()))?),
                None => Literal::Int(
                    text.parse()
                        .map_err(|_| err(tl, tc, "integer literal overflow".into()))?,
                ),
            };
            if next_is_word(i) {
                return Err(err(tl, tc, format!("malformed number near '{text}'")));
            }
            out.push(Token {
                tok: Tok::Number(lit),
                line: tl,
                col: tc,
            });
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = c;
            advance(1, &mut i);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(err(tl, tc, "unterminated string".into())),
                    Some(&q) if q == quote => {
                        if chars.get(i + 1) == Some(&quote) {
                            s.push(quote);
                            advance(2, &mut i);
                        } else {
                            advance(1, &mut i);
                            break;
                        }
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(1, &mut i);
                    }
                }
            }
            out.push(Token {
                tok: if quote == '\'' { Tok::Str(s) } else { Tok::QuotedBlock(s) },
                line: tl,
                col: tc,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                advance(sym.len(), &mut i);
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line: tl,
                    col: tc,
                });
            }
            None => return Err(err(tl, tc, format!("unexpected character '{c}'"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

const RESERVED: &[&str] = &[
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "AND", "OR", "NOT", "IN", "IS", "NULL",
    "EXISTS", "JOIN", "INNER", "ON", "AS", "CASE", "WHEN", "THEN", "ELSE", "END", "DISTINCT", "ASC", "DESC",
    "BETWEEN", "UNION", "LIMIT", "SET", "VALUES", "INSERT", "UPDATE", "DELETE", "CREATE", "DROP", "ALTER",
    "GRANT", "REVOKE", "TO", "ALL",
];

fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|r| r.eq_ignore_ascii_case(word))
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(SyntaxError {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Number(_) => "number".into(),
            Tok::Str(_) | Tok::QuotedBlock(_) => "string".into(),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn is_kw_at(&self, k: usize, kw: &str) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(format!("expected {kw}, found {}", self.describe()))
        }
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.is_sym(sym) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> PResult<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.error(format!("expected '{sym}', found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) && !s.starts_with('@') => {
                self.next();
                Ok(s)
            }
            _ => self.error(format!("expected identifier, found {}", self.describe())),
        }
    }

    fn optional_alias(&mut self) -> PResult<Option<String>> {
        if self.eat_kw("AS") {
            return self.ident().map(Some);
        }
        match self.peek() {
            Tok::Ident(s) if !is_reserved(s) && !s.starts_with('@') => self.ident().map(Some),
            _ => Ok(None),
        }
    }

    fn statement(&mut self) -> PResult<Statement> {
        let Tok::Ident(word) = self.peek().clone() else {
            return self.error(format!("expected statement, found {}", self.describe()));
        };
        match word.to_ascii_uppercase().as_str() {
            "SELECT" => Ok(Statement::Query(self.query()?)),
            "CREATE" => self.create(),
            "DROP" => {
                self.next();
                if self.eat_kw("TABLE") {
                    Ok(Statement::DropTable { name: self.ident()? })
                } else if self.eat_kw("VIEW") {
                    Ok(Statement::DropView { name: self.ident()? })
                } else {
                    self.error("expected TABLE or VIEW")
                }
            }
            "ALTER" => self.alter(),
            "INSERT" => self.insert(),
            "UPDATE" => self.update(),
            "DELETE" => {
                self.next();
                self.expect_kw("FROM")?;
                let table = self.ident()?;
                let where_clause = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
                Ok(Statement::Delete(Delete { table, where_clause }))
            }
            "GRANT" | "REVOKE" => self.dcl(),
            "SET" => self.set_scope(),
            _ => self.error(format!("unknown statement keyword '{word}'")),
        }
    }

    fn query(&mut self) -> PResult<Query> {
        self.expect_kw("SELECT")?;
        let distinct = if self.eat_kw("DISTINCT") {
            true
        } else {
            self.eat_kw("ALL");
            false
        };
        let mut select = Vec::new();
        loop {
            select.push(self.select_item()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        let mut from = Vec::new();
        if self.eat_kw("FROM") {
            from = self.from_list()?;
        }
        let where_clause = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let having = if self.eat_kw("HAVING") { Some(self.expr()?) } else { None };
        let mut order_by = Vec::new();
        if self.eat_kw("ORDER") {
            self.expect_kw("BY")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_kw("DESC") {
                    true
                } else {
                    self.eat_kw("ASC");
                    false
                };
                order_by.push(OrderByItem { expr, desc });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        Ok(Query {
            distinct,
            select,
            from,
            where_clause,
            group_by,
            having,
            order_by,
        })
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if self.eat_sym("*") {
            return Ok(SelectItem::Wildcard);
        }
        if let (Tok::Ident(q), Tok::Sym("."), Tok::Sym("*")) =
            (self.peek().clone(), self.peek_at(1).clone(), self.peek_at(2).clone())
        {
            if !is_reserved(&q) {
                self.pos += 3;
                return Ok(SelectItem::QualifiedWildcard(q));
            }
        }
        let expr = self.expr()?;
        let alias = self.optional_alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn from_list(&mut self) -> PResult<Vec<FromItem>> {
        let mut items = Vec::new();
        loop {
            items.push(self.from_join()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        Ok(items)
    }

    fn from_join(&mut self) -> PResult<FromItem> {
        let mut left = self.from_primary()?;
        loop {
            if self.is_kw("JOIN") || (self.is_kw("INNER") && self.is_kw_at(1, "JOIN")) {
                self.eat_kw("INNER");
                self.next();
                let right = self.from_primary()?;
                self.expect_kw("ON")?;
                let on = self.expr()?;
                left = FromItem::Join {
                    left: Box::new(left),
                    right: Box::new(right),
                    on,
                };
            } else {
                return Ok(left);
            }
        }
    }

    fn from_primary(&mut self) -> PResult<FromItem> {
        if self.is_sym("(") {
            if self.is_kw_at(1, "SELECT") {
                self.next();
                let query = self.query()?;
                self.expect_sym(")")?;
                let alias = match self.optional_alias()? {
                    Some(a) => a,
                    None => return self.error("derived table requires an alias"),
                };
                return Ok(FromItem::Derived {
                    query: Box::new(query),
                    alias,
                });
            }
            self.next();
            let inner = self.from_join()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        let name = self.ident()?;
        let alias = self.optional_alias()?;
        Ok(FromItem::Table { name, alias })
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        let mut left = self.and_expr()?;
        while self.eat_kw("OR") {
            let right = self.and_expr()?;
            left = Expr::binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut left = self.not_expr()?;
        while self.eat_kw("AND") {
            let right = self.not_expr()?;
            left = Expr::binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.is_kw("NOT") {
            if self.is_kw_at(1, "EXISTS") {
                self.next();
                self.next();
                let query = self.paren_query()?;
                return Ok(Expr::Exists {
                    query: Box::new(query),
                    negated: true,
                });
            }
            self.next();
            let inner = self.not_expr()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Not,
                expr: Box::new(inner),
            });
        }
        self.predicate()
    }

    fn paren_query(&mut self) -> PResult<Query> {
        self.expect_sym("(")?;
        let q = self.query()?;
        self.expect_sym(")")?;
        Ok(q)
    }

    fn predicate(&mut self) -> PResult<Expr> {
        let left = self.additive()?;
        let cmp = match self.peek() {
            Tok::Sym("=") => Some(BinaryOp::Eq),
            Tok::Sym("<>") | Tok::Sym("!=") => Some(BinaryOp::NotEq),
            Tok::Sym("<") => Some(BinaryOp::Lt),
            Tok::Sym("<=") => Some(BinaryOp::LtEq),
            Tok::Sym(">") => Some(BinaryOp::Gt),
            Tok::Sym(">=") => Some(BinaryOp::GtEq),
            _ => None,
        };
        if let Some(op) = cmp {
            self.next();
            let right = self.additive()?;
            return Ok(Expr::binary(op, left, right));
        }
        if self.eat_kw("IS") {
            let negated = self.eat_kw("NOT");
            self.expect_kw("NULL")?;
            return Ok(Expr::IsNull {
                expr: Box::new(left),
                negated,
            });
        }
        let negated = if self.is_kw("NOT") && (self.is_kw_at(1, "IN") || self.is_kw_at(1, "BETWEEN")) {
            self.next();
            true
        } else {
            false
        };
        if self.eat_kw("IN") {
            self.expect_sym("(")?;
            if self.is_kw("SELECT") {
                let q = self.query()?;
                self.expect_sym(")")?;
                return Ok(Expr::InSubquery {
                    expr: Box::new(left),
                    query: Box::new(q),
                    negated,
                });
            }
            let mut list = Vec::new();
            if !self.is_sym(")") {
                loop {
                    list.push(self.expr()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
            return Ok(Expr::InList {
                expr: Box::new(left),
                list,
                negated,
            });
        }
        if self.eat_kw("BETWEEN") {
            let lo = self.additive()?;
            self.expect_kw("AND")?;
            let hi = self.additive()?;
            let range = Expr::and(
                Expr::binary(BinaryOp::GtEq, left.clone(), lo),
                Expr::binary(BinaryOp::LtEq, left, hi),
            );
            return Ok(if negated {
                Expr::Unary {
                    op: UnaryOp::Not,
                    expr: Box::new(range),
                }
            } else {
                range
            });
        }
        if negated {
            return self.error("expected IN or BETWEEN after NOT");
        }
        Ok(left)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut left = self.multiplicative()?;
        loop {
            let op = if self.is_sym("+") {
                BinaryOp::Plus
            } else if self.is_sym("-") {
                BinaryOp::Minus
            } else {
                return Ok(left);
            };
            self.next();
            let right = self.multiplicative()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        loop {
            let op = if self.is_sym("*") {
                BinaryOp::Multiply
            } else if self.is_sym("/") {
                BinaryOp::Divide
            } else {
                return Ok(left);
            };
            self.next();
            let right = self.unary()?;
            left = Expr::binary(op, left, right);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym("-") {
            if let Tok::Number(lit) = self.peek().clone() {
                self.next();
                return Ok(Expr::Literal(match lit {
                    Literal::Int(i) => Literal::Int(-i),
                    Literal::Dec(d) => Literal::Dec(-d),
                    other => other,
                }));
            }
            let inner = self.unary()?;
            return Ok(Expr::Unary {
                op: UnaryOp::Neg,
                expr: Box::new(inner),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Number(lit) => {
                self.next();
                Ok(Expr::Literal(lit))
            }
            Tok::Str(s) => {
                self.next();
                Ok(Expr::Literal(Literal::Str(s)))
            }
            Tok::Sym("(") => {
                if self.is_kw_at(1, "SELECT") {
                    let q = self.paren_query()?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                self.next();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(w) if w.eq_ignore_ascii_case("NULL") => {
                self.next();
                Ok(Expr::Literal(Literal::Null))
            }
            Tok::Ident(w) if w.eq_ignore_ascii_case("EXISTS") => {
                self.next();
                let q = self.paren_query()?;
                Ok(Expr::Exists {
                    query: Box::new(q),
                    negated: false,
                })
            }
            Tok::Ident(w) if w.eq_ignore_ascii_case("CASE") => self.case_expr(),
            Tok::Ident(w) if !is_reserved(&w) && !w.starts_with('@') => {
                self.next();
                if self.is_sym("(") {
                    return self.call(w);
                }
                if self.eat_sym(".") {
                    let name = self.ident()?;
                    return Ok(Expr::Column(ColumnRef {
                        qualifier: Some(w),
                        name,
                    }));
                }
                Ok(Expr::Column(ColumnRef {
                    qualifier: None,
                    name: w,
                }))
            }
            _ => self.error(format!("expected expression, found {}", self.describe())),
        }
    }

    fn call(&mut self, name: String) -> PResult<Expr> {
        self.expect_sym("(")?;
        if let Some(func) = AggFunc::from_name(&name) {
            if func == AggFunc::Count && self.eat_sym("*") {
                self.expect_sym(")")?;
                return Ok(Expr::Aggregate {
                    func,
                    arg: None,
                    distinct: false,
                });
            }
            let distinct = self.eat_kw("DISTINCT");
            let arg = self.expr()?;
            self.expect_sym(")")?;
            return Ok(Expr::Aggregate {
                func,
                arg: Some(Box::new(arg)),
                distinct,
            });
        }
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        for direction in [Direction::ToUniversal, Direction::FromUniversal] {
            if let Some(pair) = strip_suffix_ci(&name, direction.suffix()) {
                if args.len() != 2 {
                    return self.error(format!("{name} expects 2 arguments"));
                }
                let mut it = args.into_iter();
                let value = it.next().unwrap();
                let tenant = it.next().unwrap();
                return Ok(Expr::convert(pair, direction, value, tenant));
            }
        }
        Ok(Expr::Function {
            name: name.to_ascii_uppercase(),
            args,
        })
    }

    fn case_expr(&mut self) -> PResult<Expr> {
        self.expect_kw("CASE")?;
        let operand = if self.is_kw("WHEN") {
            None
        } else {
            Some(Box::new(self.expr()?))
        };
        let mut branches = Vec::new();
        while self.eat_kw("WHEN") {
            let w = self.expr()?;
            self.expect_kw("THEN")?;
            let t = self.expr()?;
            branches.push((w, t));
        }
        if branches.is_empty() {
            return self.error("CASE requires at least one WHEN");
        }
        let else_expr = if self.eat_kw("ELSE") {
            Some(Box::new(self.expr()?))
        } else {
            None
        };
        self.expect_kw("END")?;
        Ok(Expr::Case {
            operand,
            branches,
            else_expr,
        })
    }

    fn create(&mut self) -> PResult<Statement> {
        self.expect_kw("CREATE")?;
        if self.eat_kw("VIEW") {
            let name = self.ident()?;
            self.expect_kw("AS")?;
            let query = self.query()?;
            return Ok(Statement::CreateView {
                name,
                query: Box::new(query),
            });
        }
        self.expect_kw("TABLE")?;
        let name = self.ident()?;
        let generality = if self.eat_kw("GLOBAL") {
            Some(Generality::Global)
        } else if self.eat_kw("SPECIFIC") {
            Some(Generality::Specific)
        } else {
            None
        };
        self.expect_sym("(")?;
        let mut columns = Vec::new();
        let mut constraints = Vec::new();
        loop {
            if self.is_kw("CONSTRAINT") || self.is_kw("PRIMARY") || self.is_kw("FOREIGN") || self.is_kw("CHECK") {
                constraints.push(self.table_constraint()?);
            } else {
                columns.push(self.column_def()?);
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(Statement::CreateTable(CreateTable {
            name,
            generality,
            columns,
            constraints,
        }))
    }

    fn column_def(&mut self) -> PResult<ColumnDef> {
        let name = self.ident()?;
        let type_name = self.ident()?;
        let mut params = Vec::new();
        if self.eat_sym("(") {
            loop {
                match self.next() {
                    Tok::Number(Literal::Int(n)) if n >= 0 => params.push(n as u32),
                    _ => return self.error("expected type parameter"),
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
        }
        let data_type = DataType::new(&type_name, params);
        if data_type.scalar_type().is_none() {
            return self.error(format!("unsupported column type {type_name}"));
        }
        let mut def = ColumnDef {
            name,
            data_type,
            not_null: false,
            default: None,
            annotation: None,
        };
        loop {
            if self.is_kw("NOT") && self.is_kw_at(1, "NULL") {
                self.next();
                self.next();
                def.not_null = true;
            } else if self.eat_kw("DEFAULT") {
                def.default = Some(self.unary()?);
            } else if self.eat_kw("COMPARABLE") {
                def.annotation = Some(ColumnAnnotation::Comparable);
            } else if self.eat_kw("SPECIFIC") {
                def.annotation = Some(ColumnAnnotation::Specific);
            } else if self.eat_kw("CONVERTIBLE") {
                let to_fn = self.function_ref()?;
                let from_fn = self.function_ref()?;
                def.annotation = Some(ColumnAnnotation::Convertible { to_fn, from_fn });
            } else {
                return Ok(def);
            }
        }
    }

    fn function_ref(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if s.starts_with('@') => {
                self.next();
                Ok(s[1..].to_string())
            }
            _ => self.error("expected @function reference"),
        }
    }

    fn ident_list(&mut self) -> PResult<Vec<String>> {
        self.expect_sym("(")?;
        let mut out = Vec::new();
        loop {
            out.push(self.ident()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(out)
    }

    fn table_constraint(&mut self) -> PResult<TableConstraint> {
        let name = if self.eat_kw("CONSTRAINT") { Some(self.ident()?) } else { None };
        let kind = if self.eat_kw("PRIMARY") {
            self.expect_kw("KEY")?;
            ConstraintKind::PrimaryKey(self.ident_list()?)
        } else if self.eat_kw("FOREIGN") {
            self.expect_kw("KEY")?;
            let columns = self.ident_list()?;
            self.expect_kw("REFERENCES")?;
            let ref_table = self.ident()?;
            let ref_columns = self.ident_list()?;
            ConstraintKind::ForeignKey {
                columns,
                ref_table,
                ref_columns,
            }
        } else if self.eat_kw("CHECK") {
            self.expect_sym("(")?;
            let e = self.expr()?;
            self.expect_sym(")")?;
            ConstraintKind::Check(e)
        } else {
            return self.error("expected PRIMARY KEY, FOREIGN KEY or CHECK");
        };
        Ok(TableConstraint { name, kind })
    }

    fn alter(&mut self) -> PResult<Statement> {
        self.expect_kw("ALTER")?;
        self.expect_kw("TABLE")?;
        let name = self.ident()?;
        let action = if self.eat_kw("ADD") {
            if self.is_kw("CONSTRAINT") || self.is_kw("PRIMARY") || self.is_kw("FOREIGN") || self.is_kw("CHECK") {
                AlterAction::AddConstraint(self.table_constraint()?)
            } else {
                self.eat_kw("COLUMN");
                AlterAction::AddColumn(self.column_def()?)
            }
        } else if self.eat_kw("DROP") {
            self.eat_kw("COLUMN");
            AlterAction::DropColumn(self.ident()?)
        } else {
            return self.error("expected ADD or DROP");
        };
        Ok(Statement::AlterTable { name, action })
    }

    fn insert(&mut self) -> PResult<Statement> {
        self.expect_kw("INSERT")?;
        self.expect_kw("INTO")?;
        let table = self.ident()?;
        let mut columns = Vec::new();
        if self.is_sym("(") && !self.is_kw_at(1, "SELECT") {
            columns = self.ident_list()?;
        }
        let source = if self.eat_kw("VALUES") {
            if matches!(self.peek(), Tok::Ident(_)) {
                // `VALUES a, b, (SELECT ...)`: column list followed by a sub-query
                loop {
                    columns.push(self.ident()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                InsertSource::Query(Box::new(self.paren_query()?))
            } else {
                let mut rows = Vec::new();
                loop {
                    self.expect_sym("(")?;
                    let mut row = Vec::new();
                    loop {
                        row.push(self.expr()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym(")")?;
                    rows.push(row);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                InsertSource::Values(rows)
            }
        } else if self.is_kw("SELECT") {
            InsertSource::Query(Box::new(self.query()?))
        } else if self.is_sym("(") {
            InsertSource::Query(Box::new(self.paren_query()?))
        } else {
            return self.error("expected VALUES or SELECT");
        };
        Ok(Statement::Insert(Insert { table, columns, source }))
    }

    fn update(&mut self) -> PResult<Statement> {
        self.expect_kw("UPDATE")?;
        let table = self.ident()?;
        self.expect_kw("SET")?;
        let mut assignments = Vec::new();
        loop {
            let col = self.ident()?;
            self.expect_sym("=")?;
            assignments.push((col, self.expr()?));
            if !self.eat_sym(",") {
                break;
            }
        }
        let where_clause = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        Ok(Statement::Update(Update {
            table,
            assignments,
            where_clause,
        }))
    }

    fn dcl(&mut self) -> PResult<Statement> {
        let grant = self.is_kw("GRANT");
        self.next();
        let mut rights = Vec::new();
        if self.eat_kw("ALL") {
            self.eat_kw("PRIVILEGES");
            rights.extend(Right::ALL);
        } else {
            loop {
                let Tok::Ident(w) = self.peek().clone() else {
                    return self.error("expected privilege");
                };
                match Right::from_keyword(&w) {
                    Some(r) => {
                        self.next();
                        if !rights.contains(&r) {
                            rights.push(r);
                        }
                    }
                    None => return self.error(format!("unknown privilege '{w}'")),
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_kw("ON")?;
        let table = self.ident()?;
        if !(self.eat_kw("TO") || self.eat_kw("FROM")) {
            return self.error("expected TO or FROM");
        }
        let grantee = if self.eat_kw("ALL") {
            Grantee::All
        } else {
            match self.next() {
                Tok::Number(Literal::Int(n)) if n >= 0 && n <= u32::MAX as i64 => Grantee::Tenant(TenantId(n as u32)),
                _ => return self.error("expected tenant id or ALL"),
            }
        };
        let p = Privileges { rights, table, grantee };
        Ok(if grant { Statement::Grant(p) } else { Statement::Revoke(p) })
    }

    fn set_scope(&mut self) -> PResult<Statement> {
        self.expect_kw("SET")?;
        self.expect_kw("SCOPE")?;
        self.expect_sym("=")?;
        let (line, col) = (self.toks[self.pos].line, self.toks[self.pos].col);
        let Tok::QuotedBlock(text) = self.next() else {
            return self.error("expected double-quoted scope expression");
        };
        parse_scope(&text).map(Statement::SetScope).map_err(|e| SyntaxError {
            line: line + e.line - 1,
            col: if e.line == 1 { col + e.col } else { e.col },
            message: e.message,
        })
    }

    fn scope_body(&mut self) -> PResult<ScopeSpec> {
        if self.eat_kw("IN") {
            self.expect_sym("(")?;
            let mut ids = Vec::new();
            if !self.is_sym(")") {
                loop {
                    match self.next() {
                        Tok::Number(Literal::Int(n)) if n >= 0 && n <= u32::MAX as i64 => ids.push(TenantId(n as u32)),
                        _ => return self.error("expected tenant id"),
                    }
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
            return Ok(ScopeSpec::Simple(ids));
        }
        self.expect_kw("FROM")?;
        let from = self.from_list()?;
        let where_clause = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        Ok(ScopeSpec::Complex { from, where_clause })
    }

    fn finish(&mut self) -> PResult<()> {
        self.eat_sym(";");
        if *self.peek() != Tok::Eof {
            return self.error(format!("unexpected {} after statement", self.describe()));
        }
        Ok(())
    }
}

/// Parse exactly one statement (a trailing `;` is allowed).
pub fn parse(text: &str) -> Result<Statement, SyntaxError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let s = p.statement()?;
    p.finish()?;
    Ok(s)
}

/// Parse a `;`-separated script.
pub fn parse_statements(text: &str) -> Result<Vec<Statement>, SyntaxError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let mut out = Vec::new();
    loop {
        while p.eat_sym(";") {}
        if *p.peek() == Tok::Eof {
            return Ok(out);
        }
        out.push(p.statement()?);
        if !p.eat_sym(";") && *p.peek() != Tok::Eof {
            return p.error(format!("expected ';', found {}", p.describe()));
        }
    }
}

pub fn parse_query(text: &str) -> Result<Query, SyntaxError> {
    match parse(text)? {
        Statement::Query(q) => Ok(q),
        _ => Err(SyntaxError {
            line: 1,
            col: 1,
            message: "expected a SELECT query".into(),
        }),
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parse the body of a `SET SCOPE` string, i.e. `IN (..)` or `FROM .. [WHERE ..]`.
pub fn parse_scope(text: &str) -> Result<ScopeSpec, SyntaxError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let s = p.scope_body()?;
    p.finish()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes_scale_exactly() {
        assert_eq!(parse_expr("180K").unwrap(), Expr::int(180_000));
        assert_eq!(parse_expr("1M").unwrap(), Expr::int(1_000_000));
        assert_eq!(parse_expr("1.5K").unwrap(), Expr::int(1_500));
        assert_eq!(parse_expr("2.5").unwrap(), Expr::Literal(Literal::Dec(2.5)));
    }

    #[test]
    fn minus_is_binary_after_operand() {
        let e = parse_expr("x-5").unwrap();
        assert_eq!(e, Expr::binary(BinaryOp::Minus, Expr::col("x"), Expr::int(5)));
        assert_eq!(parse_expr("-5").unwrap(), Expr::int(-5));
    }

    #[test]
    fn simple_and_complex_scope() {
        assert_eq!(
            parse(r#"SET SCOPE = "IN (1,3,42)""#).unwrap(),
            Statement::SetScope(ScopeSpec::Simple(vec![TenantId(1), TenantId(3), TenantId(42)]))
        );
        assert_eq!(parse(r#"SET SCOPE = "IN ()""#).unwrap(), Statement::SetScope(ScopeSpec::Simple(vec![])));
        let Statement::SetScope(ScopeSpec::Complex { from, where_clause }) =
            parse(r#"SET SCOPE = "FROM Employees WHERE E_salary > 180K""#).unwrap()
        else {
            panic!("expected complex scope");
        };
        assert_eq!(from, vec![FromItem::table("Employees", None)]);
        assert_eq!(
            where_clause,
            Some(Expr::binary(BinaryOp::Gt, Expr::col("E_salary"), Expr::int(180_000)))
        );
    }

    #[test]
    fn misspelled_keyword_is_rejected_with_position() {
        let e = parse("SELEC x FROM t").unwrap_err();
        assert_eq!((e.line, e.col), (1, 1));
        let e = parse("SELECT x\nFROM t WHERE").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn conversion_calls_are_recognized() {
        let e = parse_expr("currencyToUniversal(E_salary, E_ttid)").unwrap();
        assert!(matches!(e, Expr::Convert { ref pair, direction: Direction::ToUniversal, .. } if pair == "currency"));
    }

    #[test]
    fn create_table_with_annotations() {
        let s = parse(
            "CREATE TABLE Employees SPECIFIC (
               E_emp_id INTEGER NOT NULL SPECIFIC,
               E_salary DECIMAL(15,2) NOT NULL CONVERTIBLE @currencyToUniversal @currencyFromUniversal,
               CONSTRAINT fk_emp FOREIGN KEY (E_role_id) REFERENCES Roles (R_role_id))",
        )
        .unwrap();
        let Statement::CreateTable(ct) = s else { panic!() };
        assert_eq!(ct.generality, Some(Generality::Specific));
        assert_eq!(ct.columns[1].annotation.as_ref().unwrap().pair_name().as_deref(), Some("currency"));
        assert_eq!(ct.constraints.len(), 1);
    }

    #[test]
    fn insert_with_column_list_before_subquery() {
        let s = parse(
            "INSERT INTO Employees VALUES E_name, E_reg_id, E_salary, E_age (
               SELECT E_name, E_reg_id, E_salary, E_age FROM Employees WHERE E_age > 40)",
        )
        .unwrap();
        let Statement::Insert(ins) = s else { panic!() };
        assert_eq!(ins.columns.len(), 4);
        assert!(matches!(ins.source, InsertSource::Query(_)));
    }
}
