//! Recursive-descent parser. Lookahead is bounded at two tokens; a counter
//! tracks the deepest peek so debug builds can assert the bound.

use std::cell::Cell;

use thiserror::Error;

use crate::ast::*;
use crate::lexer::{unescape_string, Pos, Token, TokenKind};
use crate::operators::Op;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: expected {expected}, found {found}")]
pub struct ParseError {
    pub pos: Pos,
    pub expected: String,
    pub found: String,
}

pub struct Parser<'t> {
    tokens: &'t [Token],
    at: usize,
    max_lookahead: Cell<usize>,
}

/// Parses a single module (the file's first) from a token sequence ending in
/// eof.
pub fn parse(tokens: &[Token]) -> Result<AstModule, ParseError> {
    let mut p = Parser::new(tokens);
    let module = p.module()?;
    Ok(module)
}

/// Parses a whole file, which may concatenate several modules; the first one
/// is the entry module.
pub fn parse_program(tokens: &[Token]) -> Result<Vec<AstModule>, ParseError> {
    Parser::new(tokens).parse_modules()
}

impl<'t> Parser<'t> {
    pub fn new(tokens: &'t [Token]) -> Parser<'t> {
        assert!(
            matches!(tokens.last(), Some(t) if t.kind == TokenKind::Eof),
            "token sequence must end with eof"
        );
        Parser {
            tokens,
            at: 0,
            max_lookahead: Cell::new(0),
        }
    }

    /// Parses every module in the token stream.
    pub fn parse_modules(&mut self) -> Result<Vec<AstModule>, ParseError> {
        let mut modules = vec![self.module()?];
        while !self.at_eof() {
            modules.push(self.module()?);
        }
        Ok(modules)
    }

    /// Deepest lookahead used so far, in tokens (1 = current token only).
    pub fn max_lookahead(&self) -> usize {
        self.max_lookahead.get() + 1
    }

    fn peek(&self, k: usize) -> &Token {
        debug_assert!(k <= 1, "parser exceeded LL(2) lookahead");
        if k > self.max_lookahead.get() {
            self.max_lookahead.set(k);
        }
        let i = (self.at + k).min(self.tokens.len() - 1);
        &self.tokens[i]
    }

    fn cur(&self) -> &Token {
        self.peek(0)
    }

    fn at_eof(&self) -> bool {
        self.cur().kind == TokenKind::Eof
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn found(&self) -> String {
        let t = self.cur();
        match t.kind {
            TokenKind::Eof => "eof".to_string(),
            _ => format!("'{}'", t.lexeme),
        }
    }

    fn error<T>(&self, expected: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.cur().pos,
            expected: expected.into(),
            found: self.found(),
        })
    }

    fn is_keyword(&self, word: &str) -> bool {
        let t = self.cur();
        t.kind == TokenKind::Keyword && t.lexeme == word
    }

    fn is_punct(&self, p: &str) -> bool {
        let t = self.cur();
        t.kind == TokenKind::Punctuation && t.lexeme == p
    }

    fn is_op(&self, op: &str) -> bool {
        let t = self.cur();
        t.kind == TokenKind::Operator && t.lexeme == op
    }

    fn eat_keyword(&mut self, word: &str) -> Result<Pos, ParseError> {
        if self.is_keyword(word) {
            Ok(self.bump().pos)
        } else {
            self.error(format!("'{word}'"))
        }
    }

    fn eat_punct(&mut self, p: &str) -> Result<Pos, ParseError> {
        if self.is_punct(p) {
            Ok(self.bump().pos)
        } else {
            self.error(format!("'{p}'"))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        if self.cur().kind == TokenKind::Identifier {
            let t = self.bump();
            Ok((t.lexeme, t.pos))
        } else {
            self.error("identifier")
        }
    }

    fn qname(&mut self) -> Result<(String, Pos), ParseError> {
        let (mut name, pos) = self.ident()?;
        while self.is_punct(".") {
            self.bump();
            let (part, _) = self.ident()?;
            name.push('.');
            name.push_str(&part);
        }
        Ok((name, pos))
    }

    fn module(&mut self) -> Result<AstModule, ParseError> {
        let pos = self.eat_keyword("module")?;
        let (name, _) = self.qname()?;
        let mut module = AstModule {
            name,
            imports: Vec::new(),
            structures: Vec::new(),
            augmentations: Vec::new(),
            functions: Vec::new(),
            pos,
        };
        while self.is_keyword("import") {
            self.bump();
            let (name, pos) = self.qname()?;
            module.imports.push((name, pos));
        }
        loop {
            if self.is_keyword("struct") {
                module.structures.push(self.structure()?);
            } else if self.is_keyword("augment") {
                module.augmentations.push(self.augment()?);
            } else if self.is_keyword("function") || self.is_keyword("local") {
                module.functions.push(self.function()?);
            } else if self.at_eof() || self.is_keyword("module") {
                break;
            } else {
                return self.error("'struct', 'augment', 'function', or 'local'");
            }
        }
        check_unique(
            module.structures.iter().map(|s| (&s.name, s.pos)),
            "duplicate structure name",
        )?;
        check_unique(
            module.functions.iter().map(|f| (&f.name, f.pos)),
            "duplicate function name",
        )?;
        Ok(module)
    }

    fn structure(&mut self) -> Result<StructureDecl, ParseError> {
        let pos = self.eat_keyword("struct")?;
        let (name, _) = self.ident()?;
        self.eat_punct("=")?;
        self.eat_punct("{")?;
        let mut fields = Vec::new();
        let (first, first_pos) = self.ident()?;
        fields.push((first, first_pos));
        while self.is_punct(",") {
            self.bump();
            fields.push(self.ident()?);
        }
        self.eat_punct("}")?;
        check_unique(
            fields.iter().map(|(n, p)| (n, *p)),
            "duplicate field name",
        )?;
        Ok(StructureDecl {
            name,
            fields: fields.into_iter().map(|(n, _)| n).collect(),
            pos,
        })
    }

    fn augment(&mut self) -> Result<AugmentDecl, ParseError> {
        let pos = self.eat_keyword("augment")?;
        let (target, _) = self.qname()?;
        self.eat_punct("{")?;
        let mut functions = Vec::new();
        while self.is_keyword("function") || self.is_keyword("local") {
            functions.push(self.function()?);
        }
        self.eat_punct("}")?;
        check_unique(
            functions.iter().map(|f| (&f.name, f.pos)),
            "duplicate function name",
        )?;
        Ok(AugmentDecl {
            target,
            functions,
            pos,
        })
    }

    fn function(&mut self) -> Result<FunctionDecl, ParseError> {
        let local = if self.is_keyword("local") {
            self.bump();
            true
        } else {
            false
        };
        let pos = self.eat_keyword("function")?;
        let (name, _) = self.ident()?;
        self.eat_punct("=")?;
        let (params, body) = self.lambda_tail()?;
        Ok(FunctionDecl {
            name,
            local,
            params,
            body,
            synthetic: false,
            pos,
        })
    }

    /// `"|" [params] "|" ( block | "->" expr )` — shared by function
    /// declarations and lambda expressions.
    fn lambda_tail(&mut self) -> Result<(Vec<String>, Block), ParseError> {
        self.eat_punct("|")?;
        let mut params = Vec::new();
        if self.cur().kind == TokenKind::Identifier {
            params.push(self.ident()?);
            while self.is_punct(",") {
                self.bump();
                params.push(self.ident()?);
            }
        }
        self.eat_punct("|")?;
        check_unique(params.iter().map(|(n, p)| (n, *p)), "duplicate parameter")?;
        let body = if self.is_punct("->") {
            let arrow = self.bump().pos;
            let value = self.expr()?;
            Block {
                pos: arrow,
                stmts: vec![Stmt::Return {
                    value: Some(value),
                    pos: arrow,
                }],
            }
        } else {
            self.block()?
        };
        Ok((params.into_iter().map(|(n, _)| n).collect(), body))
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        let pos = self.eat_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.error("'}'");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(Block { stmts, pos })
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        if self.is_keyword("let") || self.is_keyword("var") {
            let keyword = self.bump();
            let (name, _) = self.ident()?;
            self.eat_punct("=")?;
            let value = self.expr()?;
            return Ok(if keyword.lexeme == "let" {
                Stmt::Let {
                    name,
                    value,
                    pos: keyword.pos,
                }
            } else {
                Stmt::Var {
                    name,
                    value,
                    pos: keyword.pos,
                }
            });
        }
        if self.is_keyword("if") {
            return self.if_stmt();
        }
        if self.is_keyword("while") {
            let pos = self.bump().pos;
            let cond = self.expr()?;
            let body = self.block()?;
            return Ok(Stmt::While { cond, body, pos });
        }
        if self.is_keyword("return") {
            let pos = self.bump().pos;
            let value = if self.starts_expression() {
                Some(self.expr()?)
            } else {
                None
            };
            return Ok(Stmt::Return { value, pos });
        }
        // `IDENT = expr` is an assignment; anything else is an expression
        // statement. Two tokens of lookahead decide.
        if self.cur().kind == TokenKind::Identifier
            && self.peek(1).kind == TokenKind::Punctuation
            && self.peek(1).lexeme == "="
        {
            let (name, pos) = self.ident()?;
            self.bump();
            let value = self.expr()?;
            return Ok(Stmt::Assign { name, value, pos });
        }
        Ok(Stmt::Expr(self.expr()?))
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.eat_keyword("if")?;
        let cond = self.expr()?;
        let then = self.block()?;
        let alt = if self.is_keyword("else") {
            self.bump();
            if self.is_keyword("if") {
                let nested = self.if_stmt()?;
                let nested_pos = nested.pos();
                Some(Block {
                    stmts: vec![nested],
                    pos: nested_pos,
                })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If {
            cond,
            then,
            alt,
            pos,
        })
    }

    fn starts_expression(&self) -> bool {
        let t = self.cur();
        match t.kind {
            TokenKind::IntLiteral
            | TokenKind::LongLiteral
            | TokenKind::DoubleLiteral
            | TokenKind::StringLiteral
            | TokenKind::Identifier => true,
            TokenKind::Keyword => {
                matches!(t.lexeme.as_str(), "true" | "false" | "null" | "not" | "list")
            }
            TokenKind::Operator => t.lexeme == "-",
            TokenKind::Punctuation => matches!(t.lexeme.as_str(), "(" | "[" | "|"),
            TokenKind::Eof => false,
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.is_keyword("or") {
            let pos = self.bump().pos;
            let rhs = self.and_expr()?;
            lhs = Expr::Binary {
                op: Op::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.equality_expr()?;
        while self.is_keyword("and") {
            let pos = self.bump().pos;
            let rhs = self.equality_expr()?;
            lhs = Expr::Binary {
                op: Op::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn equality_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.relational_expr()?;
        loop {
            let op = if self.is_op("==") {
                Op::Equals
            } else if self.is_op("!=") {
                Op::NotEquals
            } else {
                break;
            };
            let pos = self.bump().pos;
            let rhs = self.relational_expr()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn relational_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.additive_expr()?;
        loop {
            let op = if self.is_op("<") {
                Op::Less
            } else if self.is_op("<=") {
                Op::LessOrEquals
            } else if self.is_op(">") {
                Op::More
            } else if self.is_op(">=") {
                Op::MoreOrEquals
            } else {
                break;
            };
            let pos = self.bump().pos;
            let rhs = self.additive_expr()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn additive_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative_expr()?;
        loop {
            let op = if self.is_op("+") {
                Op::Plus
            } else if self.is_op("-") {
                Op::Minus
            } else {
                break;
            };
            let pos = self.bump().pos;
            let rhs = self.multiplicative_expr()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn multiplicative_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = if self.is_op("*") {
                Op::Times
            } else if self.is_op("/") {
                Op::Divide
            } else if self.is_op("%") {
                Op::Modulo
            } else {
                break;
            };
            let pos = self.bump().pos;
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        if self.is_op("-") {
            let pos = self.bump().pos;
            let expr = self.unary_expr()?;
            return Ok(Expr::Unary {
                op: Op::Neg,
                expr: Box::new(expr),
                pos,
            });
        }
        if self.is_keyword("not") {
            let pos = self.bump().pos;
            let expr = self.unary_expr()?;
            return Ok(Expr::Unary {
                op: Op::Not,
                expr: Box::new(expr),
                pos,
            });
        }
        self.postfix_expr()
    }

    fn postfix_expr(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.primary()?;
        while self.is_punct(":") {
            let pos = self.bump().pos;
            let (name, _) = self.ident()?;
            self.eat_punct("(")?;
            let args = self.call_args()?;
            expr = Expr::MethodCall {
                recv: Box::new(expr),
                name,
                args,
                pos,
            };
        }
        Ok(expr)
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if !self.is_punct(")") {
            args.push(self.expr()?);
            while self.is_punct(",") {
                self.bump();
                args.push(self.expr()?);
            }
        }
        self.eat_punct(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.cur().clone();
        match t.kind {
            TokenKind::IntLiteral => {
                self.bump();
                Ok(Expr::IntLit(t.lexeme.parse().unwrap(), t.pos))
            }
            TokenKind::LongLiteral => {
                self.bump();
                let digits = &t.lexeme[..t.lexeme.len() - 2];
                Ok(Expr::LongLit(digits.parse().unwrap(), t.pos))
            }
            TokenKind::DoubleLiteral => {
                self.bump();
                Ok(Expr::DoubleLit(t.lexeme.parse().unwrap(), t.pos))
            }
            TokenKind::StringLiteral => {
                self.bump();
                Ok(Expr::StrLit(unescape_string(&t.lexeme), t.pos))
            }
            TokenKind::Keyword => match t.lexeme.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::BoolLit(true, t.pos))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::BoolLit(false, t.pos))
                }
                "null" => {
                    self.bump();
                    Ok(Expr::NullLit(t.pos))
                }
                "list" => {
                    self.bump();
                    self.eat_punct("[")?;
                    let items = self.bracket_items()?;
                    Ok(Expr::ListLit(items, t.pos))
                }
                _ => self.error("an expression"),
            },
            TokenKind::Identifier => {
                if self.peek(1).kind == TokenKind::Punctuation && self.peek(1).lexeme == "(" {
                    self.bump();
                    self.bump();
                    let args = self.call_args()?;
                    Ok(Expr::Call {
                        name: t.lexeme,
                        args,
                        pos: t.pos,
                    })
                } else {
                    self.bump();
                    Ok(Expr::Reference(t.lexeme, t.pos))
                }
            }
            TokenKind::Punctuation => match t.lexeme.as_str() {
                "(" => {
                    self.bump();
                    let inner = self.expr()?;
                    self.eat_punct(")")?;
                    Ok(inner)
                }
                "[" => {
                    self.bump();
                    let items = self.bracket_items()?;
                    Ok(Expr::TupleLit(items, t.pos))
                }
                "|" => {
                    let (params, body) = self.lambda_tail()?;
                    Ok(Expr::Lambda {
                        params,
                        body: Box::new(body),
                        pos: t.pos,
                    })
                }
                _ => self.error("an expression"),
            },
            _ => self.error("an expression"),
        }
    }

    fn bracket_items(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        if !self.is_punct("]") {
            items.push(self.expr()?);
            while self.is_punct(",") {
                self.bump();
                items.push(self.expr()?);
            }
        }
        self.eat_punct("]")?;
        Ok(items)
    }
}

fn check_unique<'a>(
    names: impl Iterator<Item = (&'a String, Pos)>,
    what: &str,
) -> Result<(), ParseError> {
    let mut seen: Vec<&str> = Vec::new();
    for (name, pos) in names {
        if seen.contains(&name.as_str()) {
            return Err(ParseError {
                pos,
                expected: format!("{what} '{name}' to be unique"),
                found: format!("'{name}'"),
            });
        }
        seen.push(name);
    }
    Ok(())
}
