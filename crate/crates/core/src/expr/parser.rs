use super::{BinOp, Expr, Func, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(text: &'a str) -> Result<Vec<(Token, usize)>> {
        let mut lexer = Lexer {
            src: text.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            let tok = lexer.next_token()?;
            let done = tok.0 == Token::End;
            out.push(tok);
            if done {
                return Ok(out);
            }
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn next_token(&mut self) -> Result<(Token, usize)> {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek() else {
            return Ok((Token::End, start));
        };
        let tok = match c {
            b'0'..=b'9' | b'.' => self.number()?,
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_')
                {
                    self.pos += 1;
                }
                Token::Ident(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Token::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            other => {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok((tok, start))
    }

    fn number(&mut self) -> Result<Token> {
        let start = self.pos;
        let digits = |lx: &mut Self| {
            while lx.peek().is_some_and(|c| c.is_ascii_digit()) {
                lx.pos += 1;
            }
        };
        digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let after = self.src.get(self.pos + 1).copied();
            let after2 = self.src.get(self.pos + 2).copied();
            let has_exponent = match after {
                Some(c) if c.is_ascii_digit() => true,
                Some(b'+' | b'-') => after2.is_some_and(|c| c.is_ascii_digit()),
                _ => false,
            };
            if has_exponent {
                self.pos += 2;
                digits(self);
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        text.parse::<f64>()
            .map(Token::Num)
            .map_err(|_| Error::Syntax {
                position: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    at: usize,
}

/// Parses an expression.
///
/// Precedence from tightest: `^` (right-associative), unary minus,
/// `* /`, `+ -`. So `-x^2` is `-(x^2)` and `2^-1` is `2^(-1)`.
pub fn parse(text: &str) -> Result<Expr> {
    let mut parser = Parser {
        tokens: Lexer::tokenize(text)?,
        at: 0,
    };
    let expr = parser.sum()?;
    match parser.peek() {
        Token::End => Ok(expr),
        tok => Err(parser.unexpected(&tok.clone())),
    }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at].0
    }

    fn position(&self) -> usize {
        self.tokens[self.at].1
    }

    fn bump(&mut self) -> Token {
        let tok = self.tokens[self.at].0.clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        tok
    }

    fn unexpected(&self, tok: &Token) -> Error {
        let message = match tok {
            Token::End => "unexpected end of input".to_string(),
            Token::Num(v) => format!("unexpected number {v}"),
            Token::Ident(name) => format!("unexpected identifier `{name}`"),
            Token::Op(c) => format!("unexpected operator `{c}`"),
            Token::LParen => "unexpected `(`".to_string(),
            Token::RParen => "unexpected `)`".to_string(),
        };
        Error::Syntax {
            position: self.position(),
            message,
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Token::Op('+') => BinOp::Add,
                Token::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Op('*') => BinOp::Mul,
                Token::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Token::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if *self.peek() == Token::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let position = self.position();
        let tok = self.peek().clone();
        match tok {
            Token::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Token::LParen => {
                self.bump();
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Token::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Token::LParen {
                        return Err(Error::Syntax {
                            position: self.position(),
                            message: format!("expected `(` after `{name}`"),
                        });
                    }
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                match Var::from_name(&name) {
                    Some(var) => Ok(Expr::Var(var)),
                    None => Err(Error::UnknownIdentifier { name, position }),
                }
            }
            other => Err(self.unexpected(&other)),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.peek() {
            Token::RParen => {
                self.bump();
                Ok(())
            }
            other => Err(self.unexpected(&other.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn parses_sum_of_products() {
        let e = parse("x*y + eps*x").unwrap();
        let expected = Expr::Binary(
            BinOp::Add,
            b(Expr::Binary(BinOp::Mul, b(Expr::Var(Var::X)), b(Expr::Var(Var::Y)))),
            b(Expr::Binary(BinOp::Mul, b(Expr::Var(Var::Eps)), b(Expr::Var(Var::X)))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn parses_function_call() {
        let e = parse("sin(pi*z)").unwrap();
        assert_eq!(
            e,
            Expr::Call(
                Func::Sin,
                b(Expr::Binary(BinOp::Mul, b(Expr::Pi), b(Expr::Var(Var::Z))))
            )
        );
    }

    #[test]
    fn unbalanced_paren_reports_position() {
        match parse("x*(") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse("(x + 1") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 6),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            parse("2*foo"),
            Err(Error::UnknownIdentifier {
                name: "foo".into(),
                position: 2
            })
        );
        // abs is intentionally outside the grammar.
        assert!(matches!(
            parse("abs(x)"),
            Err(Error::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("-x^2").unwrap();
        assert!(matches!(e, Expr::Neg(_)));
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.evaluate(&Default::default()).unwrap(), 512.0);
        let e = parse("2^-1").unwrap();
        assert_eq!(e.evaluate(&Default::default()).unwrap(), 0.5);
        let e = parse("8/2/2").unwrap();
        assert_eq!(e.evaluate(&Default::default()).unwrap(), 2.0);
        let e = parse("1 - 2 - 3").unwrap();
        assert_eq!(e.evaluate(&Default::default()).unwrap(), -4.0);
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(parse("1e-3").unwrap(), Expr::Num(1e-3));
        assert_eq!(parse("2.5E+2").unwrap(), Expr::Num(250.0));
        assert_eq!(parse(".5").unwrap(), Expr::Num(0.5));
        // `2e` followed by a letter is not an exponent.
        assert!(parse("2eps").is_err());
    }

    #[test]
    fn misc_errors() {
        assert!(parse("").is_err());
        assert!(parse("x +").is_err());
        assert!(parse("sin x").is_err());
        assert!(parse("x $ y").is_err());
        assert!(parse("x y").is_err());
    }
}
