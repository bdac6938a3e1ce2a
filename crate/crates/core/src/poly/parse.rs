//! Infix parser for polynomial systems.
//!
//! Grammar (one polynomial per line, no implicit multiplication):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | identifier | '(' expr ')'
//! ```
//!
//! Division is accepted only by constant expressions, so `3/2*x` works but
//! `1/x` is rejected.

use super::{PolyError, PolySystem, Polynomial, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num { value: f64, integral: bool },
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str, line: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, line, col });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut integral = true;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            // optional exponent, only when digits follow
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| PolyError::Syntax {
                line,
                col,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push(Token { tok: Tok::Num { value, integral }, line, col });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, col });
            continue;
        }
        return Err(PolyError::Syntax { line, col, msg: format!("unexpected character `{c}`") });
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    vars: &'a [String],
    line: usize,
    end_col: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or((self.line, self.end_col), |t| (t.line, t.col))
    }

    fn syntax(&self, msg: impl Into<String>) -> PolyError {
        let (line, col) = self.here();
        PolyError::Syntax { line, col, msg: msg.into() }
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    acc = acc.mul(&self.unary()?);
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    let (line, col) = self.here();
                    let d = self.unary()?;
                    let c = d.constant_term();
                    if d.terms().len() > 1 || (d.terms().len() == 1 && d.degree() > 0) {
                        return Err(PolyError::NonConstantDivisor { line, col });
                    }
                    if c == 0.0 {
                        return Err(PolyError::Syntax { line, col, msg: "division by zero".into() });
                    }
                    acc = acc.scale(1.0 / c);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Polynomial> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(self.unary()?.scale(-1.0))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial> {
        let base = self.atom()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.pos += 1;
        let (line, col) = self.here();
        match self.peek().cloned() {
            Some(Tok::Num { value, integral: true }) if value <= f64::from(u32::MAX) => {
                self.pos += 1;
                Ok(base.pow(value as u32))
            }
            _ => Err(PolyError::BadExponent { line, col }),
        }
    }

    fn atom(&mut self) -> Result<Polynomial> {
        let n = self.vars.len();
        let Some(tok) = self.toks.get(self.pos).cloned() else {
            return Err(self.syntax("unexpected end of expression"));
        };
        match tok.tok {
            Tok::Num { value, .. } => {
                self.pos += 1;
                Ok(Polynomial::constant(n, value))
            }
            Tok::Ident(name) => {
                let idx = self.vars.iter().position(|v| *v == name).ok_or(
                    PolyError::UnknownIdentifier { name, line: tok.line, col: tok.col },
                )?;
                self.pos += 1;
                Ok(Polynomial::variable(n, idx))
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.syntax("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            other => Err(self.syntax(format!("unexpected token {other:?}"))),
        }
    }
}

fn parse_line(src: &str, line: usize, vars: &[String]) -> Result<Polynomial> {
    let toks = lex(src, line)?;
    let end_col = src.chars().count() + 1;
    let mut p = Parser { toks, pos: 0, vars, line, end_col };
    let poly = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.syntax("unexpected trailing input"));
    }
    Ok(poly)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

/// Parses a single polynomial expression.
pub fn parse_polynomial(text: &str, var_names: &[String]) -> Result<Polynomial> {
    parse_line(text, 1, var_names)
}

/// One polynomial per nonempty line; `#` starts a comment.
pub fn parse_system(text: &str, var_names: &[String]) -> Result<PolySystem> {
    let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    parse_lines(lines, var_names)
}

fn parse_lines<'a, I>(lines: I, var_names: &[String]) -> Result<PolySystem>
where
    I: IntoIterator<Item = (usize, &'a str)>,
{
    let mut polys = Vec::new();
    for (no, raw) in lines {
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        polys.push(parse_line(body, no, var_names)?);
    }
    PolySystem::new(polys, var_names.to_vec())
}

/// System file: the first nonempty line is `vars: x1 x2 ...`, each further
/// nonempty line holds one polynomial.
pub fn parse_system_file(text: &str) -> Result<PolySystem> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let vars = loop {
        let Some((no, raw)) = lines.next() else {
            return Err(PolyError::MissingVars);
        };
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let Some(rest) = body.strip_prefix("vars:") else {
            return Err(PolyError::MissingVars);
        };
        let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        if names.is_empty() {
            return Err(PolyError::Syntax { line: no, col: 1, msg: "no variables declared".into() });
        }
        for (k, name) in names.iter().enumerate() {
            let ok = name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_alphanumeric() || c == '_');
            if !ok || names[..k].contains(name) {
                return Err(PolyError::Syntax {
                    line: no,
                    col: 1,
                    msg: format!("invalid or repeated variable name `{name}`"),
                });
            }
        }
        break names;
    };
    parse_lines(lines, &vars)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn choi_lam_has_five_terms() {
        let p = parse_polynomial("x^2*y^2 + x^2*z^2 + y^2*z^2 - 4*x*y*z + 1", &v(&["x", "y", "z"]))
            .unwrap();
        assert_eq!(p.terms().len(), 5);
        assert_eq!(p.evaluate(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let vars = v(&["x"]);
        let p = parse_polynomial("-x^2", &vars).unwrap();
        assert_eq!(p.evaluate(&[3.0]).unwrap(), -9.0);
        let p = parse_polynomial("2 - -x*3", &vars).unwrap();
        assert_eq!(p.evaluate(&[1.0]).unwrap(), 5.0);
        let p = parse_polynomial("3/2*x + 1.25e1", &vars).unwrap();
        assert_eq!(p.evaluate(&[2.0]).unwrap(), 15.5);
    }

    #[test]
    fn reports_positions() {
        let vars = v(&["x1", "x2"]);
        match parse_system("x1 + x2\nx1 + x3", &vars) {
            Err(PolyError::UnknownIdentifier { name, line, col }) => {
                assert_eq!((name.as_str(), line, col), ("x3", 2, 6));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse_polynomial("x1^2.5", &vars),
            Err(PolyError::BadExponent { line: 1, col: 4 })
        );
        assert_eq!(
            parse_polynomial("x1^-1", &vars),
            Err(PolyError::BadExponent { line: 1, col: 4 })
        );
        assert!(matches!(parse_polynomial("2 x1", &vars), Err(PolyError::Syntax { col: 3, .. })));
        assert!(matches!(parse_polynomial("(x1 + 1", &vars), Err(PolyError::Syntax { .. })));
        assert!(matches!(parse_polynomial("x1 $", &vars), Err(PolyError::Syntax { col: 4, .. })));
        assert!(matches!(
            parse_polynomial("1/x1", &vars),
            Err(PolyError::NonConstantDivisor { .. })
        ));
    }

    #[test]
    fn system_file_with_comments() {
        let text = "# header\n\nvars: a b   # two of them\na*b - 1 # hyperbola\n\n  b^2\n";
        let sys = parse_system_file(text).unwrap();
        assert_eq!(sys.var_names(), &v(&["a", "b"])[..]);
        assert_eq!(sys.len(), 2);
        assert_eq!(parse_system_file("a + b\n"), Err(PolyError::MissingVars));
        assert_eq!(parse_system_file("vars: a\n\n"), Err(PolyError::EmptySystem));
        assert!(parse_system_file("vars: a a\na").is_err());
        // line numbers refer to the file
        assert!(matches!(
            parse_system_file("vars: a\na\na + q"),
            Err(PolyError::UnknownIdentifier { line: 3, .. })
        ));
    }

    #[test]
    fn print_parse_fixed_point() {
        let vars = v(&["x", "y"]);
        let p = parse_polynomial("(0.1*x - 3*y + 1/3)^3 - x", &vars).unwrap();
        let printed = p.display_with(&vars).to_string();
        let q = parse_polynomial(&printed, &vars).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.display_with(&vars).to_string(), printed);
    }
}
