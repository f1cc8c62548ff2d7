//! Recursive-descent parser and pretty-printer for the scene DSL.
//!
//! ```text
//! scene   := "scene" STRING "{" item* "}"
//! item    := "element" IDENT "{" attr* "}" ";"?
//!          | "background" IDENT ( "{" attr* "}" )? ";"?
//! attr    := IDENT ":" value ";"
//! value   := "#" HEX6 | NUMBER | IDENT | "(" NUMBER "," NUMBER ")"
//! ```
//!
//! `//` starts a comment that runs to the end of the line.

use std::fmt::Write as _;

use super::{
    Anchor, BackgroundSpec, ElementSpec, Lexicon, Origin, PlannerError, Position, PromptSpec,
};
use crate::raster::Rgb;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Number(f64),
    Hex(Rgb),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Semi,
    Comma,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Number(n) => format!("number {n}"),
            Tok::Hex(_) => "color literal".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Colon => "':'".into(),
            Tok::Semi => "';'".into(),
            Tok::Comma => "','".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, PlannerError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let syntax = |line, col, expected: &str| PlannerError::SyntaxError {
        line,
        col,
        expected: expected.to_owned(),
    };

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
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
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ':' => Some(Tok::Colon),
            ';' => Some(Tok::Semi),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        let tok = if let Some(t) = single {
            advance(1, &mut i);
            t
        } else if c == '"' {
            let mut s = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None | Some('\n') => return Err(syntax(start_line, start_col, "closing '\"'")),
                    Some('"') => break,
                    Some('\\') if matches!(chars.get(j + 1), Some('"') | Some('\\')) => {
                        s.push(chars[j + 1]);
                        j += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            advance(j + 1 - i, &mut i);
            Tok::Str(s)
        } else if c == '#' {
            let hex: String = chars[i + 1..].iter().take(6).collect();
            let valid = hex.len() == 6
                && hex.chars().all(|h| h.is_ascii_hexdigit())
                && !chars.get(i + 7).is_some_and(|h| h.is_ascii_alphanumeric());
            if !valid {
                return Err(syntax(start_line, start_col, "six hex digits after '#'"));
            }
            let v = u32::from_str_radix(&hex, 16).expect("checked hex");
            advance(7, &mut i);
            Tok::Hex([(v >> 16) as u8, (v >> 8) as u8, v as u8])
        } else if c.is_ascii_digit() || c == '.' || c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.') {
            let mut j = i + 1;
            while chars.get(j).is_some_and(|d| d.is_ascii_digit() || *d == '.' || *d == 'e' || *d == 'E') {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            let n: f64 = text.parse().map_err(|_| syntax(start_line, start_col, "a number"))?;
            advance(j - i, &mut i);
            Tok::Number(n)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i + 1;
            while chars.get(j).is_some_and(|d| d.is_ascii_alphanumeric() || *d == '_' || *d == '-') {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            advance(j - i, &mut i);
            Tok::Ident(text)
        } else {
            return Err(syntax(start_line, start_col, "a token"));
        };
        out.push(Spanned {
            tok,
            line: start_line,
            col: start_col,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// A parsed attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Color(Rgb),
    Number(f64),
    Word(String),
    Pair(f64, f64),
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    lexicon: &'a Lexicon,
}

impl Parser<'_> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, at: &Spanned, expected: &str) -> PlannerError {
        PlannerError::SyntaxError {
            line: at.line,
            col: at.col,
            expected: format!("{expected}, found {}", at.tok.describe()),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned, PlannerError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(self.error(&t, what))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Spanned), PlannerError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            _ => Err(self.error(&t, what)),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Spanned, PlannerError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) if s == kw => Ok(t),
            _ => Err(self.error(&t, &format!("'{kw}'"))),
        }
    }

    fn skip_semi(&mut self) {
        if self.peek().tok == Tok::Semi {
            self.next();
        }
    }

    fn value(&mut self) -> Result<Value, PlannerError> {
        let t = self.next();
        match t.tok {
            Tok::Hex(c) => Ok(Value::Color(c)),
            Tok::Number(n) => Ok(Value::Number(n)),
            Tok::Ident(w) => Ok(Value::Word(w)),
            Tok::LParen => {
                let a = self.number()?;
                self.expect(Tok::Comma, "','")?;
                let b = self.number()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Value::Pair(a, b))
            }
            _ => Err(self.error(&t, "a value")),
        }
    }

    fn number(&mut self) -> Result<f64, PlannerError> {
        let t = self.next();
        match t.tok {
            Tok::Number(n) => Ok(n),
            _ => Err(self.error(&t, "a number")),
        }
    }

    /// `{ (IDENT ":" value ";")* }`
    fn attrs(&mut self) -> Result<Vec<(String, Value, Spanned)>, PlannerError> {
        self.expect(Tok::LBrace, "'{'")?;
        let mut out = Vec::new();
        loop {
            if self.peek().tok == Tok::RBrace {
                self.next();
                return Ok(out);
            }
            let (name, at) = self.ident("an attribute name or '}'")?;
            self.expect(Tok::Colon, "':'")?;
            let value_at = self.peek().clone();
            let value = self.value()?;
            self.expect(Tok::Semi, "';'")?;
            let _ = at;
            out.push((name, value, value_at));
        }
    }

    fn scene(&mut self, source: &str) -> Result<PromptSpec, PlannerError> {
        self.keyword("scene")?;
        let t = self.next();
        let title = match t.tok {
            Tok::Str(s) => s,
            _ => return Err(self.error(&t, "a quoted scene title")),
        };
        self.expect(Tok::LBrace, "'{'")?;
        let mut elements: Vec<ElementSpec> = Vec::new();
        let mut background = None;
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::RBrace => {
                    self.next();
                    break;
                }
                Tok::Ident(kw) if kw == "element" => {
                    self.next();
                    let (name, name_at) = self.ident("an element name")?;
                    if elements.iter().any(|e| e.name == name) {
                        return Err(PlannerError::DuplicateElementName {
                            name,
                            line: name_at.line,
                            col: name_at.col,
                        });
                    }
                    let attrs = self.attrs()?;
                    self.skip_semi();
                    elements.push(self.build_element(name, &name_at, attrs)?);
                }
                Tok::Ident(kw) if kw == "background" => {
                    self.next();
                    let (style, at) = self.ident("a background style")?;
                    let mut bg = BackgroundSpec::with_defaults(&style, self.lexicon).ok_or(
                        PlannerError::UnknownBackground {
                            style,
                            line: at.line,
                            col: at.col,
                        },
                    )?;
                    if self.peek().tok == Tok::LBrace {
                        for (attr, value, vat) in self.attrs()? {
                            apply_background_attribute(&mut bg, &attr, &value, self.lexicon)
                                .map_err(|message| bad_value(&attr, &vat, message))?;
                        }
                    }
                    self.skip_semi();
                    background = Some(bg);
                }
                _ => return Err(self.error(&t, "'element', 'background' or '}'")),
            }
        }
        let end = self.next();
        if end.tok != Tok::Eof {
            return Err(self.error(&end, "end of input"));
        }
        let spec = PromptSpec {
            title,
            elements,
            background,
            source_text: source.to_owned(),
            origin: Origin::Dsl,
        };
        if spec.elements.is_empty() && spec.background.is_none() {
            return Err(PlannerError::EmptyScene);
        }
        Ok(spec)
    }

    fn build_element(
        &self,
        name: String,
        name_at: &Spanned,
        attrs: Vec<(String, Value, Spanned)>,
    ) -> Result<ElementSpec, PlannerError> {
        let kind_attr = attrs.iter().find(|(a, _, _)| a == "kind");
        let (kind, at) = match kind_attr {
            Some((_, Value::Word(k), at)) => (k.clone(), at),
            Some((_, _, at)) => return Err(bad_value("kind", at, "expected a kind name".into())),
            None => (name.clone(), name_at),
        };
        let mut el = ElementSpec::with_defaults(&name, &kind, self.lexicon).ok_or(
            PlannerError::UnknownKind {
                kind,
                line: at.line,
                col: at.col,
            },
        )?;
        for (attr, value, vat) in attrs.iter().filter(|(a, _, _)| a != "kind") {
            apply_element_attribute(&mut el, attr, value, self.lexicon)
                .map_err(|message| bad_value(attr, vat, message))?;
        }
        Ok(el)
    }
}

fn bad_value(attr: &str, at: &Spanned, message: String) -> PlannerError {
    PlannerError::BadAttributeValue {
        attribute: attr.to_owned(),
        line: at.line,
        col: at.col,
        message,
    }
}

fn color_of(value: &Value, lexicon: &Lexicon) -> Result<Rgb, String> {
    match value {
        Value::Color(c) => Ok(*c),
        Value::Word(w) => lexicon.color(w).ok_or_else(|| format!("unknown color '{w}'")),
        _ => Err("expected #RRGGBB or a color word".into()),
    }
}

pub(crate) fn apply_element_attribute(
    el: &mut ElementSpec,
    attr: &str,
    value: &Value,
    lexicon: &Lexicon,
) -> Result<(), String> {
    match attr {
        "kind" => match value {
            Value::Word(k) if lexicon.kind(k).is_some() => el.kind = k.clone(),
            _ => return Err("expected a known kind".into()),
        },
        "color" => el.color = color_of(value, lexicon)?,
        "size" => match value {
            Value::Number(n) if *n > 0.0 && *n <= 1.0 => el.size = *n,
            Value::Number(n) => return Err(format!("size {n} outside (0, 1]")),
            _ => return Err("expected a number".into()),
        },
        "position" => match value {
            Value::Word(w) => {
                el.position = Position::Anchor(Anchor::parse(w).ok_or_else(|| format!("unknown anchor '{w}'"))?)
            }
            Value::Pair(cx, cy) if (0.0..=1.0).contains(cx) && (0.0..=1.0).contains(cy) => {
                el.position = Position::Explicit { cx: *cx, cy: *cy }
            }
            Value::Pair(..) => return Err("position fractions must lie in [0, 1]".into()),
            _ => return Err("expected an anchor or (cx, cy)".into()),
        },
        other => return Err(format!("unknown element attribute '{other}'")),
    }
    Ok(())
}

pub(crate) fn apply_background_attribute(
    bg: &mut BackgroundSpec,
    attr: &str,
    value: &Value,
    lexicon: &Lexicon,
) -> Result<(), String> {
    match attr {
        "top" => bg.top_color = color_of(value, lexicon)?,
        "bottom" => bg.bottom_color = color_of(value, lexicon)?,
        "style" => match value {
            Value::Word(s) => {
                *bg = BackgroundSpec::with_defaults(s, lexicon).ok_or_else(|| format!("unknown style '{s}'"))?
            }
            _ => return Err("expected a style name".into()),
        },
        other => return Err(format!("unknown background attribute '{other}'")),
    }
    Ok(())
}

pub fn parse_prompt(text: &str, lexicon: &Lexicon) -> Result<PromptSpec, PlannerError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        lexicon,
    };
    p.scene(text)
}

/// Parses a single attribute value, as used by plan edits.
pub fn parse_value(text: &str) -> Result<Value, PlannerError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        lexicon: Lexicon::builtin(),
    };
    let v = p.value()?;
    let end = p.next();
    if end.tok != Tok::Eof {
        return Err(p.error(&end, "end of value"));
    }
    Ok(v)
}

fn hex(c: Rgb) -> String {
    format!("#{:02X}{:02X}{:02X}", c[0], c[1], c[2])
}

/// Normalized DSL text for a spec: every attribute spelled out.
pub fn render_dsl(spec: &PromptSpec) -> String {
    let mut out = String::new();
    let title = spec.title.replace('\\', "\\\\").replace('"', "\\\"");
    writeln!(out, "scene \"{title}\" {{").unwrap();
    for e in &spec.elements {
        let pos = match e.position {
            Position::Anchor(a) => a.name().to_owned(),
            Position::Explicit { cx, cy } => format!("({cx:?}, {cy:?})"),
        };
        writeln!(
            out,
            "  element {} {{ kind: {}; color: {}; size: {:?}; position: {}; }}",
            e.name,
            e.kind,
            hex(e.color),
            e.size,
            pos
        )
        .unwrap();
    }
    if let Some(bg) = &spec.background {
        writeln!(
            out,
            "  background {} {{ top: {}; bottom: {}; }}",
            bg.style,
            hex(bg.top_color),
            hex(bg.bottom_color)
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}
