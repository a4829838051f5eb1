use thiserror::Error;

use super::{Node, OpName, Param, Program, VType};

/// Parse failures. Each category is a distinct variant; positions are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown operation `{name}` at {line}:{column}")]
    UnknownOp {
        name: String,
        line: usize,
        column: usize,
    },
    #[error("`{op}` takes {expected} arguments, found {found} (at {line}:{column})")]
    Arity {
        op: String,
        expected: usize,
        found: usize,
        line: usize,
        column: usize,
    },
    #[error("type error at {line}:{column}: argument {position} of `{op}` must be {expected}, found {found}")]
    Type {
        op: String,
        position: usize,
        expected: String,
        found: String,
        line: usize,
        column: usize,
    },
    #[error("bad literal at {line}:{column}: `{op}` expects a {expected}, found `{found}`")]
    Literal {
        op: String,
        expected: String,
        found: String,
        line: usize,
        column: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone, Copy)]
struct Pos {
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Result<(Vec<(Tok, Pos)>, Pos), ParseError> {
    let mut toks = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, column };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                column = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
            }
            ';' => {
                // comment to end of line
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    column += 1;
                }
            }
            '(' => {
                chars.next();
                column += 1;
                toks.push((Tok::Open, pos));
            }
            ')' => {
                chars.next();
                column += 1;
                toks.push((Tok::Close, pos));
            }
            c if c.is_ascii_alphanumeric() || c == '_' || c == '-' => {
                let mut word = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                        word.push(c);
                        chars.next();
                        column += 1;
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Atom(word), pos));
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    column,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok((toks, Pos { line, column }))
}

enum Arg {
    Expr(usize, VType, Pos),
    Atom(String, Pos),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    eof: Pos,
    nodes: Vec<Node>,
    types: Vec<VType>,
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, Pos)> {
        self.toks.get(self.at)
    }

    fn eof_error(&self) -> ParseError {
        ParseError::Syntax {
            line: self.eof.line,
            column: self.eof.column,
            message: "unexpected end of input (unbalanced parentheses)".into(),
        }
    }

    fn expr(&mut self) -> Result<usize, ParseError> {
        let open = match self.peek() {
            Some((Tok::Open, p)) => *p,
            Some((t, p)) => {
                return Err(ParseError::Syntax {
                    line: p.line,
                    column: p.column,
                    message: format!("expected `(`, found {}", describe(t)),
                })
            }
            None => return Err(self.eof_error()),
        };
        self.at += 1;
        let (name, name_pos) = match self.peek() {
            Some((Tok::Atom(w), p)) => (w.clone(), *p),
            Some((t, p)) => {
                return Err(ParseError::Syntax {
                    line: p.line,
                    column: p.column,
                    message: format!("expected operation name, found {}", describe(t)),
                })
            }
            None => return Err(self.eof_error()),
        };
        self.at += 1;
        let op = OpName::from_name(&name).ok_or(ParseError::UnknownOp {
            name: name.clone(),
            line: name_pos.line,
            column: name_pos.column,
        })?;

        let mut args = Vec::new();
        loop {
            match self.peek() {
                Some((Tok::Close, _)) => {
                    self.at += 1;
                    break;
                }
                Some((Tok::Open, p)) => {
                    let p = *p;
                    let idx = self.expr()?;
                    args.push(Arg::Expr(idx, self.types[idx], p));
                }
                Some((Tok::Atom(w), p)) => {
                    args.push(Arg::Atom(w.clone(), *p));
                    self.at += 1;
                }
                None => return Err(self.eof_error()),
            }
        }

        let params = op.params();
        if args.len() != params.len() {
            return Err(ParseError::Arity {
                op: name,
                expected: params.len(),
                found: args.len(),
                line: open.line,
                column: open.column,
            });
        }
        let mut inputs = Vec::new();
        let mut lits = Vec::new();
        let mut in_types = Vec::new();
        for (i, (arg, param)) in args.into_iter().zip(params).enumerate() {
            match (arg, param) {
                (Arg::Expr(idx, t, p), Param::Input(want)) => {
                    if !want.accepts(t) {
                        return Err(ParseError::Type {
                            op: name,
                            position: i + 1,
                            expected: want.to_string(),
                            found: t.to_string(),
                            line: p.line,
                            column: p.column,
                        });
                    }
                    inputs.push(idx);
                    in_types.push(t);
                }
                (Arg::Atom(w, p), Param::Literal(kind)) => {
                    if !kind.accepts(&w) {
                        return Err(ParseError::Literal {
                            op: name,
                            expected: kind.name().to_string(),
                            found: w,
                            line: p.line,
                            column: p.column,
                        });
                    }
                    lits.push(w);
                }
                (Arg::Expr(_, t, p), Param::Literal(kind)) => {
                    return Err(ParseError::Type {
                        op: name,
                        position: i + 1,
                        expected: kind.name().to_string(),
                        found: t.to_string(),
                        line: p.line,
                        column: p.column,
                    })
                }
                (Arg::Atom(w, p), Param::Input(want)) => {
                    return Err(ParseError::Type {
                        op: name,
                        position: i + 1,
                        expected: want.to_string(),
                        found: format!("literal `{w}`"),
                        line: p.line,
                        column: p.column,
                    })
                }
            }
        }
        self.types.push(op.output(&in_types));
        self.nodes.push(Node {
            op,
            args: lits,
            inputs,
        });
        Ok(self.nodes.len() - 1)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Open => "`(`".into(),
        Tok::Close => "`)`".into(),
        Tok::Atom(w) => format!("`{w}`"),
    }
}

/// Parses the parenthesized prefix form into a checked [`Program`].
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let (toks, eof) = tokenize(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        eof,
        nodes: Vec::new(),
        types: Vec::new(),
    };
    p.expr()?;
    if let Some((t, pos)) = p.peek() {
        return Err(ParseError::Syntax {
            line: pos.line,
            column: pos.column,
            message: format!("trailing input starting with {}", describe(t)),
        });
    }
    Ok(Program { nodes: p.nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_composition() {
        let p = parse_program("(count (filter_charged (objects)))").unwrap();
        assert_eq!(p.nodes().len(), 3);
        assert_eq!(p.nodes()[0].op, OpName::Objects);
        assert_eq!(p.nodes()[2].inputs, vec![1]);
        assert_eq!(p.output_type(), VType::Integer);
    }

    #[test]
    fn unbalanced_is_eof_error() {
        let err = parse_program("(count (objects").unwrap_err();
        match err {
            ParseError::Syntax {
                line,
                column,
                message,
            } => {
                assert_eq!((line, column), (1, 16));
                assert!(message.contains("end of input"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_argument_type_is_type_error() {
        let err = parse_program("(filter_before (events) (objects))").unwrap_err();
        match err {
            ParseError::Type {
                position,
                expected,
                found,
                ..
            } => {
                assert_eq!(position, 2);
                assert_eq!(expected, "events");
                assert_eq!(found, "objects");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn distinct_error_categories() {
        assert!(matches!(
            parse_program("(frobnicate (objects))"),
            Err(ParseError::UnknownOp { .. })
        ));
        assert!(matches!(
            parse_program("(count (objects) (objects))"),
            Err(ParseError::Arity { .. })
        ));
        assert!(matches!(
            parse_program("(filter_static_attr (objects) loud)"),
            Err(ParseError::Literal { .. })
        ));
        assert!(matches!(
            parse_program("(count objects)"),
            Err(ParseError::Type { .. })
        ));
        assert!(matches!(
            parse_program("(objects) (events)"),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            parse_program("count"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn positions_track_lines() {
        let err = parse_program("(count\n  (filter_heavy\n    (nope)))").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownOp {
                name: "nope".into(),
                line: 3,
                column: 6
            }
        );
    }

    #[test]
    fn event_coerces_to_events() {
        let p = parse_program("(filter_after (events) (unique (filter_kind (events) collision)))")
            .unwrap();
        assert_eq!(p.output_type(), VType::Events);
        let p = parse_program("(filter_before (events) (end))").unwrap();
        assert_eq!(p.output_type(), VType::Events);
    }

    #[test]
    fn printer_round_trip_and_comments() {
        let text = "(query_attribute (unique (filter_static_attr (objects) red)) shape)";
        let p = parse_program(text).unwrap();
        assert_eq!(p.to_string(), text);
        let q = parse_program(
            "; a comment\n(query_attribute\n (unique (filter_static_attr (objects) red)) shape)",
        )
        .unwrap();
        assert_eq!(p, q);
    }
}
