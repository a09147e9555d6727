//! Relevance-filter DSL: lexing, parsing and the evaluable AST.
//!
//! A filter combines modifier-qualified criteria with set operators:
//!
//! ```text
//! (more frequent U most expensive) & least changeable
//! ```
//!
//! Operators accept both the set-theory glyphs (`∪`, `∩`, `∖`) and ASCII
//! aliases (`U`/`union`, `&`/`intersect`, `\`/`minus`). All three operators
//! share one precedence level and associate to the left; parentheses
//! override.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The nine relevance criteria. The token column of the grammar maps each
/// adjective form (`frequent`, `error-prone`, ...) onto one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Frequency,
    Maintainability,
    Expensiveness,
    Changeability,
    ErrorProneness,
    UsagePattern,
    StateVariation,
    Concurrency,
    Latency,
}

impl Criterion {
    pub const ALL: [Criterion; 9] = [
        Criterion::Frequency,
        Criterion::Maintainability,
        Criterion::Expensiveness,
        Criterion::Changeability,
        Criterion::ErrorProneness,
        Criterion::UsagePattern,
        Criterion::StateVariation,
        Criterion::Concurrency,
        Criterion::Latency,
    ];

    /// The adjective token that denotes this criterion in filter text.
    pub fn token(self) -> &'static str {
        match self {
            Criterion::Frequency => "frequent",
            Criterion::Maintainability => "maintainable",
            Criterion::Expensiveness => "expensive",
            Criterion::Changeability => "changeable",
            Criterion::ErrorProneness => "error-prone",
            Criterion::UsagePattern => "usage-pattern",
            Criterion::StateVariation => "state-variation",
            Criterion::Concurrency => "concurrent",
            Criterion::Latency => "latent",
        }
    }

    /// The noun-form name used in configuration and reports.
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Frequency => "frequency",
            Criterion::Maintainability => "maintainability",
            Criterion::Expensiveness => "expensiveness",
            Criterion::Changeability => "changeability",
            Criterion::ErrorProneness => "error-proneness",
            Criterion::UsagePattern => "usage-pattern",
            Criterion::StateVariation => "state-variation",
            Criterion::Concurrency => "concurrency",
            Criterion::Latency => "latency",
        }
    }

    fn from_token(word: &str) -> Option<Criterion> {
        Criterion::ALL.iter().copied().find(|c| c.token() == word)
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The five ordered bands. `Base` denotes a bare criterion with no modifier
/// token and maps onto the middle band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modifier {
    Least,
    Less,
    Base,
    More,
    Most,
}

impl Modifier {
    pub const ALL: [Modifier; 5] = [
        Modifier::Least,
        Modifier::Less,
        Modifier::Base,
        Modifier::More,
        Modifier::Most,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Modifier::Least => "least",
            Modifier::Less => "less",
            Modifier::Base => "base",
            Modifier::More => "more",
            Modifier::Most => "most",
        }
    }

    fn from_token(word: &str) -> Option<Modifier> {
        match word {
            "least" => Some(Modifier::Least),
            "less" => Some(Modifier::Less),
            "more" => Some(Modifier::More),
            "most" => Some(Modifier::Most),
            _ => None,
        }
    }
}

impl fmt::Display for Modifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Set operator joining two sub-filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetOp {
    Union,
    Intersection,
    Difference,
}

impl SetOp {
    fn symbol(self) -> &'static str {
        match self {
            SetOp::Union => "U",
            SetOp::Intersection => "&",
            SetOp::Difference => "\\",
        }
    }
}

/// Parsed filter expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterExpr {
    Leaf {
        modifier: Modifier,
        criterion: Criterion,
    },
    Op {
        op: SetOp,
        left: Box<FilterExpr>,
        right: Box<FilterExpr>,
    },
}

impl FilterExpr {
    pub fn leaf(modifier: Modifier, criterion: Criterion) -> FilterExpr {
        FilterExpr::Leaf {
            modifier,
            criterion,
        }
    }

    pub fn union(left: FilterExpr, right: FilterExpr) -> FilterExpr {
        FilterExpr::Op {
            op: SetOp::Union,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn intersection(left: FilterExpr, right: FilterExpr) -> FilterExpr {
        FilterExpr::Op {
            op: SetOp::Intersection,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn difference(left: FilterExpr, right: FilterExpr) -> FilterExpr {
        FilterExpr::Op {
            op: SetOp::Difference,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// The set of criteria appearing in any leaf. Drives which groupings the
    /// analysis phase must compute. Never empty for a parsed expression.
    pub fn referenced_criteria(&self) -> BTreeSet<Criterion> {
        let mut out = BTreeSet::new();
        self.collect_criteria(&mut out);
        out
    }

    fn collect_criteria(&self, out: &mut BTreeSet<Criterion>) {
        match self {
            FilterExpr::Leaf { criterion, .. } => {
                out.insert(*criterion);
            }
            FilterExpr::Op { left, right, .. } => {
                left.collect_criteria(out);
                right.collect_criteria(out);
            }
        }
    }
}

/// Canonical printing. Left-associative chains print without parentheses;
/// binary right children are parenthesized so the text re-parses to a
/// structurally equal AST.
impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterExpr::Leaf {
                modifier,
                criterion,
            } => {
                if *modifier == Modifier::Base {
                    f.write_str(criterion.token())
                } else {
                    write!(f, "{} {}", modifier.label(), criterion.token())
                }
            }
            FilterExpr::Op { op, left, right } => {
                write!(f, "{} {} ", left, op.symbol())?;
                if matches!(**right, FilterExpr::Op { .. }) {
                    write!(f, "({})", right)
                } else {
                    write!(f, "{}", right)
                }
            }
        }
    }
}

/// Parse failure with the character offset it occurred at.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at column {}: {message}", position + 1)]
pub struct SyntaxError {
    /// 0-based character offset into the filter text.
    pub position: usize,
    pub message: String,
    /// Token classes that would have been accepted here.
    pub expected: Vec<&'static str>,
}

impl SyntaxError {
    fn new(position: usize, message: impl Into<String>, expected: &[&'static str]) -> SyntaxError {
        SyntaxError {
            position,
            message: message.into(),
            expected: expected.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    LParen,
    RParen,
    Op(SetOp),
    Word(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    pos: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, SyntaxError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                tokens.push(Spanned {
                    token: Token::LParen,
                    pos: i,
                });
                i += 1;
            }
            ')' => {
                tokens.push(Spanned {
                    token: Token::RParen,
                    pos: i,
                });
                i += 1;
            }
            '\u{222A}' => {
                // ∪
                tokens.push(Spanned {
                    token: Token::Op(SetOp::Union),
                    pos: i,
                });
                i += 1;
            }
            '\u{2229}' => {
                // ∩
                tokens.push(Spanned {
                    token: Token::Op(SetOp::Intersection),
                    pos: i,
                });
                i += 1;
            }
            '\\' | '\u{2216}' => {
                // backslash or ∖
                tokens.push(Spanned {
                    token: Token::Op(SetOp::Difference),
                    pos: i,
                });
                i += 1;
            }
            '&' => {
                tokens.push(Spanned {
                    token: Token::Op(SetOp::Intersection),
                    pos: i,
                });
                i += 1;
            }
            c if c.is_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '-') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect::<String>().to_lowercase();
                let token = match word.as_str() {
                    "u" | "union" => Token::Op(SetOp::Union),
                    "intersect" => Token::Op(SetOp::Intersection),
                    "minus" => Token::Op(SetOp::Difference),
                    _ => Token::Word(word),
                };
                tokens.push(Spanned { token, pos: start });
            }
            other => {
                return Err(SyntaxError::new(
                    i,
                    format!("unexpected character '{other}'"),
                    &["criterion", "modifier", "operator", "(", ")"],
                ));
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Spanned>,
    cursor: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.cursor)
    }

    fn advance(&mut self) -> Option<Spanned> {
        let t = self.tokens.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.peek().map(|s| s.pos).unwrap_or(self.end)
    }

    /// filter := term { operator term }
    fn parse_filter(&mut self) -> Result<FilterExpr, SyntaxError> {
        let mut expr = self.parse_term()?;
        loop {
            match self.peek() {
                Some(Spanned {
                    token: Token::Op(op),
                    ..
                }) => {
                    let op = *op;
                    self.advance();
                    let rhs = self.parse_term()?;
                    expr = FilterExpr::Op {
                        op,
                        left: Box::new(expr),
                        right: Box::new(rhs),
                    };
                }
                _ => return Ok(expr),
            }
        }
    }

    /// term := '(' filter ')' | [modifier] criterion
    fn parse_term(&mut self) -> Result<FilterExpr, SyntaxError> {
        let pos = self.here();
        match self.advance() {
            Some(Spanned {
                token: Token::LParen,
                ..
            }) => {
                let inner = self.parse_filter()?;
                match self.advance() {
                    Some(Spanned {
                        token: Token::RParen,
                        ..
                    }) => Ok(inner),
                    other => Err(SyntaxError::new(
                        other.map(|s| s.pos).unwrap_or(self.end),
                        "unbalanced parentheses: expected ')'",
                        &[")", "operator"],
                    )),
                }
            }
            Some(Spanned {
                token: Token::Word(word),
                pos,
            }) => {
                if let Some(modifier) = Modifier::from_token(&word) {
                    let next_pos = self.here();
                    match self.advance() {
                        Some(Spanned {
                            token: Token::Word(cw),
                            pos: cpos,
                        }) => match Criterion::from_token(&cw) {
                            Some(criterion) => Ok(FilterExpr::leaf(modifier, criterion)),
                            None => Err(SyntaxError::new(
                                cpos,
                                format!("unknown criterion '{cw}'"),
                                &["criterion"],
                            )),
                        },
                        _ => Err(SyntaxError::new(
                            next_pos,
                            format!("modifier '{word}' must be followed by a criterion"),
                            &["criterion"],
                        )),
                    }
                } else if let Some(criterion) = Criterion::from_token(&word) {
                    Ok(FilterExpr::leaf(Modifier::Base, criterion))
                } else {
                    Err(SyntaxError::new(
                        pos,
                        format!("unknown criterion '{word}'"),
                        &["criterion", "modifier"],
                    ))
                }
            }
            Some(Spanned { token, pos }) => {
                let what = match token {
                    Token::RParen => "')'".to_string(),
                    Token::Op(op) => format!("dangling operator '{}'", op.symbol()),
                    _ => unreachable!(),
                };
                Err(SyntaxError::new(
                    pos,
                    format!("expected a criterion or '(', found {what}"),
                    &["criterion", "modifier", "("],
                ))
            }
            None => Err(SyntaxError::new(
                pos,
                "expected a criterion or '('",
                &["criterion", "modifier", "("],
            )),
        }
    }
}

/// Parse filter text into an AST.
///
/// All three operators share one precedence level and associate to the
/// left, so `a U b & c` is `(a U b) & c`; use parentheses for anything
/// else. Criterion tokens are case-insensitive.
pub fn parse_filter(text: &str) -> Result<FilterExpr, SyntaxError> {
    let end = text.chars().count();
    if text.trim().is_empty() {
        return Err(SyntaxError::new(
            0,
            "empty filter",
            &["criterion", "modifier", "("],
        ));
    }
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        cursor: 0,
        end,
    };
    let expr = parser.parse_filter()?;
    if let Some(extra) = parser.peek() {
        let msg = match &extra.token {
            Token::Word(w) => format!("missing operator before '{w}'"),
            Token::RParen => "unbalanced parentheses: unmatched ')'".to_string(),
            _ => "trailing input after filter".to_string(),
        };
        return Err(SyntaxError::new(extra.pos, msg, &["operator"]));
    }
    Ok(expr)
}

/// Free-function form of [`FilterExpr::referenced_criteria`].
pub fn referenced_criteria(expr: &FilterExpr) -> BTreeSet<Criterion> {
    expr.referenced_criteria()
}
