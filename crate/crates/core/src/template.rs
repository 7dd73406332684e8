//! Minimal logic-less template engine.
//!
//! Supported syntax:
//!
//! - `{{path}}` inserts a scalar. Paths are dotted (`conn.host`); `this`
//!   is the current `each` item and `@index`, `@first`, `@last` describe
//!   its position.
//! - `{{#each path}}...{{/each}}` repeats over an array.
//! - `{{#if path}}...{{else}}...{{/if}}` branches on truthiness.
//! - `{{! text}}` is a comment.
//!
//! A block tag or comment alone on its line removes that whole line from
//! the output. Referencing a name that is not in scope is an error, so a
//! typo in a template never renders as an empty string.

use serde_json::Value;
use thiserror::Error;

use crate::number::format_number;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("{template}:{line}: {message}")]
    Parse {
        template: String,
        line: usize,
        message: String,
    },
    #[error("{template}:{line}: unknown placeholder `{path}`")]
    UnknownPlaceholder {
        template: String,
        line: usize,
        path: String,
    },
    #[error("{template}:{line}: `{path}` is not {expected}")]
    WrongType {
        template: String,
        line: usize,
        path: String,
        expected: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Text(String),
    Var {
        path: String,
        line: usize,
    },
    Each {
        path: String,
        line: usize,
        body: Vec<Node>,
    },
    If {
        path: String,
        line: usize,
        then: Vec<Node>,
        otherwise: Vec<Node>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tag {
    Var(String),
    Open { kind: &'static str, path: String },
    Else,
    Close(&'static str),
    Comment,
}

impl Tag {
    fn is_standalone_kind(&self) -> bool {
        !matches!(self, Tag::Var(_))
    }
}

enum Piece {
    Text(String),
    Tag(Tag, usize),
}

fn parse_tag(inner: &str) -> Option<Tag> {
    let inner = inner.trim();
    if inner.starts_with('!') {
        return Some(Tag::Comment);
    }
    if let Some(rest) = inner.strip_prefix('#') {
        let (kind, path) = rest.split_once(char::is_whitespace)?;
        let kind = match kind {
            "each" => "each",
            "if" => "if",
            _ => return None,
        };
        return Some(Tag::Open {
            kind,
            path: path.trim().to_string(),
        });
    }
    if let Some(rest) = inner.strip_prefix('/') {
        return match rest.trim() {
            "each" => Some(Tag::Close("each")),
            "if" => Some(Tag::Close("if")),
            _ => None,
        };
    }
    if inner == "else" {
        return Some(Tag::Else);
    }
    if !inner.is_empty()
        && inner
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '@'))
    {
        return Some(Tag::Var(inner.to_string()));
    }
    None
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self, TemplateError> {
        let pieces = lex(name, source)?;
        let mut iter = pieces.into_iter();
        let (nodes, end) = build(name, &mut iter, None)?;
        if let Some((tag, line)) = end {
            return Err(TemplateError::Parse {
                template: name.into(),
                line,
                message: format!("unexpected {tag:?}"),
            });
        }
        Ok(Template {
            name: name.to_string(),
            nodes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn render(&self, ctx: &Value) -> Result<String, TemplateError> {
        let mut out = String::new();
        let scopes = [Scope { value: ctx, meta: None }];
        render_nodes(&self.name, &self.nodes, &scopes, &mut out)?;
        Ok(out)
    }
}

fn lex(name: &str, source: &str) -> Result<Vec<Piece>, TemplateError> {
    let mut pieces = Vec::new();
    let mut rest = source;
    let mut line = 1;
    while let Some(open) = rest.find("{{") {
        let text = &rest[..open];
        let close = rest[open..].find("}}").ok_or_else(|| TemplateError::Parse {
            template: name.into(),
            line: line + text.matches('\n').count(),
            message: "unterminated `{{`".into(),
        })?;
        let inner = &rest[open + 2..open + close];
        let tag_line = line + text.matches('\n').count();
        let tag = parse_tag(inner).ok_or_else(|| TemplateError::Parse {
            template: name.into(),
            line: tag_line,
            message: format!("malformed tag `{{{{{inner}}}}}`"),
        })?;
        pieces.push(Piece::Text(text.to_string()));
        pieces.push(Piece::Tag(tag, tag_line));
        line = tag_line + inner.matches('\n').count();
        rest = &rest[open + close + 2..];
    }
    pieces.push(Piece::Text(rest.to_string()));
    strip_standalone(&mut pieces);
    Ok(pieces)
}

/// Drops the indentation before and the newline after block tags that sit
/// alone on a line.
fn strip_standalone(pieces: &mut [Piece]) {
    let text = |p: &Piece| match p {
        Piece::Text(t) => Some(t.clone()),
        Piece::Tag(..) => None,
    };
    let standalone: Vec<bool> = (0..pieces.len())
        .map(|i| {
            let block = matches!(&pieces[i], Piece::Tag(t, _) if t.is_standalone_kind());
            if !block || i == 0 || i + 1 >= pieces.len() {
                return false;
            }
            let (Some(before), Some(after)) = (text(&pieces[i - 1]), text(&pieces[i + 1])) else {
                return false;
            };
            let tail = &before[before.rfind('\n').map(|p| p + 1).unwrap_or(0)..];
            let head = after.split('\n').next().unwrap_or("");
            let blank = |s: &str| s.chars().all(|c| matches!(c, ' ' | '\t' | '\r'));
            blank(tail)
                && blank(head)
                && (before.contains('\n') || i == 1)
                && (after.contains('\n') || i + 2 == pieces.len())
        })
        .collect();
    for (i, _) in standalone.iter().enumerate().filter(|(_, s)| **s) {
        if let Piece::Text(t) = &mut pieces[i - 1] {
            let cut = t.rfind('\n').map(|p| p + 1).unwrap_or(0);
            t.truncate(cut);
        }
        if let Piece::Text(t) = &mut pieces[i + 1] {
            *t = match t.find('\n') {
                Some(p) => t[p + 1..].to_string(),
                None => String::new(),
            };
        }
    }
}

type Stop = Option<(Tag, usize)>;

fn build(
    name: &str,
    iter: &mut impl Iterator<Item = Piece>,
    open: Option<(&'static str, usize)>,
) -> Result<(Vec<Node>, Stop), TemplateError> {
    let mut nodes = Vec::new();
    while let Some(piece) = iter.next() {
        match piece {
            Piece::Text(t) => {
                if !t.is_empty() {
                    nodes.push(Node::Text(t));
                }
            }
            Piece::Tag(Tag::Comment, _) => {}
            Piece::Tag(Tag::Var(path), line) => nodes.push(Node::Var { path, line }),
            Piece::Tag(Tag::Open { kind, path }, line) => {
                let (body, stop) = build(name, iter, Some((kind, line)))?;
                match (kind, stop) {
                    ("each", Some((Tag::Close("each"), _))) => nodes.push(Node::Each { path, line, body }),
                    ("if", Some((Tag::Close("if"), _))) => nodes.push(Node::If {
                        path,
                        line,
                        then: body,
                        otherwise: Vec::new(),
                    }),
                    ("if", Some((Tag::Else, _))) => {
                        let (otherwise, stop) = build(name, iter, Some(("else", line)))?;
                        if !matches!(stop, Some((Tag::Close("if"), _))) {
                            return Err(TemplateError::Parse {
                                template: name.into(),
                                line,
                                message: "`{{else}}` without `{{/if}}`".into(),
                            });
                        }
                        nodes.push(Node::If {
                            path,
                            line,
                            then: body,
                            otherwise,
                        });
                    }
                    (_, _) => {
                        return Err(TemplateError::Parse {
                            template: name.into(),
                            line,
                            message: format!("unclosed `{{{{#{kind}}}}}`"),
                        })
                    }
                }
            }
            Piece::Tag(tag @ (Tag::Close(_) | Tag::Else), line) => {
                if open.is_none() {
                    return Err(TemplateError::Parse {
                        template: name.into(),
                        line,
                        message: format!("unexpected {tag:?}"),
                    });
                }
                return Ok((nodes, Some((tag, line))));
            }
        }
    }
    Ok((nodes, None))
}

#[derive(Clone, Copy)]
struct Meta {
    index: usize,
    len: usize,
}

#[derive(Clone, Copy)]
struct Scope<'v> {
    value: &'v Value,
    meta: Option<Meta>,
}

fn lookup<'v>(scopes: &[Scope<'v>], path: &str) -> Option<Value> {
    let meta = scopes.iter().rev().find_map(|s| s.meta.as_ref());
    match path {
        "@index" => return meta.map(|m| Value::from(m.index)),
        "@first" => return meta.map(|m| Value::Bool(m.index == 0)),
        "@last" => return meta.map(|m| Value::Bool(m.index + 1 == m.len)),
        _ => {}
    }
    let mut segments = path.split('.');
    let head = segments.next()?;
    let mut cur: &Value = if head == "this" {
        scopes.last()?.value
    } else {
        scopes.iter().rev().find_map(|s| s.value.get(head))?
    };
    for seg in segments {
        cur = cur.get(seg)?;
    }
    Some(cur.clone())
}

fn truthy(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Bool(b) => *b,
        Value::Number(n) => n.as_f64().is_some_and(|f| f != 0.0),
        Value::String(s) => !s.is_empty(),
        Value::Array(a) => !a.is_empty(),
        Value::Object(o) => !o.is_empty(),
    }
}

fn render_nodes(name: &str, nodes: &[Node], scopes: &[Scope<'_>], out: &mut String) -> Result<(), TemplateError> {
    for node in nodes {
        match node {
            Node::Text(t) => out.push_str(t),
            Node::Var { path, line } => {
                let v = lookup(scopes, path).ok_or_else(|| TemplateError::UnknownPlaceholder {
                    template: name.into(),
                    line: *line,
                    path: path.clone(),
                })?;
                match v {
                    Value::String(s) => out.push_str(&s),
                    Value::Number(n) => out.push_str(&format_number(n.as_f64().unwrap_or(f64::NAN))),
                    Value::Bool(b) => out.push_str(if b { "true" } else { "false" }),
                    _ => {
                        return Err(TemplateError::WrongType {
                            template: name.into(),
                            line: *line,
                            path: path.clone(),
                            expected: "a scalar",
                        })
                    }
                }
            }
            Node::If {
                path,
                line,
                then,
                otherwise,
            } => {
                let v = lookup(scopes, path).ok_or_else(|| TemplateError::UnknownPlaceholder {
                    template: name.into(),
                    line: *line,
                    path: path.clone(),
                })?;
                let branch = if truthy(&v) { then } else { otherwise };
                render_nodes(name, branch, scopes, out)?;
            }
            Node::Each { path, line, body } => {
                let v = lookup(scopes, path).ok_or_else(|| TemplateError::UnknownPlaceholder {
                    template: name.into(),
                    line: *line,
                    path: path.clone(),
                })?;
                let Value::Array(items) = v else {
                    return Err(TemplateError::WrongType {
                        template: name.into(),
                        line: *line,
                        path: path.clone(),
                        expected: "an array",
                    });
                };
                let len = items.len();
                for (index, item) in items.iter().enumerate() {
                    let mut inner = scopes.to_vec();
                    inner.push(Scope {
                        value: item,
                        meta: Some(Meta { index, len }),
                    });
                    render_nodes(name, body, &inner, out)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn render(src: &str, ctx: Value) -> Result<String, TemplateError> {
        Template::parse("t", src)?.render(&ctx)
    }

    #[test]
    fn placeholders() {
        let ctx = json!({"name": "finch", "conn": {"port": 7070}, "half": 0.5});
        assert_eq!(
            render("{{name}}:{{conn.port}} {{half}}", ctx).unwrap(),
            "finch:7070 0.5"
        );
    }

    #[test]
    fn each_with_position() {
        let ctx = json!({"xs": ["a", "b", "c"], "sep": ","});
        let out = render("{{#each xs}}{{this}}{{#if @last}}{{else}}{{sep}}{{/if}}{{/each}}", ctx).unwrap();
        assert_eq!(out, "a,b,c");
    }

    #[test]
    fn standalone_lines_vanish() {
        let src = "start\n  {{#each xs}}\n  item {{@index}}\n  {{/each}}\nend\n";
        let out = render(src, json!({"xs": [1, 2]})).unwrap();
        assert_eq!(out, "start\n  item 0\n  item 1\nend\n");
    }

    #[test]
    fn adjacent_block_tags_leave_no_blank_lines() {
        let src = "a\n{{#if x}}\n{{#if y}}\nboth\n{{/if}}\n{{/if}}\nb\n";
        assert_eq!(render(src, json!({"x": true, "y": true})).unwrap(), "a\nboth\nb\n");
        assert_eq!(render(src, json!({"x": true, "y": false})).unwrap(), "a\nb\n");
    }

    #[test]
    fn outer_scope_visible_inside_each() {
        let ctx = json!({"prefix": "p_", "xs": [{"n": "a"}, {"n": "b"}]});
        assert_eq!(
            render("{{#each xs}}{{prefix}}{{n}} {{/each}}", ctx).unwrap(),
            "p_a p_b "
        );
    }

    #[test]
    fn unknown_placeholder_is_an_error() {
        let err = render("line1\n{{nope}}", json!({})).unwrap_err();
        assert!(
            matches!(err, TemplateError::UnknownPlaceholder { line: 2, .. }),
            "{err:?}"
        );
        assert!(render("{{#if nope}}x{{/if}}", json!({})).is_err());
    }

    #[test]
    fn malformed_templates() {
        assert!(Template::parse("t", "{{#each xs}}").is_err());
        assert!(Template::parse("t", "{{/if}}").is_err());
        assert!(Template::parse("t", "{{ a b }}").is_err());
        assert!(Template::parse("t", "{{name").is_err());
        assert!(render("{{xs}}", json!({"xs": [1]})).is_err());
    }

    #[test]
    fn deterministic() {
        let t = Template::parse("t", "{{#each m}}{{k}}={{v}};{{/each}}").unwrap();
        let ctx = json!({"m": [{"k": "a", "v": 1}, {"k": "b", "v": 2}]});
        assert_eq!(t.render(&ctx).unwrap(), t.render(&ctx).unwrap());
    }
}
