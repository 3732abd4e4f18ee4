//! Reader for the indentation-based block layout of `.cir` documents: nested
//! `key: value` maps, `- item` lists, and inline `{ k: v }` / `[a, b]` forms.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum NodeKind {
    Scalar(String),
    Map(Vec<(String, Pos, Node)>),
    List(Vec<Node>),
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Node {
    pub pos: Pos,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BlockError {
    pub pos: Pos,
    pub message: String,
}

type Result<T> = std::result::Result<T, BlockError>;

fn err<T>(pos: Pos, message: impl Into<String>) -> Result<T> {
    Err(BlockError {
        pos,
        message: message.into(),
    })
}

#[derive(Clone, Debug)]
struct Line {
    no: usize,
    indent: usize,
    text: String,
}

fn quote_open(s: &str) -> bool {
    let mut open = false;
    let mut escaped = false;
    for c in s.chars() {
        if escaped {
            escaped = false;
        } else if c == '\\' && open {
            escaped = true;
        } else if c == '"' {
            open = !open;
        }
    }
    open
}

fn strip_comment(s: &str) -> &str {
    let mut open = false;
    let mut escaped = false;
    let mut prev_space = true;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' && open {
            escaped = true;
        } else if c == '"' {
            open = !open;
        } else if c == '#' && !open && prev_space {
            return &s[..i];
        }
        prev_space = c.is_whitespace();
    }
    s
}

fn logical_lines(src: &str) -> Result<Vec<Line>> {
    let mut out: Vec<Line> = Vec::new();
    let mut pending: Option<Line> = None;
    for (i, raw) in src.lines().enumerate() {
        let no = i + 1;
        if raw.contains('\t') && raw.trim_start().len() < raw.len() && raw[..raw.len() - raw.trim_start().len()].contains('\t') {
            return err(Pos { line: no, col: 1 }, "tab characters are not allowed in indentation");
        }
        if let Some(mut p) = pending.take() {
            p.text.push(' ');
            p.text.push_str(raw.trim());
            if quote_open(&p.text) {
                pending = Some(p);
            } else {
                out.push(p);
            }
            continue;
        }
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let indent = body.len() - body.trim_start().len();
        let line = Line {
            no,
            indent,
            text: body.trim().to_string(),
        };
        if quote_open(&line.text) {
            pending = Some(line);
        } else {
            out.push(line);
        }
    }
    if let Some(p) = pending {
        return err(Pos { line: p.no, col: p.indent + 1 }, "unterminated string literal");
    }
    Ok(out)
}

/// Splits `s` at top-level occurrences of `sep`, ignoring separators inside
/// quotes or brackets. Returns (byte offset, piece) pairs.
pub(crate) fn split_top(s: &str, sep: char) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut open = false;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if open => escaped = true,
            '"' => open = !open,
            '(' | '[' | '{' if !open => depth += 1,
            ')' | ']' | '}' if !open => depth -= 1,
            c if c == sep && !open && depth == 0 => {
                out.push((start, &s[start..i]));
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push((start, &s[start..]));
    out
}

/// Finds a `key: value` separator: the first top-level colon followed by
/// whitespace or end of input.
fn key_split(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    let mut open = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if open => escaped = true,
            '"' => open = !open,
            '(' | '[' | '{' if !open => depth += 1,
            ')' | ']' | '}' if !open => depth -= 1,
            ':' if !open && depth == 0 => {
                let rest = &s[i + 1..];
                if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                    return Some((s[..i].trim(), rest.trim()));
                }
            }
            _ => {}
        }
    }
    None
}

fn plain_key(k: &str) -> bool {
    !k.is_empty()
        && (k.starts_with('"')
            || k
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.'))
}

fn is_list_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

pub(crate) fn parse_inline(text: &str, pos: Pos) -> Result<Node> {
    let t = text.trim();
    if t.starts_with('{') {
        if !t.ends_with('}') {
            return err(pos, "unterminated `{`");
        }
        let inner = &t[1..t.len() - 1];
        let mut entries = Vec::new();
        if !inner.trim().is_empty() {
            for (off, piece) in split_top(inner, ',') {
                let ppos = Pos {
                    line: pos.line,
                    col: pos.col + 1 + off + (piece.len() - piece.trim_start().len()),
                };
                let piece = piece.trim();
                if piece.is_empty() {
                    return err(ppos, "empty entry in inline map");
                }
                let Some((k, v)) = key_split(piece) else {
                    return err(ppos, format!("expected `key: value`, found `{piece}`"));
                };
                let vpos = Pos {
                    line: ppos.line,
                    col: ppos.col + piece.find(v).unwrap_or(0),
                };
                let node = if v.is_empty() {
                    Node { pos: vpos, kind: NodeKind::Empty }
                } else {
                    parse_inline(v, vpos)?
                };
                entries.push((k.to_string(), ppos, node));
            }
        }
        return Ok(Node {
            pos,
            kind: NodeKind::Map(entries),
        });
    }
    if t.starts_with('[') {
        if !t.ends_with(']') {
            return err(pos, "unterminated `[`");
        }
        let inner = &t[1..t.len() - 1];
        let mut items = Vec::new();
        if !inner.trim().is_empty() {
            for (off, piece) in split_top(inner, ',') {
                let ppos = Pos {
                    line: pos.line,
                    col: pos.col + 1 + off,
                };
                if piece.trim().is_empty() {
                    return err(ppos, "empty item in inline list");
                }
                items.push(parse_inline(piece, ppos)?);
            }
        }
        return Ok(Node {
            pos,
            kind: NodeKind::List(items),
        });
    }
    if !t.starts_with('"') {
        if let Some((k, v)) = key_split(t) {
            if plain_key(k) {
                let vpos = Pos {
                    line: pos.line,
                    col: pos.col + t.find(v).unwrap_or(0),
                };
                let node = if v.is_empty() {
                    Node { pos: vpos, kind: NodeKind::Empty }
                } else {
                    parse_inline(v, vpos)?
                };
                return Ok(Node {
                    pos,
                    kind: NodeKind::Map(vec![(k.to_string(), pos, node)]),
                });
            }
        }
    }
    Ok(Node {
        pos,
        kind: NodeKind::Scalar(t.to_string()),
    })
}

struct Reader {
    lines: Vec<Line>,
    i: usize,
}

impl Reader {
    fn pos(&self, l: &Line) -> Pos {
        Pos {
            line: l.no,
            col: l.indent + 1,
        }
    }

    fn block(&mut self, indent: usize) -> Result<Node> {
        if is_list_item(&self.lines[self.i].text) {
            self.list(indent)
        } else {
            self.map(indent)
        }
    }

    fn map(&mut self, indent: usize) -> Result<Node> {
        let start = self.pos(&self.lines[self.i]);
        let mut entries = Vec::new();
        while self.i < self.lines.len() {
            let line = self.lines[self.i].clone();
            if line.indent < indent || (line.indent == indent && is_list_item(&line.text)) {
                break;
            }
            if line.indent > indent {
                return err(self.pos(&line), "unexpected indentation");
            }
            let pos = self.pos(&line);
            let Some((key, value)) = key_split(&line.text) else {
                return err(pos, format!("expected `key: value`, found `{}`", line.text));
            };
            self.i += 1;
            let node = if !value.is_empty() {
                let vpos = Pos {
                    line: line.no,
                    col: line.indent + 1 + line.text.find(value).unwrap_or(0),
                };
                parse_inline(value, vpos)?
            } else if self.i < self.lines.len() && self.lines[self.i].indent > indent {
                let child = self.lines[self.i].indent;
                self.block(child)?
            } else if self.i < self.lines.len()
                && self.lines[self.i].indent == indent
                && is_list_item(&self.lines[self.i].text)
            {
                self.list(indent)?
            } else {
                Node {
                    pos,
                    kind: NodeKind::Empty,
                }
            };
            entries.push((key.to_string(), pos, node));
        }
        Ok(Node {
            pos: start,
            kind: NodeKind::Map(entries),
        })
    }

    fn list(&mut self, indent: usize) -> Result<Node> {
        let start = self.pos(&self.lines[self.i]);
        let mut items = Vec::new();
        while self.i < self.lines.len() {
            let line = self.lines[self.i].clone();
            if line.indent != indent || !is_list_item(&line.text) {
                if line.indent > indent {
                    return err(self.pos(&line), "unexpected indentation");
                }
                break;
            }
            let content = line.text[1..].trim_start();
            let col = line.indent + (line.text.len() - content.len());
            let pos = Pos { line: line.no, col: col + 1 };
            if content.is_empty() {
                return err(pos, "empty list item");
            }
            let starts_block_map = !content.starts_with(['{', '[', '"'])
                && key_split(content).is_some_and(|(k, _)| plain_key(k));
            if starts_block_map {
                // the item's content column becomes the indentation of a nested map
                self.lines[self.i] = Line {
                    no: line.no,
                    indent: col,
                    text: content.to_string(),
                };
                items.push(self.map(col)?);
            } else {
                self.i += 1;
                items.push(parse_inline(content, pos)?);
            }
        }
        Ok(Node {
            pos: start,
            kind: NodeKind::List(items),
        })
    }
}

/// Parses a whole document into a top-level map node.
pub(crate) fn parse_document(src: &str) -> Result<Node> {
    let lines = logical_lines(src)?;
    if lines.is_empty() {
        return Ok(Node {
            pos: Pos { line: 1, col: 1 },
            kind: NodeKind::Map(Vec::new()),
        });
    }
    let indent = lines[0].indent;
    let mut r = Reader { lines, i: 0 };
    let node = r.map(indent)?;
    if r.i < r.lines.len() {
        let l = &r.lines[r.i];
        return err(r.pos(l), "unexpected content at lower indentation");
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(n: &Node) -> Vec<&str> {
        match &n.kind {
            NodeKind::Map(e) => e.iter().map(|(k, _, _)| k.as_str()).collect(),
            _ => panic!("not a map"),
        }
    }

    #[test]
    fn same_indent_list_under_key() {
        let doc = "threads:\n  worker:\n    body:\n    - { sid: w1, op: lock(m0), next: w2 }\n    - { sid: w2, op: wait(cv0, m0) }\n";
        let n = parse_document(doc).unwrap();
        let NodeKind::Map(top) = &n.kind else { panic!() };
        let NodeKind::Map(threads) = &top[0].2.kind else { panic!() };
        let NodeKind::Map(worker) = &threads[0].2.kind else { panic!() };
        let NodeKind::List(body) = &worker[0].2.kind else { panic!() };
        assert_eq!(body.len(), 2);
        assert_eq!(keys(&body[1]), vec!["sid", "op"]);
    }

    #[test]
    fn inline_nested_map_and_multiline_string() {
        let doc = "protection:  ready: [m0]\ngoals:\n  - id: G1\n    desc: \"Both threads complete,\n           ready flag set\"\n";
        let n = parse_document(doc).unwrap();
        let NodeKind::Map(top) = &n.kind else { panic!() };
        assert_eq!(keys(&top[0].2), vec!["ready"]);
        let NodeKind::List(goals) = &top[1].2.kind else { panic!() };
        let NodeKind::Map(g) = &goals[0].kind else { panic!() };
        assert_eq!(g[1].2.kind, NodeKind::Scalar("\"Both threads complete, ready flag set\"".into()));
    }

    #[test]
    fn comments_and_bad_indent() {
        assert!(parse_document("a: 1 # note\nb: 2\n").is_ok());
        let e = parse_document("a: 1\n   b: 2\n").unwrap_err();
        assert_eq!(e.pos.line, 2);
    }

    #[test]
    fn split_respects_nesting() {
        let parts: Vec<&str> = split_top("op: wait(cv0, m0), next: w3", ',').into_iter().map(|p| p.1).collect();
        assert_eq!(parts, vec!["op: wait(cv0, m0)", " next: w3"]);
    }
}
