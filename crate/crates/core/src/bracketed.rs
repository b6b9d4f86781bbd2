//! Penn-style bracketed tree reading and writing.
//!
//! The on-disk format is UTF-8 text with one tree per line; blank lines are
//! ignored and lines whose first character is `#` are comments. Function tags
//! (`NP-SBJ`, `PP=2`) are stripped at load. Literal parentheses in tokens are
//! escaped as `-LRB-`/`-RRB-` on output and unescaped on input.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{ConstTree, NodeChildren, TreeError, TreeNode};

#[derive(Debug, Error)]
pub enum BracketError {
    #[error("unbalanced parentheses at line {line}, column {col}")]
    Unbalanced { line: usize, col: usize },
    #[error("empty constituent at line {line}, column {col}")]
    EmptyConstituent { line: usize, col: usize },
    #[error("node '{label}' at line {line}, column {col} mixes terminal and non-terminal children")]
    MixedChildren {
        label: String,
        line: usize,
        col: usize,
    },
    #[error("stray token '{token}' outside any tree at line {line}, column {col}")]
    StrayToken {
        token: String,
        line: usize,
        col: usize,
    },
    #[error("invalid tree: {0}")]
    Tree(#[from] TreeError),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad provenance record at line {line}: {detail}")]
    Provenance { line: usize, detail: String },
}

/// Where a tree came from: the original treebank or a self-training round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Source,
    Pseudo { iteration: u32 },
}

impl Provenance {
    pub fn as_tag(&self) -> String {
        match self {
            Provenance::Source => "source".to_string(),
            Provenance::Pseudo { iteration } => format!("pseudo-iteration-{iteration}"),
        }
    }

    pub fn from_tag(tag: &str) -> Option<Provenance> {
        if tag == "source" {
            return Some(Provenance::Source);
        }
        tag.strip_prefix("pseudo-iteration-")
            .and_then(|n| n.parse().ok())
            .map(|iteration| Provenance::Pseudo { iteration })
    }
}

/// An ordered collection of trees with per-tree provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Treebank {
    trees: Vec<ConstTree>,
    provenance: Vec<Provenance>,
}

impl Treebank {
    pub fn new() -> Treebank {
        Treebank {
            trees: Vec::new(),
            provenance: Vec::new(),
        }
    }

    pub fn from_trees(trees: Vec<ConstTree>) -> Treebank {
        let provenance = vec![Provenance::Source; trees.len()];
        Treebank { trees, provenance }
    }

    pub fn push(&mut self, tree: ConstTree, provenance: Provenance) {
        self.trees.push(tree);
        self.provenance.push(provenance);
    }

    pub fn trees(&self) -> &[ConstTree] {
        &self.trees
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConstTree, Provenance)> {
        self.trees.iter().zip(self.provenance.iter().copied())
    }

    /// Trees carrying a pseudo tag, i.e. the accumulated selections.
    pub fn pseudo_trees(&self) -> impl Iterator<Item = (&ConstTree, u32)> {
        self.iter().filter_map(|(t, p)| match p {
            Provenance::Pseudo { iteration } => Some((t, iteration)),
            Provenance::Source => None,
        })
    }
}

impl Default for Treebank {
    fn default() -> Self {
        Treebank::new()
    }
}

#[derive(Debug, Clone, Copy)]
enum Token<'a> {
    Open { line: usize, col: usize },
    Close { line: usize, col: usize },
    Atom { text: &'a str, line: usize, col: usize },
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut at_line_start = true;
    let bytes = text.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if at_line_start && c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        match c {
            '\n' => {
                line += 1;
                col = 1;
                at_line_start = true;
                i += 1;
            }
            c if c.is_whitespace() => {
                col += 1;
                at_line_start = false;
                i += 1;
            }
            '(' => {
                tokens.push(Token::Open { line, col });
                col += 1;
                at_line_start = false;
                i += 1;
            }
            ')' => {
                tokens.push(Token::Close { line, col });
                col += 1;
                at_line_start = false;
                i += 1;
            }
            _ => {
                let start = i;
                let start_col = col;
                while i < bytes.len() {
                    let c = bytes[i] as char;
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    i += 1;
                    col += 1;
                }
                tokens.push(Token::Atom {
                    text: &text[start..i],
                    line,
                    col: start_col,
                });
                at_line_start = false;
            }
        }
    }
    tokens
}

/// Strip PTB function tags and co-indexing: `NP-SBJ=2` becomes `NP`.
/// Labels that start with `-` (e.g. `-LRB-`, `-NONE-`) are kept whole.
fn strip_function_tags(label: &str) -> &str {
    if label.starts_with('-') {
        return label;
    }
    match label.find(|c| c == '-' || c == '=') {
        Some(pos) if pos > 0 => &label[..pos],
        _ => label,
    }
}

fn unescape_token(token: &str) -> String {
    match token {
        "-LRB-" => "(".to_string(),
        "-RRB-" => ")".to_string(),
        _ => token.to_string(),
    }
}

fn escape_token(token: &str) -> &str {
    match token {
        "(" => "-LRB-",
        ")" => "-RRB-",
        _ => token,
    }
}

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_line: usize,
    end_col: usize,
}

enum RawChild {
    Node(RawNode),
    Terminal(String),
}

struct RawNode {
    label: String,
    line: usize,
    col: usize,
    children: Vec<RawChild>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Parser<'a> {
        let end_line = text.lines().count().max(1);
        let end_col = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        Parser {
            tokens: tokenize(text),
            pos: 0,
            end_line,
            end_col,
        }
    }

    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.tokens.get(self.pos).copied();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn unbalanced_at_end(&self) -> BracketError {
        BracketError::Unbalanced {
            line: self.end_line,
            col: self.end_col,
        }
    }

    fn parse_all(&mut self) -> Result<Vec<RawNode>, BracketError> {
        let mut roots = Vec::new();
        while let Some(tok) = self.peek() {
            match tok {
                Token::Open { .. } => {
                    roots.push(self.parse_node()?);
                }
                Token::Close { line, col } => {
                    return Err(BracketError::Unbalanced { line, col });
                }
                Token::Atom { text, line, col } => {
                    return Err(BracketError::StrayToken {
                        token: text.to_string(),
                        line,
                        col,
                    });
                }
            }
        }
        Ok(roots)
    }

    fn parse_node(&mut self) -> Result<RawNode, BracketError> {
        let (open_line, open_col) = match self.next() {
            Some(Token::Open { line, col }) => (line, col),
            _ => return Err(self.unbalanced_at_end()),
        };
        let label = match self.peek() {
            Some(Token::Atom { text, .. }) => {
                self.next();
                text.to_string()
            }
            _ => String::new(),
        };
        let mut children = Vec::new();
        loop {
            match self.peek() {
                Some(Token::Open { .. }) => children.push(RawChild::Node(self.parse_node()?)),
                Some(Token::Atom { text, .. }) => {
                    self.next();
                    children.push(RawChild::Terminal(text.to_string()));
                }
                Some(Token::Close { .. }) => {
                    self.next();
                    break;
                }
                None => return Err(self.unbalanced_at_end()),
            }
        }
        if label.is_empty() && children.is_empty() {
            return Err(BracketError::EmptyConstituent {
                line: open_line,
                col: open_col,
            });
        }
        Ok(RawNode {
            label,
            line: open_line,
            col: open_col,
            children,
        })
    }
}

fn build_node(raw: RawNode) -> Result<TreeNode, BracketError> {
    if raw.children.is_empty() {
        return Err(BracketError::EmptyConstituent {
            line: raw.line,
            col: raw.col,
        });
    }
    let label = strip_function_tags(&raw.label).to_string();
    if raw.children.iter().all(|c| matches!(c, RawChild::Terminal(_))) {
        if raw.children.len() > 1 {
            return Err(BracketError::MixedChildren {
                label,
                line: raw.line,
                col: raw.col,
            });
        }
        let token = match raw.children.into_iter().next() {
            Some(RawChild::Terminal(t)) => t,
            _ => unreachable!(),
        };
        return Ok(TreeNode::pre_terminal(label, unescape_token(&token)));
    }
    if raw.children.iter().any(|c| matches!(c, RawChild::Terminal(_))) {
        return Err(BracketError::MixedChildren {
            label,
            line: raw.line,
            col: raw.col,
        });
    }
    let kids = raw
        .children
        .into_iter()
        .map(|c| match c {
            RawChild::Node(n) => build_node(n),
            RawChild::Terminal(_) => unreachable!(),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TreeNode::internal(label, kids))
}

/// Parse zero or more bracketed trees from text.
///
/// A labelless or `ROOT`/`TOP` outer wrapper with a single child is
/// normalized to an explicit `ROOT` label.
pub fn parse_bracketed(text: &str) -> Result<Vec<ConstTree>, BracketError> {
    let mut parser = Parser::new(text);
    let roots = parser.parse_all()?;
    let mut trees = Vec::with_capacity(roots.len());
    for raw in roots {
        let raw = normalize_wrapper(raw)?;
        let node = build_node(raw)?;
        trees.push(ConstTree::new(node)?);
    }
    Ok(trees)
}

fn normalize_wrapper(raw: RawNode) -> Result<RawNode, BracketError> {
    let single_node_child =
        raw.children.len() == 1 && matches!(raw.children[0], RawChild::Node(_));
    if single_node_child && (raw.label.is_empty() || raw.label == "ROOT" || raw.label == "TOP") {
        return Ok(RawNode {
            label: "ROOT".to_string(),
            ..raw
        });
    }
    if raw.label.is_empty() {
        return Err(BracketError::EmptyConstituent {
            line: raw.line,
            col: raw.col,
        });
    }
    Ok(raw)
}

fn write_node(node: &TreeNode, out: &mut String) {
    out.push('(');
    out.push_str(node.label());
    match node.children() {
        NodeChildren::Leaf(token) => {
            out.push(' ');
            out.push_str(escape_token(token));
        }
        NodeChildren::Internal(kids) => {
            for kid in kids {
                out.push(' ');
                write_node(kid, out);
            }
        }
    }
    out.push(')');
}

/// Render one tree on one line in canonical single-space form.
pub fn tree_to_string(tree: &ConstTree) -> String {
    let mut out = String::new();
    write_node(tree.root(), &mut out);
    out
}

/// Render trees one per line. The inverse of [`parse_bracketed`] on valid trees.
pub fn write_bracketed(trees: &[ConstTree]) -> String {
    trees
        .iter()
        .map(tree_to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Serialize, Deserialize)]
struct ProvenanceRecord {
    index: usize,
    provenance: String,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".prov.jsonl");
    std::path::PathBuf::from(s)
}

fn io_err(path: &Path, source: std::io::Error) -> BracketError {
    BracketError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Load a treebank file plus its optional provenance sidecar.
pub fn load_treebank(path: &Path) -> Result<Treebank, BracketError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let trees = parse_bracketed(&text)?;
    let mut bank = Treebank::from_trees(trees);
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| io_err(&sidecar, e))?;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ProvenanceRecord =
                serde_json::from_str(line).map_err(|e| BracketError::Provenance {
                    line: lineno + 1,
                    detail: e.to_string(),
                })?;
            let prov = Provenance::from_tag(&rec.provenance).ok_or_else(|| {
                BracketError::Provenance {
                    line: lineno + 1,
                    detail: format!("unknown tag '{}'", rec.provenance),
                }
            })?;
            if rec.index >= bank.len() {
                return Err(BracketError::Provenance {
                    line: lineno + 1,
                    detail: format!("index {} out of range ({} trees)", rec.index, bank.len()),
                });
            }
            bank.provenance[rec.index] = prov;
        }
    }
    Ok(bank)
}

/// Write a treebank file; a provenance sidecar is written whenever any tree
/// is tagged pseudo, so tags survive round-trips.
pub fn save_treebank(bank: &Treebank, path: &Path) -> Result<(), BracketError> {
    let mut text = write_bracketed(bank.trees());
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))?;
    let sidecar = sidecar_path(path);
    if bank
        .provenance()
        .iter()
        .any(|p| !matches!(p, Provenance::Source))
    {
        let mut f = fs::File::create(&sidecar).map_err(|e| io_err(&sidecar, e))?;
        for (index, prov) in bank.provenance().iter().enumerate() {
            let rec = ProvenanceRecord {
                index,
                provenance: prov.as_tag(),
            };
            let line = serde_json::to_string(&rec).expect("provenance record serializes");
            writeln!(f, "{line}").map_err(|e| io_err(&sidecar, e))?;
        }
    } else if sidecar.exists() {
        fs::remove_file(&sidecar).map_err(|e| io_err(&sidecar, e))?;
    }
    Ok(())
}
