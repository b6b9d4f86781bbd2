//! Constituency trees and the validation rules every transformation must preserve.

use std::fmt;

use thiserror::Error;

/// Half-open token span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("node '{label}' has no children")]
    EmptyNode { label: String },
    #[error("node label is empty at span {span}")]
    EmptyLabel { span: Span },
    #[error("node '{label}' mixes terminal and non-terminal children")]
    MixedChildren { label: String },
    #[error("span mismatch at node '{label}': {detail}")]
    SpanMismatch { label: String, detail: String },
    #[error("yield mismatch: leaf terminals do not equal the token sequence")]
    YieldMismatch,
    #[error("dangling intermediate node '{label}' at the root")]
    DanglingIntermediate { label: String },
}

/// Children of a tree node: either child nodes or a single terminal token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeChildren {
    Internal(Vec<TreeNode>),
    Leaf(String),
}

/// A labeled node covering a token span.
///
/// Nodes are immutable once built; the constructors keep spans consistent so
/// a well-formed tree can only be assembled from well-formed parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    label: String,
    span: Span,
    children: NodeChildren,
}

impl TreeNode {
    /// A pre-terminal node: one POS label over one terminal token.
    pub fn pre_terminal(label: impl Into<String>, token: impl Into<String>) -> TreeNode {
        TreeNode {
            label: label.into(),
            span: Span::new(0, 1),
            children: NodeChildren::Leaf(token.into()),
        }
    }

    /// An internal node over child nodes. Child spans are renumbered so the
    /// result covers a contiguous range starting at the first child's start.
    pub fn internal(label: impl Into<String>, children: Vec<TreeNode>) -> TreeNode {
        let mut children = children;
        let start = children.first().map(|c| c.span.start).unwrap_or(0);
        let mut cursor = start;
        for child in &mut children {
            let w = child.span.width();
            child.shift_to(cursor);
            cursor += w;
        }
        TreeNode {
            label: label.into(),
            span: Span::new(start, cursor),
            children: NodeChildren::Internal(children),
        }
    }

    fn shift_to(&mut self, new_start: usize) {
        if self.span.start == new_start {
            return;
        }
        let width = self.span.width();
        let old_start = self.span.start;
        self.span = Span::new(new_start, new_start + width);
        if let NodeChildren::Internal(children) = &mut self.children {
            for child in children {
                let offset = child.span.start - old_start;
                child.shift_to(new_start + offset);
            }
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn children(&self) -> &NodeChildren {
        &self.children
    }

    pub fn is_pre_terminal(&self) -> bool {
        matches!(self.children, NodeChildren::Leaf(_))
    }

    pub fn terminal(&self) -> Option<&str> {
        match &self.children {
            NodeChildren::Leaf(tok) => Some(tok),
            NodeChildren::Internal(_) => None,
        }
    }

    pub fn child_nodes(&self) -> &[TreeNode] {
        match &self.children {
            NodeChildren::Internal(kids) => kids,
            NodeChildren::Leaf(_) => &[],
        }
    }

    /// Pre-order traversal over all nodes.
    pub fn walk(&self) -> TreeWalk<'_> {
        TreeWalk { stack: vec![self] }
    }

    fn collect_yield(&self, out: &mut Vec<String>) {
        match &self.children {
            NodeChildren::Leaf(tok) => out.push(tok.clone()),
            NodeChildren::Internal(kids) => {
                for k in kids {
                    k.collect_yield(out);
                }
            }
        }
    }

    fn validate(&self) -> Result<(), TreeError> {
        if self.label.is_empty() {
            return Err(TreeError::EmptyLabel { span: self.span });
        }
        match &self.children {
            NodeChildren::Leaf(_) => {
                if self.span.width() != 1 {
                    return Err(TreeError::SpanMismatch {
                        label: self.label.clone(),
                        detail: format!("pre-terminal spans {} tokens", self.span.width()),
                    });
                }
                Ok(())
            }
            NodeChildren::Internal(kids) => {
                if kids.is_empty() {
                    return Err(TreeError::EmptyNode {
                        label: self.label.clone(),
                    });
                }
                let mut cursor = self.span.start;
                for kid in kids {
                    if kid.span.start != cursor {
                        return Err(TreeError::SpanMismatch {
                            label: self.label.clone(),
                            detail: format!(
                                "child '{}' starts at {} but expected {}",
                                kid.label, kid.span.start, cursor
                            ),
                        });
                    }
                    cursor = kid.span.end;
                    kid.validate()?;
                }
                if cursor != self.span.end {
                    return Err(TreeError::SpanMismatch {
                        label: self.label.clone(),
                        detail: format!("children end at {} but node ends at {}", cursor, self.span.end),
                    });
                }
                Ok(())
            }
        }
    }
}

pub struct TreeWalk<'a> {
    stack: Vec<&'a TreeNode>,
}

impl<'a> Iterator for TreeWalk<'a> {
    type Item = &'a TreeNode;

    fn next(&mut self) -> Option<&'a TreeNode> {
        let node = self.stack.pop()?;
        if let NodeChildren::Internal(kids) = &node.children {
            for kid in kids.iter().rev() {
                self.stack.push(kid);
            }
        }
        Some(node)
    }
}

/// A constituency parse over a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstTree {
    root: TreeNode,
    tokens: Vec<String>,
}

impl ConstTree {
    /// Wrap a root node, checking every tree invariant.
    pub fn new(root: TreeNode) -> Result<ConstTree, TreeError> {
        root.validate()?;
        if root.span.start != 0 {
            return Err(TreeError::SpanMismatch {
                label: root.label.clone(),
                detail: format!("root starts at {} instead of 0", root.span.start),
            });
        }
        let mut tokens = Vec::with_capacity(root.span.width());
        root.collect_yield(&mut tokens);
        if tokens.len() != root.span.width() {
            return Err(TreeError::YieldMismatch);
        }
        Ok(ConstTree { root, tokens })
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// The surface tokens (the tree's yield).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Re-check all invariants; cheap enough to run after any transformation.
    pub fn validate(&self) -> Result<(), TreeError> {
        self.root.validate()?;
        let mut tokens = Vec::new();
        self.root.collect_yield(&mut tokens);
        if tokens != self.tokens {
            return Err(TreeError::YieldMismatch);
        }
        Ok(())
    }
}
