//! Tree binarization for the chart parser and its exact inverse.
//!
//! Right-binarization with full sibling context in the intermediate labels
//! (`X|B_C`), so the transformed grammar derives exactly the original trees.
//! Unary chains over internal nodes are collapsed into `+`-joined composite
//! labels (`S+VP`); the only single-child nodes left after binarization sit
//! directly above a pre-terminal.

use crate::tree::{ConstTree, TreeError, TreeNode};

/// Marker that separates a parent label from its sibling context in
/// intermediate nodes introduced by binarization.
pub const INTERMEDIATE_MARKER: char = '|';

/// Joins the labels of a collapsed unary chain.
pub const UNARY_JOIN: char = '+';

/// True for labels introduced by [`binarize`] rather than read from data.
pub fn is_intermediate_label(label: &str) -> bool {
    label.contains(INTERMEDIATE_MARKER)
}

fn collapse_unaries(node: &TreeNode) -> TreeNode {
    if node.is_pre_terminal() {
        return node.clone();
    }
    let mut label = node.label().to_string();
    let mut current = node;
    // absorb single internal children; stop above pre-terminals
    while current.child_nodes().len() == 1 && !current.child_nodes()[0].is_pre_terminal() {
        let child = &current.child_nodes()[0];
        label.push(UNARY_JOIN);
        label.push_str(child.label());
        current = child;
    }
    let kids = current.child_nodes().iter().map(collapse_unaries).collect();
    TreeNode::internal(label, kids)
}

fn binarize_node(node: &TreeNode) -> TreeNode {
    if node.is_pre_terminal() {
        return node.clone();
    }
    let mut kids: Vec<TreeNode> = node.child_nodes().iter().map(binarize_node).collect();
    if kids.len() <= 2 {
        return TreeNode::internal(node.label().to_string(), kids);
    }
    let rest = kids.split_off(1);
    let first = kids.pop().expect("at least one child");
    let right = intermediate_chain(node.label(), rest);
    TreeNode::internal(node.label().to_string(), vec![first, right])
}

fn intermediate_chain(parent: &str, mut kids: Vec<TreeNode>) -> TreeNode {
    let context = kids
        .iter()
        .map(|k| k.label().to_string())
        .collect::<Vec<_>>()
        .join("_");
    let label = format!("{parent}{INTERMEDIATE_MARKER}{context}");
    if kids.len() == 2 {
        return TreeNode::internal(label, kids);
    }
    let rest = kids.split_off(1);
    let first = kids.pop().expect("at least one child");
    let right = intermediate_chain(parent, rest);
    TreeNode::internal(label, vec![first, right])
}

/// Transform a tree so every node has at most two children.
pub fn binarize(tree: &ConstTree) -> ConstTree {
    let collapsed = collapse_unaries(tree.root());
    let binary = binarize_node(&collapsed);
    ConstTree::new(binary).expect("binarization preserves validity")
}

fn expand_label(label: &str, kids: Vec<TreeNode>) -> TreeNode {
    let mut parts = label.split(UNARY_JOIN).rev();
    let innermost = parts.next().expect("split yields at least one part");
    let mut node = TreeNode::internal(innermost.to_string(), kids);
    for part in parts {
        node = TreeNode::internal(part.to_string(), vec![node]);
    }
    node
}

fn debinarize_node(node: &TreeNode) -> TreeNode {
    if node.is_pre_terminal() {
        return node.clone();
    }
    let mut kids = Vec::new();
    for child in node.child_nodes() {
        let processed = debinarize_node(child);
        if is_intermediate_label(processed.label()) {
            kids.extend(processed.child_nodes().to_vec());
        } else {
            kids.push(processed);
        }
    }
    if is_intermediate_label(node.label()) {
        // parent splices these children; keep the marker label for it to see
        return TreeNode::internal(node.label().to_string(), kids);
    }
    expand_label(node.label(), kids)
}

/// Invert [`binarize`]: splice out intermediate nodes and re-expand
/// collapsed unary chains.
pub fn debinarize(tree: &ConstTree) -> Result<ConstTree, TreeError> {
    let root = debinarize_node(tree.root());
    if is_intermediate_label(root.label()) {
        return Err(TreeError::DanglingIntermediate {
            label: root.label().to_string(),
        });
    }
    ConstTree::new(root)
}
