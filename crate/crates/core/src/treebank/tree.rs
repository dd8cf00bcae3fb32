use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { token: String },
    Branch { left: NodeId, right: NodeId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// Bracket label exactly as written, if any.
    pub tag: Option<String>,
    /// Class id used for supervision.
    pub label: Option<usize>,
    /// Half-open token interval covered by the node.
    pub span: (usize, usize),
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn token(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Leaf { token } => Some(token),
            NodeKind::Branch { .. } => None,
        }
    }

    pub fn children(&self) -> Option<(NodeId, NodeId)> {
        match self.kind {
            NodeKind::Branch { left, right } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }
}

/// Strictly binary constituency tree stored as an arena.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryTree {
    nodes: Vec<TreeNode>,
    root: NodeId,
    leaves: Vec<NodeId>,
}

/// Incremental constructor; children must be created before their parent.
#[derive(Default)]
pub struct TreeBuilder {
    nodes: Vec<TreeNode>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn leaf(&mut self, token: impl Into<String>, tag: Option<String>) -> NodeId {
        self.push(NodeKind::Leaf { token: token.into() }, tag)
    }

    pub fn branch(&mut self, left: NodeId, right: NodeId, tag: Option<String>) -> NodeId {
        self.push(NodeKind::Branch { left, right }, tag)
    }

    fn push(&mut self, kind: NodeKind, tag: Option<String>) -> NodeId {
        let label = tag.as_deref().and_then(|t| t.parse().ok());
        self.nodes.push(TreeNode {
            kind,
            tag,
            label,
            span: (0, 0),
        });
        self.nodes.len() - 1
    }

    /// Validates that every node hangs exactly once under `root` and
    /// computes spans.
    pub fn finish(self, root: NodeId) -> Result<BinaryTree> {
        let mut nodes = self.nodes;
        if root >= nodes.len() {
            return Err(Error::Invalid(format!("root {root} out of range")));
        }
        let mut seen = vec![false; nodes.len()];
        let mut leaves = Vec::new();
        // explicit stack; Enter/Exit so spans can be set on the way out
        let mut stack = vec![(root, false)];
        while let Some((id, exiting)) = stack.pop() {
            if exiting {
                let (l, r) = nodes[id].children().expect("only branches are revisited");
                nodes[id].span = (nodes[l].span.0, nodes[r].span.1);
                continue;
            }
            if id >= nodes.len() {
                return Err(Error::Invalid(format!("child id {id} out of range")));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::Invalid(format!("node {id} reached twice")));
            }
            match nodes[id].kind {
                NodeKind::Leaf { .. } => {
                    nodes[id].span = (leaves.len(), leaves.len() + 1);
                    leaves.push(id);
                }
                NodeKind::Branch { left, right } => {
                    stack.push((id, true));
                    stack.push((right, false));
                    stack.push((left, false));
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!("node {orphan} is not under the root")));
        }
        Ok(BinaryTree {
            nodes,
            root,
            leaves,
        })
    }
}

impl BinaryTree {
    /// Parses one labeled bracketing such as `(3 (2 good) (2 movie))`.
    ///
    /// A bare token inside a branch becomes an unlabeled leaf, so
    /// `(NP the dog)` is accepted. Branches must have exactly two children.
    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut TreeNode {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf ids in left-to-right token order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn tokens(&self) -> Vec<&str> {
        self.leaves
            .iter()
            .map(|&l| self.nodes[l].token().expect("leaf"))
            .collect()
    }

    /// Children before parents, left before right.
    pub fn post_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((id, exiting)) = stack.pop() {
            match self.nodes[id].children() {
                Some((l, r)) if !exiting => {
                    stack.push((id, true));
                    stack.push((r, false));
                    stack.push((l, false));
                }
                _ => out.push(id),
            }
        }
        out
    }

    /// Parents before children, left before right.
    pub fn pre_order(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some((l, r)) = self.nodes[id].children() {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// Parent of every node (`None` at the root).
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut out = vec![None; self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            if let Some((l, r)) = n.children() {
                out[l] = Some(id);
                out[r] = Some(id);
            }
        }
        out
    }

    /// Leaf ids inside the span of `id`, in order.
    pub fn leaves_under(&self, id: NodeId) -> &[NodeId] {
        let (s, e) = self.nodes[id].span;
        &self.leaves[s..e]
    }

    pub fn branches(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.post_order()
            .into_iter()
            .filter(move |&id| !self.nodes[id].is_leaf())
    }

    /// `(tag, start, end)` of every branch node; the bracket set used for
    /// labeled-bracket comparisons.
    pub fn brackets(&self) -> BTreeSet<(String, usize, usize)> {
        self.branches()
            .map(|id| {
                let n = &self.nodes[id];
                (n.tag.clone().unwrap_or_default(), n.span.0, n.span.1)
            })
            .collect()
    }

    /// Errors if any label falls outside `[0, num_classes)`.
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        for (id, n) in self.nodes.iter().enumerate() {
            if let Some(l) = n.label {
                if l >= num_classes {
                    return Err(Error::Invalid(format!(
                        "node {id} has label {l}, expected < {num_classes}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rewrites every label through `f`.
    pub fn map_labels(&mut self, f: impl Fn(&TreeNode) -> Option<usize>) {
        for i in 0..self.nodes.len() {
            let l = f(&self.nodes[i]);
            self.nodes[i].label = l;
        }
    }

    pub fn to_sexpr(&self) -> String {
        let mut out = String::new();
        self.write_node(self.root, &mut out);
        out
    }

    fn write_node(&self, id: NodeId, out: &mut String) {
        let n = &self.nodes[id];
        match (&n.kind, &n.tag) {
            (NodeKind::Leaf { token }, None) => out.push_str(token),
            (NodeKind::Leaf { token }, Some(tag)) => {
                out.push('(');
                out.push_str(tag);
                out.push(' ');
                out.push_str(token);
                out.push(')');
            }
            (NodeKind::Branch { left, right }, tag) => {
                out.push('(');
                out.push_str(tag.as_deref().unwrap_or("X"));
                out.push(' ');
                self.write_node(*left, out);
                out.push(' ');
                self.write_node(*right, out);
                out.push(')');
            }
        }
    }
}

impl fmt::Display for BinaryTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_sexpr())
    }
}

enum Item {
    Node(NodeId),
    Atom(String),
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    builder: TreeBuilder,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            text,
            pos: 0,
            builder: TreeBuilder::new(),
        }
    }

    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::TreeParse {
            pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn atom(&mut self) -> String {
        let rest = &self.text[self.pos..];
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
            .unwrap_or(rest.len());
        self.pos += end;
        rest[..end].to_string()
    }

    fn parse(mut self) -> Result<BinaryTree> {
        self.skip_ws();
        if self.pos == self.text.len() {
            return self.err(self.pos, "empty input");
        }
        if self.peek() != Some('(') {
            return self.err(self.pos, "expected '('");
        }
        let root = match self.item()? {
            Item::Node(id) => id,
            Item::Atom(..) => unreachable!("checked for '('"),
        };
        self.skip_ws();
        if self.pos != self.text.len() {
            return self.err(self.pos, "trailing input after tree");
        }
        self.builder.finish(root)
    }

    fn item(&mut self) -> Result<Item> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => self.err(start, "unbalanced parentheses: unexpected end of input"),
            Some(')') => self.err(start, "unexpected ')'"),
            Some('(') => {
                self.pos += 1;
                self.skip_ws();
                match self.peek() {
                    Some('(') | Some(')') => return self.err(self.pos, "empty label"),
                    None => return self.err(self.pos, "unbalanced parentheses: unexpected end of input"),
                    _ => {}
                }
                let tag = self.atom();
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        None => {
                            return self.err(self.pos, "unbalanced parentheses: missing ')'")
                        }
                        _ => children.push(self.item()?),
                    }
                }
                let id = match children.len() {
                    0 => return self.err(start, format!("bracket {tag:?} has no children")),
                    1 => match children.pop().expect("len 1") {
                        Item::Atom(token) => self.builder.leaf(token, Some(tag)),
                        Item::Node(_) => {
                            return self.err(start, format!("unary branch {tag:?}: branches need exactly 2 children"))
                        }
                    },
                    2 => {
                        let right = self.as_node(children.pop().expect("len 2"));
                        let left = self.as_node(children.pop().expect("len 2"));
                        self.builder.branch(left, right, Some(tag))
                    }
                    n => {
                        return self.err(
                            start,
                            format!("branch {tag:?} has {n} children; only binary trees are accepted"),
                        )
                    }
                };
                Ok(Item::Node(id))
            }
            Some(_) => {
                let tok = self.atom();
                Ok(Item::Atom(tok))
            }
        }
    }

    fn as_node(&mut self, item: Item) -> NodeId {
        match item {
            Item::Node(id) => id,
            Item::Atom(tok) => self.builder.leaf(tok, None),
        }
    }
}
