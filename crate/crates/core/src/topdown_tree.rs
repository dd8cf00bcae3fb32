//! Top-down Tree LSTM: every root-to-node path is run as a sequential
//! LSTM, with one transition set for left children and one for right
//! children. The root starts from the zero state with its own set.

use std::fmt;

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Var};
use crate::error::{Error, Result};
use crate::seq_lstm::{cell, zero_state, CellInputs, SeqParams, SeqState};
use crate::treebank::{BinaryTree, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Root,
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Root => "root",
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Clone, Debug)]
pub struct TopDownParams {
    pub root: SeqParams,
    pub left: SeqParams,
    pub right: SeqParams,
    /// Feed the parent's head into `g` and squash the parent's cell into
    /// `h`, as the equations are printed. Off by default.
    pub literal: bool,
}

impl TopDownParams {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, prefix: &str, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Result<Self> {
        Ok(TopDownParams {
            root: SeqParams::new(params, &format!("{prefix}.root"), input_dim, hidden_dim, rng)?,
            left: SeqParams::new(params, &format!("{prefix}.left"), input_dim, hidden_dim, rng)?,
            right: SeqParams::new(params, &format!("{prefix}.right"), input_dim, hidden_dim, rng)?,
            literal: false,
        })
    }

    pub fn side(&self, side: Side) -> &SeqParams {
        match side {
            Side::Root => &self.root,
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        [&self.root, &self.left, &self.right]
            .iter()
            .flat_map(|p| p.ids())
            .collect()
    }

    pub fn hidden_dim(&self) -> usize {
        self.root.hidden_dim
    }
}

pub type DownNodeState = SeqState;

/// One downward transition. `parent_head` only matters in literal mode
/// (zeros stand in for the root's missing predecessor).
pub fn step_down(
    g: &mut Graph<'_>,
    x: Var,
    parent: &DownNodeState,
    parent_head: Option<Var>,
    side: Side,
    p: &TopDownParams,
) -> Result<DownNodeState> {
    let sp = p.side(side);
    let mode = if p.literal {
        let g_input = match parent_head {
            Some(v) => v,
            None => g.zeros(sp.input_dim),
        };
        CellInputs::Literal { g_input }
    } else {
        CellInputs::Standard
    };
    cell(g, x, parent, sp, mode)
}

/// States for every node (leaves included), indexed by node id.
pub fn encode_down(g: &mut Graph<'_>, tree: &BinaryTree, heads: &[Var], p: &TopDownParams) -> Result<Vec<DownNodeState>> {
    if heads.len() != tree.len() {
        return Err(Error::Invalid(format!(
            "top-down pass needs a head for each of the {} nodes, got {}",
            tree.len(),
            heads.len()
        )));
    }
    let mut states: Vec<Option<DownNodeState>> = vec![None; tree.len()];
    let root = tree.root();
    let zero = zero_state(g, p.hidden_dim());
    states[root] = Some(step_down(g, heads[root], &zero, None, Side::Root, p)?);
    for id in tree.pre_order() {
        if let NodeKind::Branch { left, right } = tree.node(id).kind {
            let parent = states[id].expect("pre-order visits parents first");
            for (child, side) in [(left, Side::Left), (right, Side::Right)] {
                states[child] = Some(step_down(g, heads[child], &parent, Some(heads[id]), side, p)?);
            }
        }
    }
    Ok(states.into_iter().map(|s| s.expect("every node visited")).collect())
}
